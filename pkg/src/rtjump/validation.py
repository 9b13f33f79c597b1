"""The invariant suite behind ``rtjump validate``.

Each check yields a row ``(name, passed, detail)``.  The Monte Carlo part
reruns the exact-decay experiment for the configured kernel.
"""

from __future__ import annotations

import math

import numpy as np

from .experiments import moment_decay_experiment
from .harmonics import SpectralTable, gamma_multiplier_R
from .kernel import KernelSpec, auto_eta, integrate_w, mathfrak_C, pure_mathfrak_C
from .process import ProcessConfig, get_sampler, path_rng, simulate
from .sphere import jump, tangent_direction, uniform_on_sphere

BETA_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)


def constant_checks():
    rows = []
    worst = 0.0
    for d in (1, 2, 3):
        for beta in BETA_GRID:
            spec = KernelSpec.pure(d, beta, 1.0)
            worst = max(worst, abs(mathfrak_C(spec) / pure_mathfrak_C(d, beta, 1.0) - 1.0))
    rows.append(("mean rate vs Beta closed form", worst <= 1e-10, f"max rel err {worst:.2e}"))
    return rows


def spectral_checks(spec: KernelSpec):
    rows = []
    table = SpectralTable.build(spec, 32)
    c = mathfrak_C(spec)
    rows.append(("mu_0 = 0", table.mu[0] == 0.0, f"mu_0 = {float(table.mu[0])!r}"))
    err = abs(table.mu[1] / c - 1.0)
    rows.append(("mu_1 = C", err <= 1e-10, f"rel err {err:.2e}"))
    rows.append(("R_0 = 0", table.R[0] == 0.0, f"R_0 = {float(table.R[0])!r}"))
    for d in (1, 2, 3):
        pure = SpectralTable.build(KernelSpec.pure(d, spec.beta), 32)
        ratio = pure.mu[1:] / pure.R[1:]
        spread = float(np.ptp(ratio) / abs(ratio[0]))
        rows.append((f"mu_n / R_n constant (d={d})", spread <= 1e-6, f"rel spread {spread:.2e}"))
    big = SpectralTable.build(spec, 128).sandwich_ratio()
    band = float(big.max() / big.min())
    rows.append(("(1+mu_n)/(1+lambda_n^beta) band", band <= 10.0, f"max/min {band:.3f}"))
    r = gamma_multiplier_R(spec.d, spec.beta, np.array([512, 1024]))
    growth = abs(r[1] / r[0] / 2 ** (2 * spec.beta) - 1.0)
    rows.append(("R_2n / R_n -> 2^(2 beta)", growth <= 0.01, f"rel err {growth:.2e} at n=512"))
    return rows


def geometry_checks(seed: int):
    rows = []
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(2 ** 32 + 1,))))
    worst_norm = worst_cos = worst_ortho = 0.0
    for d in (1, 2, 3, 4):
        ks = uniform_on_sphere(d, rng, size=200)
        for k in ks:
            u = tangent_direction(k, rng)
            s = rng.uniform(-1, 1)
            kp = jump(k, s, u)
            worst_ortho = max(worst_ortho, abs(u @ k))
            worst_norm = max(worst_norm, abs(kp @ kp - 1.0))
            worst_cos = max(worst_cos, abs(kp @ k - s))
    rows.append(("tangent orthogonal to k", worst_ortho <= 1e-12, f"max |u.k| {worst_ortho:.1e}"))
    rows.append(("jump stays on the sphere", worst_norm <= 1e-12, f"max ||k'|^2 - 1| {worst_norm:.1e}"))
    rows.append(("jump cosine equals s", worst_cos <= 1e-12, f"max |k'.k - s| {worst_cos:.1e}"))
    drift = 0.0
    for d in (1, 2, 3):
        tr = simulate(ProcessConfig(KernelSpec.pure(d, 0.5), 1e-4, 5.0, seed=seed))
        drift = max(drift, float(np.max(np.abs(np.einsum("ij,ij->i", tr.momenta, tr.momenta) - 1.0))))
    rows.append(("long paths keep |m| = 1", drift <= 1e-12, f"max drift {drift:.1e}"))
    return rows


def sampler_checks(spec: KernelSpec, seed: int, n: int = 20000):
    """Kolmogorov-Smirnov distance of sampled ``1 - s`` against the exact law."""
    eta = auto_eta(spec, 0.01, 1.0, 10 ** 4)
    sampler = get_sampler(spec, eta)
    w = np.sort(sampler.sample_w(path_rng(seed, 2 ** 40), n))
    grid = np.unique(np.quantile(w, np.linspace(0.005, 0.995, 100)))
    total = float(integrate_w(spec, wl=eta, wu=2.0))
    exact = np.array([float(integrate_w(spec, wl=eta, wu=x)) / total for x in grid])
    emp = np.searchsorted(w, grid, side="right") / n
    dist = float(np.max(np.abs(emp - exact)))
    crit = 1.95 / math.sqrt(n)  # 0.1% level
    return [("jump-cosine sampler (KS)", dist <= crit, f"D = {dist:.4f}, critical {crit:.4f}")]


def run_suite(rc):
    spec = rc.kernel()
    seed = rc["process.seed"]
    rows = constant_checks() + spectral_checks(spec) + geometry_checks(seed) + sampler_checks(spec, seed)
    n = rc["experiment.paths"]
    eta = rc["process.eta"]
    if eta is None:
        eta = auto_eta(spec, 1 / math.sqrt(n), 1.0, n)
        rc.set("process.eta", eta, "auto")
    rep = moment_decay_experiment(rc.process(eta, 1.0), (1, 2, 3), (0.5, 1.0), n, workers=rc.workers)
    for p in rep.points:
        rows.append((f"E[G_{p['x']['n']}] decay at t={p['x']['t']}", p["pass"],
                     f"z = {p['z']:.2f} (N = {n})"))
    return rows, [rep]
