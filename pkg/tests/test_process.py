import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtjump import _kernels
from rtjump.kernel import KernelDomainError, KernelSpec, integrate_w, truncated_mean_rate, truncated_rate
from rtjump.process import (CosineSampler, EnvelopeViolation, JumpBudgetError, ProcessConfig, diffusive_path,
                            get_sampler, path_rng, peaked_path, sample_jump_cosine, simulate, snapshot)

KERNELS = [
    (KernelSpec.pure(2, 0.5), 1e-4),
    (KernelSpec.pure(1, 0.3), 1e-3),
    (KernelSpec.pure(3, 0.7), 1e-3),
    (KernelSpec.smooth_plus_singular(2, 0.4, 0.05, f1=0.2), 1e-4),
    (KernelSpec.smooth_plus_singular(3, 0.6, 0.05, f1=lambda s: 0.15 + 0.1 * s, a2=lambda s: 0.3 * s, a2_sup=0.3),
     1e-3),
    (KernelSpec.mollified(KernelSpec.pure(2, 0.5), 50.0), 0.0),
    (KernelSpec.mollified(KernelSpec.pure(1, 0.5), 20.0), 0.0),
    (KernelSpec.peaked(2, 0.5, 0.05, 0.25), 1e-4),
]


def _ks_distance(spec, eta, w):
    """Sup distance between the empirical and exact CDF of w on a quantile grid."""
    w = np.sort(w)
    grid = np.unique(np.quantile(w, np.linspace(0.002, 0.998, 250)))
    total = float(integrate_w(spec, wl=eta))
    exact = np.array([float(integrate_w(spec, wl=eta, wu=x)) for x in grid]) / total
    emp = np.searchsorted(w, grid, side="right") / w.size
    return float(np.max(np.abs(emp - exact)))


@pytest.mark.parametrize("spec, eta", KERNELS, ids=lambda v: getattr(v, "family", None) or str(v))
def test_sampler_matches_angular_law(spec, eta):
    n = 40000
    sampler = CosineSampler(spec, eta)
    w = sampler.sample_w(path_rng(3, 0), n)
    assert np.all((w >= eta) & (w <= 2.0))
    # 1.95 / sqrt(n) is the 0.1% Kolmogorov level
    assert _ks_distance(spec, eta, w) < 1.95 / math.sqrt(n)
    if sampler.pieces and not sampler._exact:
        assert sampler.acceptance_rate == pytest.approx(sampler.expected_acceptance, rel=0.05)


def test_sampler_moment_matches_mean_rate():
    # E[1 - s] = C_eta / Lambda(eta)
    spec, eta = KernelSpec.pure(2, 0.5), 1e-3
    w = get_sampler(spec, eta).sample_w(path_rng(0, 1), 200000)
    target = truncated_mean_rate(spec, eta) / truncated_rate(spec, eta)
    assert abs(w.mean() - target) < 4 * w.std() / math.sqrt(w.size)


def test_sampler_domain_and_scalar_form(rng):
    with pytest.raises(KernelDomainError):
        CosineSampler(KernelSpec.pure(2, 0.5), 0.0)
    s = sample_jump_cosine(KernelSpec.pure(2, 0.5), 0.01, rng)
    assert isinstance(s, float) and -1 <= s <= 0.99
    assert sample_jump_cosine(KernelSpec.pure(2, 0.5), 0.01, rng, size=5).shape == (5,)


def test_envelope_violation_is_raised():
    sampler = CosineSampler(KernelSpec.pure(3, 0.5), 1e-3)
    sampler.r_max *= 0.5
    with pytest.raises(EnvelopeViolation):
        sampler.sample_w(path_rng(0, 0), 2000)


# -- compiled composition against a plain reference ---------------------------------------

def _reference_compose(k0, w, g):
    k = k0.copy()
    out = [k.copy()]
    for wi, gi in zip(w, g):
        s = 1.0 - wi
        c = math.sqrt(wi * (2.0 - wi))
        if k.size == 2:
            u = np.sign(gi[0]) * np.array([-k[1], k[0]]) if gi[0] != 0 else np.array([-k[1], k[0]])
        else:
            v = gi - (gi @ k) * k
            u = v / np.linalg.norm(v)
        k = s * k + c * u
        k /= np.linalg.norm(k)
        out.append(k.copy())
    return np.array(out)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 4), seed=st.integers(0, 2 ** 31))
def test_compose_matches_reference(d, seed):
    rng = np.random.Generator(np.random.Philox(seed))
    k0 = rng.standard_normal(d + 1)
    k0 /= np.linalg.norm(k0)
    J = 50
    w = rng.uniform(0, 2, J)
    g = rng.standard_normal((J, 1 if d == 1 else d + 1))
    got = _kernels.compose_full(k0, w, g)
    ref = _reference_compose(k0, w, g)
    assert np.allclose(got, ref, atol=1e-12)
    assert np.allclose(np.einsum("ij,ij->i", got[:-1], got[1:]), 1 - w, atol=1e-12)


def test_compose_degenerate_gaussian_uses_fallback():
    k0 = np.array([0.0, 0.0, 1.0])
    g = np.array([[0.0, 0.0, 2.0]])
    out = _kernels.compose_full(k0, np.array([0.3]), g)
    assert abs(out[1] @ out[1] - 1) < 1e-14
    assert out[1] @ k0 == pytest.approx(0.7, abs=1e-14)


# -- trajectories --------------------------------------------------------------------

def _cfg(**kw):
    base = dict(kernel=KernelSpec.pure(2, 0.5), eta=1e-3, t_max=1.0, k0=(0.0, 0.0, 1.0), seed=11)
    base.update(kw)
    return ProcessConfig(**base)


def test_paths_are_reproducible_and_independent():
    a, b = simulate(_cfg()), simulate(_cfg())
    assert np.array_equal(a.times, b.times) and np.array_equal(a.momenta, b.momenta)
    c = simulate(_cfg().with_path(1))
    assert not np.array_equal(a.times[:5], c.times[:5])
    d = simulate(_cfg(seed=12))
    assert not np.array_equal(a.times[:5], d.times[:5])


def test_jump_count_is_poisson():
    cfg = _cfg(eta=0.01)
    counts = np.array([simulate(cfg.with_path(i)).n_jumps for i in range(3000)])
    lam = truncated_rate(cfg.kernel, cfg.eta)
    assert abs(counts.mean() - lam) < 4 * math.sqrt(lam / counts.size)
    assert counts.var() == pytest.approx(lam, rel=0.1)


def test_trajectory_position_is_exact_integral():
    tr = simulate(_cfg(eta=1e-3, x0=(1.0, 2.0, 3.0)))
    assert np.allclose(tr.position(0.0), [1.0, 2.0, 3.0])
    # between two jumps the position moves linearly with velocity -m
    t0, t1 = tr.times[2], tr.times[3]
    a, b = t0 + 0.25 * (t1 - t0), t0 + 0.75 * (t1 - t0)
    vel = (tr.position(b) - tr.position(a)) / (b - a)
    assert np.allclose(vel, -tr.momentum(a), atol=1e-12)
    # right-continuous momentum
    assert np.array_equal(tr.momentum(t1), tr.momenta[4])
    # |x(t) - x0| <= t since |m| = 1
    ts = np.linspace(0, 1, 50)
    assert np.all(np.linalg.norm(tr.position(ts) - tr.x0, axis=1) <= ts + 1e-12)
    with pytest.raises(ValueError):
        tr.position(1.5)


def test_diffusive_path_is_rescaled_path():
    eps = 0.25
    cfg = _cfg(eta=0.01)
    y = diffusive_path(cfg, eps)
    raw = simulate(_cfg(eta=0.01, t_max=1.0 / eps ** 2))
    ts = np.array([0.1, 0.5, 1.0])
    assert np.allclose(y.position(ts), eps * raw.position(ts / eps ** 2), atol=1e-12)
    with pytest.raises(ValueError):
        diffusive_path(cfg, 0.0)


def test_snapshot_agrees_with_full_path():
    cfg = _cfg(eta=0.01, x0=(0.5, 0.0, 0.0))
    grid = np.array([0.0, 0.3, 0.7, 1.0])
    k0, mom, pos, J = snapshot(cfg, grid)
    tr = simulate(cfg)
    assert J == tr.n_jumps
    assert np.allclose(mom, tr.momentum(grid), atol=1e-14)
    assert np.allclose(pos, tr.position(grid), atol=1e-12)
    # the lowest coupled level is the path itself
    _, mom_l, pos_l, _ = snapshot(cfg, grid, etas=[0.01, 0.04])
    assert np.array_equal(mom_l[0], mom) and np.array_equal(pos_l[0], pos)
    with pytest.raises(ValueError):
        snapshot(cfg, grid, etas=[0.001])


def test_thinned_levels_have_truncated_decay():
    # keeping jumps with w >= eta_l realizes the eta_l process: E[m . k0] = exp(-C_{eta_l} t)
    spec = KernelSpec.pure(2, 0.5)
    cfg = ProcessConfig(spec, 1e-3, 1.0, k0=(0.0, 0.0, 1.0), seed=5)
    etas = [1e-3, 0.3, 1.0]
    vals = np.array([snapshot(cfg.with_path(i), [1.0], etas=etas)[1][:, 0, 2] for i in range(4000)])
    mean = vals.mean(axis=0)
    se = vals.std(axis=0) / math.sqrt(len(vals))
    target = np.array([math.exp(-truncated_mean_rate(spec, e)) for e in etas])
    assert np.all(np.abs(mean - target) < 4 * se)


def test_circle_and_uniform_start():
    cfg = ProcessConfig(KernelSpec.pure(1, 0.5), 1e-3, 2.0, seed=2)
    tr = simulate(cfg)
    assert tr.momenta.shape[1] == 2
    assert np.allclose(np.linalg.norm(tr.momenta, axis=1), 1.0, atol=1e-14)


def test_budget_and_config_errors():
    with pytest.raises(JumpBudgetError):
        simulate(_cfg(eta=1e-30, t_max=100.0))
    with pytest.raises(KernelDomainError):
        _cfg(eta=0.0)
    with pytest.raises(ValueError):
        _cfg(t_max=0.0)
    with pytest.raises(ValueError):
        _cfg(k0=(1.0, 0.0))
    with pytest.raises(ValueError):
        _cfg(x0=(1.0,))
    with pytest.raises(KernelDomainError):
        peaked_path(_cfg(), 0.5)


def test_peaked_path_uses_requested_scale():
    cfg = ProcessConfig(KernelSpec.peaked(2, 0.5, 0.05, 1.0), 1e-3, 1.0, seed=1)
    a = peaked_path(cfg, 0.25)
    b = simulate(ProcessConfig(KernelSpec.peaked(2, 0.5, 0.05, 0.25), 1e-3, 1.0, seed=1))
    assert np.array_equal(a.momenta, b.momenta)
