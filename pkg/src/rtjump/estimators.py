"""Monte Carlo estimators, the parallel path runner, and generator application.

Paths are split into fixed contiguous chunks of path indices whatever the
number of workers, each path owns its random stream, and per-path results are
concatenated in path order before any reduction.  Every estimate is therefore
bitwise independent of the worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import multiprocessing as mp
import os
import warnings
from dataclasses import dataclass, fields, is_dataclass

import numpy as np

from . import _kernels
from .harmonics import gegenbauer_normalized, gegenbauer_quotient_table
from .kernel import KernelSpec, integrate_w
from .process import ProcessConfig, simulate, snapshot
from .quadrature import jacobi_rule
from .sphere import sphere_area

GUARD = 1e6
CHUNK = 250
WORKERS_ENV = "RTJUMP_WORKERS"


class ObservableGuardError(ValueError):
    pass


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {env!r}")
        return n
    return os.cpu_count() or 1


# -- fingerprints -------------------------------------------------------------------


def _canonical(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _canonical(getattr(obj, f.name)) for f in fields(obj)
                if not f.name.startswith("_")}
    if callable(obj):
        return f"{getattr(obj, '__module__', '?')}.{getattr(obj, '__qualname__', repr(obj))}"
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return repr(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def fingerprint(obj) -> str:
    """sha256 of a canonical JSON rendering (floats as shortest repr)."""
    text = json.dumps(_canonical(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# -- results --------------------------------------------------------------------------


@dataclass
class EstimatorResult:
    value: np.ndarray | float
    stderr: np.ndarray | float
    n_paths: int
    seed: int
    config_fingerprint: str = ""

    def z(self, oracle):
        """Standardized deviation; zero when both error and stderr vanish."""
        diff = np.abs(np.asarray(self.value) - oracle)
        se = np.asarray(self.stderr)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff <= 1e-12, 0.0, np.inf))
        return out if out.ndim else float(out)


def mean_stderr(samples: np.ndarray, axis: int = 0):
    """Sample mean and ``std(ddof=1) / sqrt(n)`` along ``axis``."""
    n = samples.shape[axis]
    if n < 2:
        raise ValueError("need at least 2 samples for a standard error")
    mean = np.mean(samples, axis=axis)
    se = np.std(samples, axis=axis, ddof=1) / math.sqrt(n)
    return mean, se


def covariance_batch_means(y: np.ndarray, n_batches: int = 20):
    """Unbiased covariance of rows of ``y`` and batch-means standard errors per entry."""
    n = y.shape[0]
    if n < 2 * n_batches:
        raise ValueError(f"need at least {2 * n_batches} samples for {n_batches} batches")
    cov = np.cov(y, rowvar=False, ddof=1)
    edges = np.linspace(0, n, n_batches + 1).astype(int)
    batch = np.stack([np.cov(y[a:b], rowvar=False, ddof=1) for a, b in zip(edges[:-1], edges[1:])])
    se = np.std(batch, axis=0, ddof=1) / math.sqrt(n_batches)
    return np.atleast_2d(cov), np.atleast_2d(se)


# -- parallel runner ------------------------------------------------------------------------

_TASK = None


def _run_chunk(bounds):
    lo, hi = bounds
    return [_TASK(i) for i in range(lo, hi)]


def run_paths(task, n_paths: int, workers: int | None = None, chunk: int = CHUNK) -> list:
    """``[task(i) for i in range(n_paths)]``, fanned out over forked workers.

    ``task`` may be any callable (it is inherited, not pickled); its results
    must be picklable.  Output order is the path order.
    """
    global _TASK
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    workers = default_workers() if workers is None else int(workers)
    bounds = [(a, min(a + chunk, n_paths)) for a in range(0, n_paths, chunk)]
    _kernels.warmup()
    _TASK = task
    try:
        if workers <= 1 or len(bounds) == 1 or "fork" not in mp.get_all_start_methods():
            parts = [_run_chunk(b) for b in bounds]
        else:
            ctx = mp.get_context("fork")
            with ctx.Pool(min(workers, len(bounds))) as pool:
                parts = pool.map(_run_chunk, bounds, chunksize=1)
    finally:
        _TASK = None
    return [r for part in parts for r in part]


@dataclass
class Snapshots:
    """Per-path grid samples stacked in path order."""

    k0: np.ndarray
    momenta: np.ndarray
    positions: np.ndarray
    jumps: np.ndarray
    grid: np.ndarray
    config: ProcessConfig
    epsilon: float = 1.0
    etas: np.ndarray | None = None

    @property
    def n_paths(self) -> int:
        return self.k0.shape[0]

    @property
    def total_jumps(self) -> int:
        return int(self.jumps.sum())


def collect_snapshots(config: ProcessConfig, n_paths: int, grid, epsilon: float = 1.0, etas=None,
                      workers: int | None = None) -> Snapshots:
    """Run ``n_paths`` paths (indices ``0 .. n_paths-1``) and sample them on ``grid``."""
    grid = np.asarray(grid, dtype=np.float64)
    # build the sampler before forking so workers inherit it
    from .process import get_sampler
    get_sampler(config.kernel, config.eta)

    def task(i):
        return snapshot(config.with_path(i), grid, epsilon, etas)

    out = run_paths(task, n_paths, workers)
    return Snapshots(
        k0=np.stack([o[0] for o in out]),
        momenta=np.stack([o[1] for o in out]),
        positions=np.stack([o[2] for o in out]),
        jumps=np.array([o[3] for o in out], dtype=np.int64),
        grid=grid, config=config, epsilon=epsilon,
        etas=None if etas is None else np.asarray(etas, dtype=np.float64))


def mc_expectation(config: ProcessConfig, observable, n_paths: int,
                   workers: int | None = None) -> EstimatorResult:
    """Mean and standard error of ``observable(trajectory)`` over independent paths."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    from .process import get_sampler
    get_sampler(config.kernel, config.eta)

    def task(i):
        return np.asarray(observable(simulate(config.with_path(i))), dtype=np.float64)

    vals = np.stack(run_paths(task, n_paths, workers))
    bad = ~np.isfinite(vals) | (np.abs(vals) > GUARD)
    if np.any(bad):
        idx = int(np.argwhere(bad.reshape(n_paths, -1).any(axis=1))[0, 0])
        raise ObservableGuardError(
            f"observable value out of the bounded range |v| <= {GUARD:.0e} on path {idx}")
    mean, se = mean_stderr(vals)
    if vals.ndim == 1:
        mean, se = float(mean), float(se)
    return EstimatorResult(mean, se, n_paths, config.seed, fingerprint(config))


# -- generator application ----------------------------------------------------------------


@dataclass(frozen=True)
class ZonalFunction:
    """``phi(k) = profile(k . axis)``.

    With ``degree`` set the profile is the normalized Gegenbauer polynomial of
    that degree and the azimuthal average uses the product formula.
    """

    axis: tuple
    profile: object = None
    degree: int | None = None

    @classmethod
    def gegenbauer(cls, axis, degree: int, d: int):
        return cls(tuple(float(a) for a in axis), lambda t: gegenbauer_normalized(degree, d, t), degree)

    def __call__(self, k):
        t = np.asarray(k) @ np.asarray(self.axis, dtype=np.float64)
        return np.asarray(self.profile(np.clip(t, -1.0, 1.0)), dtype=np.float64)


def tangent_sphere_rule(m: int, n: int = 24):
    """Nodes (rows) and weights summing to 1 on ``S^m``, exact for low-degree polynomials."""
    if m == 0:
        return np.array([[1.0], [-1.0]]), np.array([0.5, 0.5])
    if m == 1:
        a = 2.0 * np.pi * np.arange(2 * n) / (2 * n)
        return np.stack([np.cos(a), np.sin(a)], axis=1), np.full(2 * n, 1.0 / (2 * n))
    e = (m - 2) / 2
    x, wx = jacobi_rule(n, e, e)
    wx = wx / wx.sum()
    sub, ws = tangent_sphere_rule(m - 1, n)
    r = np.sqrt(1.0 - x ** 2)
    nodes = np.concatenate([np.column_stack([np.full(sub.shape[0], xi), ri * sub])
                            for xi, ri in zip(x, r)])
    weights = np.concatenate([wi * ws for wi in wx])
    return nodes, weights


def _tangent_basis(k):
    """Orthonormal basis of ``k^perp`` as rows, shape ``(D-1, D)``."""
    D = k.size
    q, _ = np.linalg.qr(np.column_stack([k, np.eye(D)]))
    return q[:, 1:D].T


def _azimuthal_zonal(profile, d, s, t, n_az=48):
    """``Avg_u profile(v . (s k + sqrt(1-s^2) u))`` with ``t = k . v``; shape ``(len(t), len(s))``."""
    if d == 1:
        x, wx = np.array([1.0, -1.0]), np.array([0.5, 0.5])
    else:
        e = (d - 3) / 2
        x, wx = jacobi_rule(n_az, e, e)
        wx = wx / wx.sum()
    s = np.asarray(s)[None, :, None]
    t = np.asarray(t)[:, None, None]
    arg = s * t + np.sqrt(np.maximum(1 - s * s, 0.0)) * np.sqrt(np.maximum(1 - t * t, 0.0)) * x
    return np.asarray(profile(np.clip(arg, -1.0, 1.0))) @ wx


def apply_generator(spec: KernelSpec, phi, k, eta: float = 0.0, n_az: int = 48):
    """``L phi(k) = sigma(S^{d-1}) int F(s) (Avg_u phi(s k + sqrt(1-s^2) u) - phi(k)) (1-s^2)^((d-2)/2) ds``.

    ``phi`` is a :class:`ZonalFunction` or a callable on points of ``S^d``
    (rows), assumed polynomial of low degree.  ``k`` is one point or an array
    of points; ``eta > 0`` gives the truncated generator.
    """
    k = np.asarray(k, dtype=np.float64)
    single = k.ndim == 1
    ks = np.atleast_2d(k)
    d = spec.d
    if ks.shape[1] != d + 1:
        raise ValueError(f"points must have {d + 1} coordinates")
    area = sphere_area(d - 1)
    if isinstance(phi, ZonalFunction):
        t = ks @ np.asarray(phi.axis, dtype=np.float64)
        t = np.clip(t, -1.0, 1.0)
        if phi.degree is not None:
            n = phi.degree
            if n == 0:
                out = np.zeros(t.shape)
            else:
                # Avg - G_n(t) = -G_n(t) (1 - s) q_n(s)
                mu = area * integrate_w(spec, lambda s: gegenbauer_quotient_table(n, d, s)[n],
                                        wl=eta, power=1)
                out = -float(mu) * gegenbauer_normalized(n, d, t)
        else:
            g0 = np.asarray(phi.profile(t), dtype=np.float64)

            def h(s):
                with np.errstate(divide="ignore", invalid="ignore"):
                    diff = _azimuthal_zonal(phi.profile, d, s, t, n_az) - g0[:, None]
                    return diff / (1.0 - s)[None, :]

            out = area * np.asarray(integrate_w(spec, h, wl=eta, power=1))
    else:
        rule_x, rule_w = tangent_sphere_rule(d - 1, max(8, n_az // 2))
        out = np.empty(len(ks))
        for i, kv in enumerate(ks):
            basis = _tangent_basis(kv)
            u = rule_x @ basis
            f0 = float(np.asarray(phi(kv[None, :]))[0])

            def h(s, kv=kv, u=u, f0=f0):
                c = np.sqrt(np.maximum(1 - s * s, 0.0))
                pts = s[:, None, None] * kv + c[:, None, None] * u[None, :, :]
                vals = np.asarray(phi(pts.reshape(-1, kv.size))).reshape(s.size, -1) @ rule_w
                return (vals - f0) / (1.0 - s)

            out[i] = area * float(integrate_w(spec, h, wl=eta, power=1))
    if np.any(np.isnan(out)):
        warnings.warn("generator evaluation produced NaN; is phi twice differentiable near k?",
                      RuntimeWarning, stacklevel=2)
    return float(out[0]) if single else out
