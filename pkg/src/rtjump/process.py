"""Exact-in-time simulation of the truncated jump process on S^d.

The truncated process jumps at rate ``Lambda(eta)`` with cosines ``s`` drawn
from the angular density restricted to ``s <= 1 - eta`` and a uniform tangent
direction.  Holding times are exact exponentials and positions are integrated
exactly along the piecewise-constant momentum, so truncation is the only
systematic error.

Every path draws from its own counter-based stream keyed by
``(seed, path_index)``, in a fixed order: initial momentum (if random),
holding times, jump cosines, tangent Gaussians.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _kernels
from .kernel import (JUMP_BUDGET, KernelDomainError, KernelSpec, density_w, integrate_w,
                     truncated_rate)
from .sphere import sphere_area, unit_vector

log = logging.getLogger(__name__)

CDF_NODES = 1024
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


class JumpBudgetError(RuntimeError):
    pass


class EnvelopeViolation(RuntimeError):
    pass


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Independent Philox stream for one path; independent of scheduling."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


# -- cosine sampler -----------------------------------------------------------------


@dataclass
class _Piece:
    lo: float
    hi: float
    power: float
    mass: float

    def invert(self, u):
        q = self.power + 1.0
        a, b = self.lo ** q, self.hi ** q
        return (a + u * (b - a)) ** (1.0 / q)


class CosineSampler:
    """Sampler for ``w = 1 - s`` with density proportional to ``F(s)(1-s^2)^((d-2)/2)`` on ``w >= eta``.

    Mixture of a smooth piece (``s <= split``), drawn by inverting a tabulated
    CDF, and a band piece (``split < s <= 1 - eta``) drawn from a power-law
    envelope and thinned by rejection.
    """

    def __init__(self, spec: KernelSpec, eta: float):
        if spec.bounded:
            if eta < 0:
                raise KernelDomainError(f"eta must be >= 0, got {eta}")
        elif not eta > 0:
            raise KernelDomainError("a singular kernel needs eta > 0 to have a finite jump rate")
        self.spec = spec
        self.eta = float(eta)
        self.d = spec.d
        self.rate = truncated_rate(spec, eta)
        if not self.rate > 0:
            raise KernelDomainError(f"truncated jump rate is {self.rate}; nothing to sample")
        area = sphere_area(spec.d - 1)
        ws = 1.0 - spec.split
        self.w_split = max(ws, self.eta)
        smooth_rate = area * float(integrate_w(spec, wl=self.w_split, wu=2.0))
        self.p_smooth = smooth_rate / self.rate
        self._build_table()
        self.pieces: list[_Piece] = []
        if self.eta < ws:
            self._build_band(ws)
        self.proposed = 0
        self.accepted = 0

    # smooth piece: theta in [0, theta_hi], s = -cos(theta), w = 1 + cos(theta)
    def _build_table(self):
        d = self.d
        th_hi = math.acos(min(max(self.w_split - 1.0, -1.0), 1.0))
        edges = np.linspace(0.0, th_hi, CDF_NODES + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        th = mid[:, None] + half[:, None] * _GL_X[None, :]
        dens = self.spec.value_w(1.0 + np.cos(th)) * np.sin(th) ** (d - 1)
        cell = (dens @ _GL_W) * half
        cdf = np.concatenate([[0.0], np.cumsum(cell)])
        total = cdf[-1]
        self.table_mass = total
        if total <= 0:
            self._inv = None
            return
        x = (cdf / total) ** (1.0 / d)
        keep = np.concatenate([[True], np.diff(x) > 1e-15])
        self._inv = PchipInterpolator(x[keep], edges[keep])

    def _build_band(self, ws):
        spec, eta = self.spec, self.eta
        alpha = spec.beta + spec.d / 2
        if spec.family == "mollified":
            h = 1.0 / spec.n_mollify
            e = (spec.d - 2) / 2
            # (w + h)^-alpha w^e <= h^-alpha w^e below h and w^(-beta-1) above
            pieces = []
            if eta < h:
                pieces.append((eta, min(h, ws), e, h ** (-alpha)))
            if ws > h:
                pieces.append((max(eta, h), ws, -spec.beta - 1.0, 1.0))
        else:
            pieces = [(eta, ws, -spec.beta - 1.0, 1.0)]
        self._env_pieces = pieces
        # a pure kernel on S^2 has density exactly proportional to the envelope
        self._exact = spec.family == "pure" and spec.d == 2
        for lo, hi, p, c in pieces:
            q = p + 1.0
            mass = c * (hi ** q - lo ** q) / q
            self.pieces.append(_Piece(lo, hi, p, mass))
        masses = np.array([pc.mass for pc in self.pieces])
        self._piece_cdf = np.cumsum(masses) / masses.sum()
        lo, hi = eta, ws
        grid = np.geomspace(lo if lo > 0 else 1e-14 * hi, hi, 4001)
        r = self.ratio(grid)
        self.r_max = float(np.max(r)) * 1.001
        if not np.isfinite(self.r_max) or self.r_max <= 0:
            raise EnvelopeViolation("band envelope ratio is not finite and positive")
        band_mass = self.rate * (1.0 - self.p_smooth) / sphere_area(spec.d - 1)
        self.expected_acceptance = band_mass / (self.r_max * masses.sum())

    def envelope(self, w):
        w = np.asarray(w, dtype=np.float64)
        out = np.zeros_like(w)
        for lo, hi, p, c in self._env_pieces:
            sel = (w >= lo) & (w <= hi)
            with np.errstate(divide="ignore"):
                out = np.where(sel, c * np.where(sel & (w > 0), w, 1.0) ** p, out)
        return out

    def ratio(self, w):
        w = np.asarray(w, dtype=np.float64)
        env = self.envelope(w)
        with np.errstate(divide="ignore", invalid="ignore"):
            dens = density_w(self.spec, np.where(w > 0, w, 1e-300))
            return np.where(env > 0, dens / env, 0.0)

    def _sample_band(self, rng, n):
        if self._exact:
            self.proposed += n
            self.accepted += n
            return self.pieces[0].invert(rng.random(n))
        out = np.empty(n)
        filled = 0
        acc = max(self.expected_acceptance, 0.05)
        while filled < n:
            m = int((n - filled) / acc * 1.05) + 8
            u_piece, u_pos, u_acc = rng.random((3, m))
            idx = np.searchsorted(self._piece_cdf, u_piece, side="right")
            idx = np.minimum(idx, len(self.pieces) - 1)
            w = np.empty(m)
            for j, pc in enumerate(self.pieces):
                sel = idx == j
                w[sel] = pc.invert(u_pos[sel])
            r = self.ratio(w)
            if np.any(r > self.r_max):
                raise EnvelopeViolation(
                    f"target density exceeds envelope (ratio {np.max(r):.6g} > {self.r_max:.6g}); "
                    "check the bound on |a2|")
            ok = u_acc * self.r_max < r
            self.proposed += m
            self.accepted += int(ok.sum())
            got = w[ok][: n - filled]
            out[filled:filled + got.size] = got
            filled += got.size
        return out

    def sample_w(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` draws of ``w = 1 - s``."""
        if n == 0:
            return np.empty(0)
        choice = rng.random(n) < self.p_smooth if self.pieces else np.ones(n, dtype=bool)
        ns = int(choice.sum())
        w = np.empty(n)
        if ns:
            x = rng.random(ns) ** (1.0 / self.d)
            w[choice] = 1.0 + np.cos(self._inv(x))
        if ns < n:
            w[~choice] = self._sample_band(rng, n - ns)
        return w

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return 1.0 - self.sample_w(rng, n)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else math.nan


@lru_cache(maxsize=64)
def get_sampler(spec: KernelSpec, eta: float) -> CosineSampler:
    sampler = CosineSampler(spec, eta)
    if sampler.pieces:
        log.debug("cosine sampler d=%d eta=%g: rate %.6g, smooth weight %.4f, expected acceptance %.4f",
                  spec.d, eta, sampler.rate, sampler.p_smooth, sampler.expected_acceptance)
    return sampler


def sample_jump_cosine(spec: KernelSpec, eta: float, rng: np.random.Generator, size=None):
    """Jump cosine(s) with density proportional to ``F(s)(1-s^2)^((d-2)/2)`` on ``[-1, 1-eta]``."""
    n = 1 if size is None else int(size)
    s = get_sampler(spec, eta).sample(rng, n)
    return float(s[0]) if size is None else s


# -- configuration and trajectories ---------------------------------------------------------


@dataclass(frozen=True)
class ProcessConfig:
    """One simulation setup.  ``k0=None`` draws the initial momentum uniformly."""

    kernel: KernelSpec
    eta: float
    t_max: float
    x0: tuple | None = None
    k0: tuple | None = None
    seed: int = 0
    path_index: int = 0

    def __post_init__(self):
        if not self.t_max > 0:
            raise ValueError(f"t_max must be > 0, got {self.t_max}")
        if self.kernel.bounded:
            if not 0 <= self.eta < 2:
                raise KernelDomainError(f"eta must lie in [0, 2), got {self.eta}")
        elif not 0 < self.eta < 2:
            raise KernelDomainError(f"eta must lie in (0, 2) for a singular kernel, got {self.eta}")
        D = self.kernel.d + 1
        if self.x0 is not None and len(self.x0) != D:
            raise ValueError(f"x0 must have {D} components")
        if self.k0 is not None:
            if len(self.k0) != D:
                raise ValueError(f"k0 must have {D} components")
            unit_vector(self.k0)
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def dim(self) -> int:
        return self.kernel.d + 1

    def position0(self) -> np.ndarray:
        return np.zeros(self.dim) if self.x0 is None else np.asarray(self.x0, dtype=np.float64)

    def with_path(self, path_index: int) -> "ProcessConfig":
        return ProcessConfig(self.kernel, self.eta, self.t_max, self.x0, self.k0, self.seed, path_index)


@dataclass
class Trajectory:
    """Event list of one path plus exact positions.

    ``times`` and ``momenta`` are in the simulation clock; the public
    ``momentum(t)``/``position(t)`` apply the diffusive rescaling
    ``Y(t) = x0 - eps int_0^{t/eps^2} m`` when ``epsilon != 1``.
    """

    times: np.ndarray
    momenta: np.ndarray
    x0: np.ndarray
    t_max: float
    epsilon: float = 1.0
    w: np.ndarray | None = field(default=None, repr=False)
    _nodes: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_jumps(self) -> int:
        return int(self.times.size)

    def _clock(self, t):
        t = np.asarray(t, dtype=np.float64)
        if np.any(t < 0) or np.any(t > self.t_max * (1 + 1e-12)):
            raise ValueError(f"times must lie in [0, {self.t_max}]")
        return t / self.epsilon ** 2

    def _positions_at_jumps(self):
        if self._nodes is None:
            dt = np.diff(np.concatenate([[0.0], self.times]))
            steps = dt[:, None] * self.momenta[:-1]
            self._nodes = self.x0 - np.concatenate([np.zeros((1, self.x0.size)), np.cumsum(steps, axis=0)])
        return self._nodes

    def momentum(self, t):
        """Momentum just after time ``t`` (right-continuous)."""
        u = self._clock(t)
        idx = np.searchsorted(self.times, u, side="right")
        return self.momenta[idx]

    def position(self, t):
        u = self._clock(t)
        idx = np.searchsorted(self.times, u, side="right")
        start = np.concatenate([[0.0], self.times])[idx]
        x = self._positions_at_jumps()[idx] - (u - start)[..., None] * self.momenta[idx]
        return self.x0 + self.epsilon * (x - self.x0)

    @property
    def final_momentum(self) -> np.ndarray:
        return self.momenta[-1]


def _check_budget(rate, horizon):
    expected = rate * horizon
    if expected > JUMP_BUDGET:
        raise JumpBudgetError(
            f"expected jumps per path {expected:.3g} exceed the budget {JUMP_BUDGET:.0e}; "
            "raise eta (or epsilon) to lower the jump rate")


def _draw_jumps(sampler: CosineSampler, rng: np.random.Generator, horizon: float, dim: int):
    """Jump times in ``(0, horizon]``, ``w`` values and tangent Gaussians."""
    lam = sampler.rate
    mean = lam * horizon
    chunk = int(mean + 6.0 * math.sqrt(mean) + 16)
    times = np.cumsum(rng.standard_exponential(chunk)) / lam
    while times[-1] <= horizon:
        more = np.cumsum(rng.standard_exponential(chunk)) / lam + times[-1]
        times = np.concatenate([times, more])
    J = int(np.searchsorted(times, horizon, side="right"))
    times = times[:J]
    w = sampler.sample_w(rng, J)
    g = rng.standard_normal((J, 1 if dim == 2 else dim))
    return times, w, g


def _initial_momentum(config: ProcessConfig, rng):
    if config.k0 is None:
        v = rng.standard_normal(config.dim)
        return v / np.linalg.norm(v)
    return np.asarray(config.k0, dtype=np.float64) / np.linalg.norm(config.k0)


def _simulate(config: ProcessConfig, epsilon: float = 1.0, keep_w: bool = False) -> Trajectory:
    horizon = config.t_max / epsilon ** 2
    sampler = get_sampler(config.kernel, config.eta)
    _check_budget(sampler.rate, horizon)
    rng = path_rng(config.seed, config.path_index)
    k0 = _initial_momentum(config, rng)
    times, w, g = _draw_jumps(sampler, rng, horizon, config.dim)
    momenta = _kernels.compose_full(k0, w, g)
    return Trajectory(times=times, momenta=momenta, x0=config.position0(), t_max=config.t_max,
                      epsilon=epsilon, w=w if keep_w else None)


def simulate(config: ProcessConfig) -> Trajectory:
    """Simulate one path of the truncated process on ``[0, t_max]``."""
    return _simulate(config)


def diffusive_path(config: ProcessConfig, epsilon: float) -> Trajectory:
    """Path of ``Y^eps(t) = x0 - eps int_0^{t/eps^2} m(u) du`` for ``t`` in ``[0, t_max]``."""
    if not 0 < epsilon <= 1:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    return _simulate(config, epsilon)


def peaked_path(config: ProcessConfig, epsilon: float) -> Trajectory:
    """Path under the peaked kernel at scale ``epsilon`` (profile taken from ``config.kernel``)."""
    spec = config.kernel
    if spec.family != "peaked":
        raise KernelDomainError("peaked_path needs a kernel of the peaked family")
    kern = KernelSpec.peaked(spec.d, spec.beta, spec.a1, epsilon, spec.profile)
    cfg = ProcessConfig(kern, config.eta, config.t_max, config.x0, config.k0, config.seed,
                        config.path_index)
    return _simulate(cfg)


def snapshot(config: ProcessConfig, grid, epsilon: float = 1.0, etas=None):
    """Momenta and positions of one path on a time grid, without storing the path.

    With ``etas`` (all ``>= config.eta``) the same jumps are thinned to give
    coupled paths for every truncation level; output gains a leading level
    axis.  Positions use the diffusive rescaling when ``epsilon != 1``.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if np.any(np.diff(grid) < 0) or np.any(grid < 0) or np.any(grid > config.t_max):
        raise ValueError("grid must be sorted within [0, t_max]")
    horizon = config.t_max / epsilon ** 2
    sampler = get_sampler(config.kernel, config.eta)
    _check_budget(sampler.rate, horizon)
    rng = path_rng(config.seed, config.path_index)
    k0 = _initial_momentum(config, rng)
    times, w, g = _draw_jumps(sampler, rng, horizon, config.dim)
    x0 = config.position0()
    u = grid / epsilon ** 2
    if etas is None:
        mom, pos = _kernels.compose_grid(k0, x0, times, w, g, u)
    else:
        etas = np.asarray(etas, dtype=np.float64)
        if np.any(etas < config.eta):
            raise ValueError("coupled truncations must be >= the simulated eta")
        mom, pos = _kernels.compose_grid_levels(k0, x0, times, w, g, u, etas)
    if epsilon != 1.0:
        pos = x0 + epsilon * (pos - x0)
    return k0, mom, pos, times.size
