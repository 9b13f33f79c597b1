"""Singular collision kernels F(s) on the sphere and their derived constants.

A kernel is a nonnegative rate density in the cosine ``s = k . p`` with the
grazing singularity ``F(s) ~ a1 (1 - s)^(-beta - d/2)`` as ``s -> 1``.
Internally everything is evaluated in ``w = 1 - s`` so that points very close
to the singular endpoint keep full relative precision.

Four families are supported:

``pure``
    ``a1 (1 - s)^(-beta - d/2)``.
``smooth_plus_singular``
    ``F1(s) + (1 - chi(s)) a1 (1 + a2(s)) (1 - s)^(-beta - d/2)`` with a
    smooth user part ``F1``, a perturbation ``a2`` and a C-infinity cutoff
    ``chi`` equal to 1 on ``[-1, delta]`` and 0 on ``[delta', 1]``.
``mollified``
    the singular part of a base kernel regularized to
    ``a1 (1 + a2) (1 - chi) |1 - s + 1/n|^(-beta - d/2)``, a bounded kernel.
``peaked``
    ``eps^(beta + d/2) K(eps (1 - s))`` with ``t^(beta + d/2) K(t) -> a1``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
from scipy import special

from .quadrature import QuadratureError, gauss_jacobi, log_panels
from .sphere import InvalidDimensionError, sphere_area

FAMILIES = ("pure", "smooth_plus_singular", "mollified", "peaked")
JUMP_BUDGET = 1e9


class KernelDomainError(ValueError):
    pass


class SingularEvaluationError(KernelDomainError):
    pass


class DivergentIntegralError(ArithmeticError):
    pass


def smoothstep_cutoff(s, delta: float, delta_prime: float):
    """C-infinity cutoff: 1 for ``s <= delta``, 0 for ``s >= delta_prime``."""
    x = np.clip((np.asarray(s, dtype=np.float64) - delta) / (delta_prime - delta), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        fa = np.where(x < 1.0, np.exp(-1.0 / np.where(x < 1.0, 1.0 - x, 1.0)), 0.0)
        fb = np.where(x > 0.0, np.exp(-1.0 / np.where(x > 0.0, x, 1.0)), 0.0)
    return fa / (fa + fb)


def default_profile(t, a1: float, beta: float, d: int):
    """Peaked profile ``K(t) = a1 exp(-t) t^(-beta - d/2)``."""
    t = np.asarray(t, dtype=np.float64)
    return a1 * np.exp(-t) * t ** (-beta - d / 2)


def power_profile(t, a1: float, beta: float, d: int):
    """Pure power profile ``K(t) = a1 t^(-beta - d/2)``; reproduces the pure kernel."""
    return a1 * np.asarray(t, dtype=np.float64) ** (-beta - d / 2)


_PROFILES = {"default": default_profile, "power": power_profile}


def _as_function(f):
    if f is None or callable(f):
        return f
    value = float(f)
    return lambda s: np.full(np.shape(s), value)


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of a collision kernel.

    Use the ``pure``, ``smooth_plus_singular``, ``mollified`` and ``peaked``
    constructors rather than setting fields by hand.
    """

    d: int
    beta: float
    a1: float
    family: str = "pure"
    f1: Callable | float | None = None
    a2: Callable | None = None
    a2_sup: float = 0.0
    delta: float = 0.6
    delta_prime: float = 0.8
    n_mollify: float | None = None
    epsilon: float | None = None
    profile: str | Callable = "default"

    def __post_init__(self):
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise InvalidDimensionError(f"d must be an integer >= 1, got {self.d!r}")
        if not 0.0 < self.beta < 1.0:
            raise KernelDomainError(
                f"beta must lie in the open interval (0, 1), got {self.beta}; the kernel "
                "hypothesis requires (1-s)^(beta+d/2) F(s) -> a1 with 0 < beta < 1")
        if self.family not in FAMILIES:
            raise KernelDomainError(f"unknown kernel family {self.family!r}; choose from {FAMILIES}")
        if self.a1 < 0 or (self.a1 == 0 and self.family != "smooth_plus_singular"):
            raise KernelDomainError(f"a1 must lie in (0, inf), got {self.a1}")
        if not -1.0 < self.delta < self.delta_prime < 1.0:
            raise KernelDomainError(
                f"cutoff needs -1 < delta < delta' < 1, got delta={self.delta}, delta'={self.delta_prime}")
        if not 0.0 <= self.a2_sup < 1.0:
            raise KernelDomainError(f"sup|a2| must lie in [0, 1), got {self.a2_sup}")
        if self.family == "mollified" and not (self.n_mollify and self.n_mollify > 0):
            raise KernelDomainError("mollified kernel needs n_mollify > 0")
        if self.family == "peaked" and not (self.epsilon and self.epsilon > 0):
            raise KernelDomainError("peaked kernel needs epsilon > 0")
        if self.family == "peaked" and isinstance(self.profile, str) and self.profile not in _PROFILES:
            raise KernelDomainError(f"unknown peaked profile {self.profile!r}")
        if self.family == "smooth_plus_singular" and self.f1 is not None:
            grid = np.linspace(-1.0, 1.0, 401)
            vals = self._f1(grid)
            if np.any(vals < 0):
                raise KernelDomainError("smooth part F1 must be nonnegative on [-1, 1]")
            if np.min(self.value_w(1.0 - grid[:-1])) <= 0:
                warnings.warn("kernel is not bounded below by a positive constant; "
                              "the spectral gap is not guaranteed", RuntimeWarning, stacklevel=3)

    # -- constructors -----------------------------------------------------

    @classmethod
    def pure(cls, d: int, beta: float, a1: float | None = None) -> "KernelSpec":
        """Pure power kernel; ``a1=None`` picks the amplitude giving unit mean rate."""
        if a1 is None:
            a1 = 1.0 / pure_mathfrak_C(d, beta, 1.0)
        return cls(d=d, beta=beta, a1=a1)

    @classmethod
    def smooth_plus_singular(cls, d, beta, a1, f1=None, a2=None, a2_sup=0.0,
                             delta=0.6, delta_prime=0.8) -> "KernelSpec":
        return cls(d=d, beta=beta, a1=a1, family="smooth_plus_singular", f1=f1, a2=a2,
                   a2_sup=a2_sup, delta=delta, delta_prime=delta_prime)

    @classmethod
    def mollified(cls, base: "KernelSpec", n: float) -> "KernelSpec":
        if base.family not in ("pure", "smooth_plus_singular"):
            raise KernelDomainError("only pure or smooth_plus_singular kernels can be mollified")
        return replace(base, family="mollified", n_mollify=float(n))

    @classmethod
    def peaked(cls, d, beta, a1, epsilon, profile="default") -> "KernelSpec":
        return cls(d=d, beta=beta, a1=a1, family="peaked", epsilon=float(epsilon), profile=profile)

    # -- pointwise evaluation (vectorized, argument w = 1 - s) ---------------

    @property
    def bounded(self) -> bool:
        return self.family == "mollified" or (self.family == "smooth_plus_singular" and self.a1 == 0)

    @property
    def split(self) -> float:
        """Cosine where quadrature and sampling switch to the singular treatment."""
        return self.delta_prime if self.family == "smooth_plus_singular" else 0.5

    @property
    def _alpha(self) -> float:
        return self.beta + self.d / 2

    def _f1(self, s):
        f = _as_function(self.f1)
        return np.zeros(np.shape(s)) if f is None else np.asarray(f(s), dtype=np.float64)

    def _a2(self, s):
        return np.zeros(np.shape(s)) if self.a2 is None else np.asarray(self.a2(s), dtype=np.float64)

    def _chi(self, s):
        return smoothstep_cutoff(s, self.delta, self.delta_prime)

    def _K(self, t):
        prof = _PROFILES[self.profile] if isinstance(self.profile, str) else None
        if prof is not None:
            return prof(t, self.a1, self.beta, self.d)
        return np.asarray(self.profile(t), dtype=np.float64)

    def regular_w(self, w):
        """Bounded smooth part of F (zero for pure and peaked kernels)."""
        w = np.asarray(w, dtype=np.float64)
        if self.family == "smooth_plus_singular":
            return self._f1(1.0 - w)
        return np.zeros_like(w)

    def amplitude_w(self, w):
        """``(1 - s)^(beta + d/2)`` times the singular part of F."""
        w = np.asarray(w, dtype=np.float64)
        s = 1.0 - w
        if self.family == "pure":
            return np.full_like(w, self.a1)
        if self.family == "smooth_plus_singular":
            return self.a1 * (1.0 + self._a2(s)) * (1.0 - self._chi(s))
        if self.family == "peaked":
            eps = self.epsilon
            with np.errstate(divide="ignore", invalid="ignore"):
                return eps ** self._alpha * self._K(eps * w) * w ** self._alpha
        raise KernelDomainError("mollified kernels have no singular amplitude")

    @property
    def singular_support(self) -> float:
        """Largest ``w`` where the singular part can be nonzero."""
        return 1.0 - self.delta if self.family == "smooth_plus_singular" else 2.0

    def value_w(self, w):
        """F(1 - w), vectorized."""
        w = np.asarray(w, dtype=np.float64)
        if self.family == "mollified":
            s = 1.0 - w
            chi = self._chi(s)
            h = 1.0 / self.n_mollify
            if self.f1 is None:
                safe = np.where(chi > 0, w, 1.0)
                smooth = np.where(chi > 0, chi * self.a1 * safe ** (-self._alpha), 0.0)
            else:
                smooth = self._f1(s)
            return smooth + (1.0 - chi) * self.a1 * (1.0 + self._a2(s)) * (w + h) ** (-self._alpha)
        out = self.regular_w(w)
        if self.a1 > 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = out + self.amplitude_w(w) * w ** (-self._alpha)
        return out

    def sup_bound(self) -> float:
        """Upper bound on a mollified kernel: ``a1 (1 + sup|a2|) n^(beta+d/2) + sup F1``."""
        if self.family != "mollified":
            return math.inf
        f1_sup = 0.0
        if self.f1 is not None:
            f1_sup = float(np.max(self._f1(np.linspace(-1, 1, 2001))))
        else:
            f1_sup = self.a1 * (1.0 - self.delta) ** (-self._alpha)
        return self.a1 * (1.0 + self.a2_sup) * self.n_mollify ** self._alpha + f1_sup


# -- public pointwise operations ---------------------------------------------------


def _check_cosine(spec: KernelSpec, s):
    s = np.asarray(s, dtype=np.float64)
    if np.any(np.abs(s) > 1.0) or np.any(~np.isfinite(s)):
        raise KernelDomainError("cosine must lie in [-1, 1]")
    if not spec.bounded and np.any(s == 1.0):
        raise SingularEvaluationError("F is singular at s = 1")
    return s


def kernel_value(spec: KernelSpec, s):
    """F(s) for ``s`` in (-1, 1) (``s = 1`` only for bounded kernels)."""
    s = _check_cosine(spec, s)
    return spec.value_w(1.0 - s)


def angular_density(spec: KernelSpec, s):
    """Unnormalized density ``F(s) (1 - s^2)^((d-2)/2)`` of the jump cosine."""
    s = _check_cosine(spec, s)
    if spec.d == 1 and np.any(np.abs(s) == 1.0):
        raise SingularEvaluationError("for d = 1 the weight (1 - s^2)^(-1/2) is singular at |s| = 1")
    w = 1.0 - s
    return density_w(spec, w)


def density_w(spec: KernelSpec, w):
    """Angular density as a function of ``w = 1 - s``."""
    w = np.asarray(w, dtype=np.float64)
    e = (spec.d - 2) / 2
    return spec.value_w(w) * (w * (2.0 - w)) ** e


# -- integration engine -----------------------------------------------------------
#
# All integrals have the form
#     I = int_{s: wl <= 1-s <= wu} F(s) (1-s^2)^((d-2)/2) (1-s)^p phi(s) ds
# and are split into a regular part, a singular part with exact power weight,
# or (for mollified kernels) a bounded part integrated in log w near s = 1.


def _phi_at(phi, w):
    s = 1.0 - w
    return np.ones_like(w) if phi is None else np.asarray(phi(s), dtype=np.float64)


def _diff0(f, x0, x1, b):
    """int_{x0}^{x1} f(w) w^b dw for 0 <= x0 <= x1 <= 1 via Gauss-Jacobi on [0, x]."""
    hi = gauss_jacobi(f, 0.0, x1, b=b)
    lo = gauss_jacobi(f, 0.0, x0, b=b) if x0 > 0 else 0.0
    return hi - lo


def _diff2(f, x0, x1, a):
    """int_{x0}^{x1} f(w) (2-w)^a dw for 1 <= x0 <= x1 <= 2."""
    lo = gauss_jacobi(f, x0, 2.0, a=a)
    hi = gauss_jacobi(f, x1, 2.0, a=a) if x1 < 2 else 0.0
    return lo - hi


def _regular_piece(spec, phi, wl, wu, p):
    ea = (spec.d - 2) / 2 + p
    eb = (spec.d - 2) / 2
    total = 0.0
    if wl < 1.0:
        f = lambda w: spec.regular_w(w) * _phi_at(phi, w) * (2.0 - w) ** eb
        total = total + _diff0(f, wl, min(wu, 1.0), ea)
    if wu > 1.0:
        f = lambda w: spec.regular_w(w) * _phi_at(phi, w) * w ** ea
        total = total + _diff2(f, max(wl, 1.0), wu, eb)
    return total


def _singular_piece(spec, phi, wl, wu, p):
    es = p - spec.beta - 1.0
    eb = (spec.d - 2) / 2
    wu = min(wu, spec.singular_support)
    if wl >= wu:
        return 0.0
    ws = 1.0 - spec.split
    total = 0.0
    if wl < ws:
        x1 = min(wu, ws)
        if es > -1.0:
            f = lambda w: spec.amplitude_w(w) * (2.0 - w) ** eb * _phi_at(phi, w)
            total = total + _diff0(f, wl, x1, es)
        else:
            if wl <= 0.0:
                raise DivergentIntegralError(
                    "total jump rate is infinite without truncation (zero mean free path)")
            f = lambda w: spec.amplitude_w(w) * w ** es * (2.0 - w) ** eb * _phi_at(phi, w)
            total = total + log_panels(f, wl, x1)
    if wu > ws:
        x0 = max(wl, ws)
        if spec.singular_support >= 2.0:
            f = lambda w: spec.amplitude_w(w) * w ** es * _phi_at(phi, w)
            total = total + _diff2(f, x0, wu, eb)
        else:
            f = lambda w: spec.amplitude_w(w) * w ** es * (2.0 - w) ** eb * _phi_at(phi, w)
            total = total + gauss_jacobi(f, x0, wu)
    return total


def _bounded_piece(spec, phi, wl, wu, p):
    ea = (spec.d - 2) / 2 + p
    eb = (spec.d - 2) / 2
    ws = 1.0 - spec.split
    h = 1.0 / spec.n_mollify if spec.n_mollify else 1.0
    total = 0.0
    if wl < ws:
        x1 = min(wu, ws)
        floor = 1e-12 * min(h, 1.0)
        if wl < floor:
            f0 = spec.value_w(np.array([0.0]))[0] * _phi_at(phi, np.array([0.0]))[..., 0]
            total = total + f0 * 2.0 ** eb * (floor ** (ea + 1) - wl ** (ea + 1)) / (ea + 1)
        f = lambda w: spec.value_w(w) * _phi_at(phi, w) * w ** ea * (2.0 - w) ** eb
        total = total + log_panels(f, max(wl, floor), x1, breaks=(h,))
    if wu > ws:
        x0 = max(wl, ws)
        if x0 < 1.0:
            f = lambda w: spec.value_w(w) * _phi_at(phi, w) * w ** ea * (2.0 - w) ** eb
            total = total + gauss_jacobi(f, x0, min(wu, 1.0))
        if wu > 1.0:
            f = lambda w: spec.value_w(w) * _phi_at(phi, w) * w ** ea
            total = total + _diff2(f, max(x0, 1.0), wu, eb)
    return total


def integrate_w(spec: KernelSpec, phi=None, wl: float = 0.0, wu: float = 2.0, power: int = 0):
    """``int F(s)(1-s^2)^((d-2)/2)(1-s)^power phi(s) ds`` over ``wl <= 1-s <= wu``.

    ``phi`` maps an array of cosines to values of shape ``(..., len(s))``.
    The ``sigma(S^{d-1})`` factor is not included.
    """
    if not 0.0 <= wl <= wu <= 2.0:
        raise KernelDomainError(f"need 0 <= wl <= wu <= 2, got [{wl}, {wu}]")
    if wl == wu:
        return 0.0 if phi is None else np.zeros(np.shape(phi(np.array([0.0])))[:-1])
    if spec.family == "mollified":
        return _bounded_piece(spec, phi, wl, wu, power)
    total = 0.0
    if spec.family == "smooth_plus_singular" and spec.f1 is not None:
        total = total + _regular_piece(spec, phi, wl, wu, power)
    if spec.a1 > 0:
        total = total + _singular_piece(spec, phi, wl, wu, power)
    return total


# -- derived constants --------------------------------------------------------------


def pure_mathfrak_C(d: int, beta: float, a1: float) -> float:
    """Closed form ``a1 sigma(S^{d-1}) 2^(d/2 - beta) B(1 - beta, d/2)``."""
    return a1 * sphere_area(d - 1) * 2.0 ** (d / 2 - beta) * special.beta(1.0 - beta, d / 2)


def mathfrak_C(spec: KernelSpec) -> float:
    """Mean relaxation rate ``sigma(S^{d-1}) int F(s)(1-s^2)^((d-2)/2)(1-s) ds``."""
    if spec.beta >= 1.0:
        raise DivergentIntegralError("the mean rate diverges for beta >= 1")
    return sphere_area(spec.d - 1) * float(integrate_w(spec, power=1))


def diffusion_matrix(spec: KernelSpec) -> np.ndarray:
    """Isotropic diffusion matrix ``I / (C (d + 1))``."""
    c = mathfrak_C(spec)
    return np.eye(spec.d + 1) / (c * (spec.d + 1))


def _check_eta(spec, eta, allow_zero):
    if eta < 0 or eta > 2:
        raise KernelDomainError(f"truncation eta must lie in [0, 2], got {eta}")
    if eta == 0 and not allow_zero:
        raise DivergentIntegralError(
            "eta = 0 gives an infinite jump rate for a singular kernel; use eta > 0")


def truncated_rate(spec: KernelSpec, eta: float) -> float:
    """Total jump rate of the process restricted to cosines ``s <= 1 - eta``."""
    _check_eta(spec, eta, allow_zero=spec.bounded)
    return sphere_area(spec.d - 1) * float(integrate_w(spec, wl=eta, power=0))


def truncated_mean_rate(spec: KernelSpec, eta: float) -> float:
    """Mean relaxation rate of the truncated process (equals C at eta = 0)."""
    _check_eta(spec, eta, allow_zero=True)
    return sphere_area(spec.d - 1) * float(integrate_w(spec, wl=eta, power=1))


def truncation_bias_bound(spec: KernelSpec, eta: float) -> float:
    """``sigma(S^{d-1}) int_{1-eta}^1 F(s)(1-s)(1-s^2)^((d-2)/2) ds``; equals C - C_eta."""
    _check_eta(spec, eta, allow_zero=True)
    return sphere_area(spec.d - 1) * float(integrate_w(spec, wl=0.0, wu=eta, power=1))


def auto_eta(spec: KernelSpec, rel_target: float, horizon: float, n_paths: int,
             budget: float = JUMP_BUDGET) -> float:
    """Largest truncation whose bias bound is at most ``0.1 * rel_target * C``.

    The result is then raised, if needed, so the expected number of jumps
    ``Lambda(eta) * horizon * n_paths`` stays within ``budget``.
    """
    if spec.bounded:
        return 0.0
    c = mathfrak_C(spec)
    goal = 0.1 * rel_target * c
    lo, hi = -690.0, math.log(2.0)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if truncation_bias_bound(spec, math.exp(mid)) > goal:
            hi = mid
        else:
            lo = mid
    eta = math.exp(lo)

    def over(e):
        try:
            with np.errstate(over="ignore"):
                return truncated_rate(spec, e) * horizon * n_paths > budget
        except QuadratureError:  # rate overflows double precision
            return True

    if over(eta):
        lo, hi = math.log(eta), math.log(2.0)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if over(math.exp(mid)):
                lo = mid
            else:
                hi = mid
        eta = math.exp(hi)
    return eta
