"""Zonal spectral theory on S^d: Gegenbauer polynomials and Funk-Hecke eigenvalues.

Because the collision operator is a convolution in ``k . p`` it is diagonal
on spherical harmonics, and every eigenvalue is a one-dimensional integral
against the normalized Gegenbauer polynomial ``G_n`` (``G_n(1) = 1``).  No
explicit harmonic basis is ever built; multiplicities enter only through
``M(d, n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .kernel import KernelSpec, integrate_w, pure_mathfrak_C
from .sphere import sphere_area


def _recurrence_coeffs(n: int, d: int) -> tuple[float, float]:
    """``G_{n+1} = a_n s G_n - c_n G_{n-1}`` for normalized Gegenbauer polynomials."""
    lam = (d - 1) / 2
    if n == 0:
        return 1.0, 0.0
    return 2.0 * (n + lam) / (n + 2.0 * lam), n / (n + 2.0 * lam)


def gegenbauer_table(n_max: int, d: int, s) -> np.ndarray:
    """``G_0 .. G_{n_max}`` at ``s``; shape ``(n_max + 1,) + shape(s)``."""
    s = np.asarray(s, dtype=np.float64)
    out = np.empty((n_max + 1,) + s.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = s
    for n in range(1, n_max):
        a, c = _recurrence_coeffs(n, d)
        out[n + 1] = a * s * out[n] - c * out[n - 1]
    return out


def gegenbauer_normalized(n: int, d: int, s):
    """Degree-``n`` Gegenbauer polynomial with parameter ``(d-1)/2``, scaled to ``G_n(1) = 1``.

    For ``d = 1`` this is the Chebyshev polynomial ``T_n``; for ``d = 2`` the
    Legendre polynomial ``P_n``.
    """
    if n < 0:
        raise ValueError(f"degree must be >= 0, got {n}")
    return gegenbauer_table(n, d, s)[n]


def gegenbauer_quotient_table(n_max: int, d: int, s) -> np.ndarray:
    """``(1 - G_n(s)) / (1 - s)`` for ``n = 0 .. n_max`` without cancellation.

    Writing ``1 - G_n = (1 - s) q_n`` the recurrence becomes
    ``q_{n+1} = a_n (1 + s q_n) - c_n q_{n-1}``, which never subtracts nearly
    equal numbers near ``s = 1`` where ``q_n(1) = n (n + d - 1) / d``.
    """
    s = np.asarray(s, dtype=np.float64)
    out = np.empty((n_max + 1,) + s.shape)
    out[0] = 0.0
    if n_max >= 1:
        out[1] = 1.0
    for n in range(1, n_max):
        a, c = _recurrence_coeffs(n, d)
        out[n + 1] = a * (1.0 + s * out[n]) - c * out[n - 1]
    return out


def laplace_eigenvalue(n: int, d: int) -> float:
    return float(n * (n + d - 1))


def multiplicity(d: int, n: int) -> int:
    """Dimension of the degree-``n`` harmonics, ``(2n+d-1) Gamma(n+d-1) / (Gamma(d) Gamma(n+1))``."""
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    if n == 0:
        return 1
    # (2n+d-1)/n * binom(n+d-2, n-1), exact in integers
    return (2 * n + d - 1) * math.comb(n + d - 2, n - 1) // n


def funk_hecke_table(spec: KernelSpec, n_max: int, eta: float = 0.0) -> np.ndarray:
    """Eigenvalues ``mu_{n,eta}`` of ``-L_eta`` for ``n = 0 .. n_max``.

    ``mu_{n,eta} = sigma(S^{d-1}) int_{-1}^{1-eta} F(s) (1 - G_n(s)) (1-s^2)^((d-2)/2) ds``,
    integrated with the factor ``(1 - s)`` pulled out analytically.
    """
    if n_max < 1:
        return np.zeros(n_max + 1)
    phi = lambda s: gegenbauer_quotient_table(n_max, spec.d, s)
    vals = integrate_w(spec, phi, wl=eta, wu=2.0, power=1)
    out = sphere_area(spec.d - 1) * np.asarray(vals, dtype=np.float64)
    out[0] = 0.0
    return out


def funk_hecke_mu(spec: KernelSpec, n: int, eta: float = 0.0) -> float:
    if n < 0:
        raise ValueError("degree must be >= 0")
    if n == 0:
        return 0.0
    return float(funk_hecke_table(spec, n, eta)[n])


def _gamma_ratio(n, a, b):
    """Gamma(n + a) / Gamma(n + b) via log-gamma (arguments positive)."""
    return np.exp(special.gammaln(n + a) - special.gammaln(n + b))


def gamma_multiplier_R(d: int, beta: float, n):
    """Gamma-ratio multiplier of the hypersingular operator with kernel ``|k - p|^(-2 beta - d)``.

    ``(2^{2b} pi^{d/2} Gamma(b) / Gamma(d/2 + b)) *
    (Gamma(n + (d+2b)/2) / Gamma(n + (d-2b)/2) - Gamma((d+2b)/2) / Gamma((d-2b)/2))``.
    For ``d = 1, beta = 1/2`` the subtracted term is taken as 0 (pole of the
    denominator).  The overall constant is only meaningful up to a fixed
    positive factor; use ratios in ``n``.
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"beta must lie in (0, 1), got {beta}")
    n_arr = np.asarray(n, dtype=np.float64)
    if np.any(n_arr < 0):
        raise ValueError("degree must be >= 0")
    ap, am = (d + 2 * beta) / 2, (d - 2 * beta) / 2
    if am <= 0 and float(am).is_integer():
        if not (d == 1 and beta == 0.5):
            raise ValueError(f"Gamma pole at (d - 2 beta)/2 = {am}")
        sub = 0.0
    else:
        sub = special.gamma(ap) / special.gamma(am)
    pref = 2.0 ** (2 * beta) * math.pi ** (d / 2) * special.gamma(beta) / special.gamma(d / 2 + beta)
    with np.errstate(invalid="ignore"):
        ratio = np.where(n_arr > 0, _gamma_ratio(np.maximum(n_arr, 1.0), ap, am), sub)
    out = pref * (ratio - sub)
    out = np.where(n_arr == 0, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def peaked_kernel(d: int, beta: float, a1: float) -> KernelSpec:
    """Kernel ``a1 |k - p|^(-2 beta - d) = a1 (2 (1 - s))^(-beta - d/2)`` as a pure kernel."""
    return KernelSpec.pure(d, beta, a1 * 2.0 ** (-beta - d / 2))


def peaked_mu(d: int, beta: float, a1: float, n: int) -> float:
    """Eigenvalue on degree-``n`` harmonics of ``-a1 p.v. int (phi(p) - phi(k)) |p - k|^(-2b-d)``."""
    return funk_hecke_mu(peaked_kernel(d, beta, a1), n)


def multiplier_constant(d: int, beta: float, n: int = 1) -> float:
    """Empirical ``kappa(d, beta)`` with ``peaked_mu(d, beta, 1, n) = kappa * R_n``.

    ``kappa`` does not depend on ``n`` (checked in the tests); at
    ``d = 2, beta = 1/2`` it is 1/2.
    """
    if n < 1:
        raise ValueError("reference degree must be >= 1")
    return peaked_mu(d, beta, 1.0, n) / float(gamma_multiplier_R(d, beta, n))


@dataclass(frozen=True)
class SpectralTable:
    """Per-degree spectral data for one kernel.

    ``mu`` and ``mu_eta`` come from quadrature (``n <= n_max``); ``R`` and the
    Laplace-Beltrami data are closed form.
    """

    spec: KernelSpec
    n_max: int
    eta: float
    n: np.ndarray = field(repr=False)
    lam: np.ndarray = field(repr=False)
    mult: np.ndarray = field(repr=False)
    mu: np.ndarray = field(repr=False)
    mu_eta: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    mu_peaked: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, spec: KernelSpec, n_max: int = 64, eta: float = 0.0) -> "SpectralTable":
        n = np.arange(n_max + 1)
        d = spec.d
        amp = spec.a1 if spec.a1 > 0 else 1.0
        return cls(
            spec=spec, n_max=n_max, eta=eta, n=n,
            lam=n * (n + d - 1.0),
            mult=np.array([multiplicity(d, int(k)) for k in n], dtype=np.int64),
            mu=funk_hecke_table(spec, n_max, 0.0),
            mu_eta=funk_hecke_table(spec, n_max, eta) if eta > 0 else funk_hecke_table(spec, n_max, 0.0),
            R=gamma_multiplier_R(d, spec.beta, n),
            mu_peaked=funk_hecke_table(peaked_kernel(d, spec.beta, amp), n_max, 0.0),
        )

    @property
    def gap(self) -> float:
        """Smallest nonzero eigenvalue over the computed degrees."""
        return float(np.min(self.mu[1:])) if self.n_max >= 1 else math.nan

    def sandwich_ratio(self) -> np.ndarray:
        """``(1 + mu_n) / (1 + lambda_n^beta)``; bounded above and below for an H^beta form."""
        return (1.0 + self.mu) / (1.0 + self.lam ** self.spec.beta)


def _coefficient_degrees(coeffs):
    """Normalize coefficients to ``{n: array of c_{n,m}}``."""
    if isinstance(coeffs, dict):
        items = coeffs.items()
    else:
        items = enumerate(coeffs)
    out = {}
    for key, c in items:
        n = key[0] if isinstance(key, tuple) else int(key)
        out.setdefault(int(n), []).extend(np.atleast_1d(np.asarray(c, dtype=np.complex128)).tolist())
    return {n: np.asarray(v) for n, v in out.items()}


def dirichlet_form_Q(coeffs, table: SpectralTable) -> float:
    """``Q(f, f) = sum_{n,m} mu_n |c_{n,m}|^2`` for harmonic coefficients.

    ``coeffs`` is either a mapping ``(n, m) -> c`` (or ``n -> [c_{n,1}, ...]``)
    or a sequence indexed by degree.
    """
    total = 0.0
    for n, c in _coefficient_degrees(coeffs).items():
        if n > table.n_max:
            raise ValueError(f"coefficient degree {n} exceeds table n_max = {table.n_max}")
        total += table.mu[n] * float(np.sum(np.abs(c) ** 2))
    return total


def sobolev_norm_sq(coeffs, table: SpectralTable) -> float:
    """H^beta surrogate ``sum (1 + lambda_n^beta) |c_{n,m}|^2``."""
    total = 0.0
    for n, c in _coefficient_degrees(coeffs).items():
        total += (1.0 + table.lam[n] ** table.spec.beta) * float(np.sum(np.abs(c) ** 2))
    return total


def degree_one_matches_mean_rate(spec: KernelSpec) -> float:
    """Relative gap between ``mu_1`` and the closed-form mean rate (pure kernels)."""
    return abs(funk_hecke_mu(spec, 1) / pure_mathfrak_C(spec.d, spec.beta, spec.a1) - 1.0)
