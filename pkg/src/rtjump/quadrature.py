"""Gauss-Jacobi rules for integrands with algebraic endpoint singularities.

All rules are cached by ``(n, a, b)`` and refined by node doubling until two
successive values agree to a relative tolerance.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special
from scipy.linalg import eigh_tridiagonal

DEFAULT_NODES = 64
MAX_NODES = 4096
RTOL = 1e-11


class QuadratureError(ArithmeticError):
    pass


def _golub_welsch(n, a, b):
    # scipy's roots_jacobi loses several digits in the weights for strongly
    # singular exponents at large n; the symmetric Jacobi matrix does not.
    k = np.arange(n, dtype=np.float64)
    ab = a + b
    with np.errstate(divide="ignore", invalid="ignore"):
        diag = (b * b - a * a) / ((2 * k + ab) * (2 * k + ab + 2))
    diag[0] = (b - a) / (ab + 2)
    k1 = k[1:]
    with np.errstate(divide="ignore", invalid="ignore"):
        off2 = (4 * k1 * (k1 + a) * (k1 + b) * (k1 + ab)
                / ((2 * k1 + ab) ** 2 * (2 * k1 + ab + 1) * (2 * k1 + ab - 1)))
    if n > 1:
        # (k + a + b) / (2k + a + b - 1) is 1 at k = 1; avoids 0/0 when a + b = -1
        off2[0] = 4 * (1 + a) * (1 + b) / ((2 + ab) ** 2 * (3 + ab))
    off = np.sqrt(off2)
    x, v = eigh_tridiagonal(diag, off)
    mu0 = 2.0 ** (ab + 1) * math.exp(special.gammaln(a + 1) + special.gammaln(b + 1)
                                     - special.gammaln(ab + 2))
    return x, mu0 * v[0] ** 2


@lru_cache(maxsize=256)
def jacobi_rule(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1] for the weight ``(1 - x)^a (1 + x)^b``."""
    if a == 0.0 and b == 0.0:
        x, w = special.roots_legendre(n)
    else:
        x, w = _golub_welsch(n, a, b)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def _rule_sum(f, lo, hi, a, b, n):
    x, w = jacobi_rule(n, a, b)
    half = 0.5 * (hi - lo)
    s = lo + half * (1.0 + x)
    vals = np.asarray(f(s), dtype=np.float64)
    return half ** (1.0 + a + b) * (vals @ w)


def gauss_jacobi(f, lo: float, hi: float, a: float = 0.0, b: float = 0.0, *,
                 n: int = DEFAULT_NODES, rtol: float = RTOL, atol: float = 0.0):
    """Integrate ``f(s) (hi - s)^a (s - lo)^b`` over ``[lo, hi]``.

    ``f`` is vectorized over its argument and may return extra leading axes
    (shape ``(..., nodes)``), in which case an array of integrals is returned.
    The node count is doubled from ``n`` until successive values agree.
    """
    if hi < lo:
        raise ValueError("empty interval with hi < lo")
    if hi == lo:
        probe = np.asarray(f(np.array([lo])), dtype=np.float64)
        return np.zeros(probe.shape[:-1]) if probe.ndim > 1 else 0.0
    if a <= -1.0 or b <= -1.0:
        raise ValueError(f"endpoint exponents must exceed -1, got a={a}, b={b}")
    prev = _rule_sum(f, lo, hi, a, b, n)
    while True:
        n *= 2
        cur = _rule_sum(f, lo, hi, a, b, n)
        if not np.all(np.isfinite(cur)):
            raise QuadratureError(f"non-finite integrand on [{lo}, {hi}]")
        err = np.max(np.abs(cur - prev))
        scale = np.max(np.abs(cur))
        if err <= rtol * scale or err <= atol:
            return cur
        if n >= MAX_NODES:
            raise QuadratureError(
                f"no convergence on [{lo}, {hi}] (a={a}, b={b}) after {n} nodes: "
                f"last change {err:.3e}, value scale {scale:.3e}")
        prev = cur


def quadrature_singular(g, alpha: float, split: float = 0.5, *, rtol: float = RTOL):
    """Integrate ``g(s) (1 - s)^(-alpha)`` over [-1, 1] for ``alpha`` in (0, 1).

    Plain Gauss-Legendre on ``[-1, split]`` and Gauss-Jacobi with the exact
    power weight on ``[split, 1]``.

    Examples
    --------
    >>> round(float(quadrature_singular(lambda s: np.ones_like(s), 0.5)), 9)
    2.828427125
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    left = gauss_jacobi(lambda s: g(s) * (1.0 - s) ** (-alpha), -1.0, split, rtol=rtol)
    right = gauss_jacobi(g, split, 1.0, a=-alpha, rtol=rtol)
    return left + right


def log_panels(f, wl: float, wu: float, breaks=(), *, rtol: float = RTOL):
    """Integrate ``f(w)`` over ``[wl, wu]`` (``0 < wl``) in the variable ``log w``.

    Suited to integrands with power-law behaviour near 0; ``breaks`` are
    interior points (in w) where the integrand changes scale.
    """
    if not 0.0 < wl <= wu:
        raise ValueError(f"log_panels needs 0 < wl <= wu, got [{wl}, {wu}]")
    edges = [np.log(wl)] + sorted(np.log(b) for b in breaks if wl < b < wu) + [np.log(wu)]
    total = 0.0
    for v0, v1 in zip(edges[:-1], edges[1:]):
        def fv(v):
            w = np.exp(v)
            return f(w) * w
        total = total + gauss_jacobi(fv, v0, v1, rtol=rtol)
    return total
