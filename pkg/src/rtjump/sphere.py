"""Points on the unit sphere S^d embedded in R^{d+1}.

States are plain float64 arrays of length ``d + 1``; there is no wrapper
class.  Every function that produces a state renormalizes it.
"""

from __future__ import annotations

import math

import numpy as np

NORM_TOL = 1e-12
ORTHO_TOL = 1e-8


class InvalidDimensionError(ValueError):
    pass


class ContractViolation(ValueError):
    pass


def sphere_area(d: int) -> float:
    """Surface measure of S^d, ``2 pi^{(d+1)/2} / Gamma((d+1)/2)``.

    ``sphere_area(0) == 2`` (the two points of S^0).
    """
    if d < 0:
        raise InvalidDimensionError(f"sphere dimension must be >= 0, got {d}")
    return 2.0 * math.pi ** ((d + 1) / 2) / math.gamma((d + 1) / 2)


def unit_vector(coords) -> np.ndarray:
    """Validate and normalize ``coords`` into a state on S^d (d >= 1)."""
    k = np.array(coords, dtype=np.float64).reshape(-1)
    if k.size < 2:
        raise InvalidDimensionError(f"need at least 2 coordinates (d >= 1), got {k.size}")
    n = np.linalg.norm(k)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError("cannot normalize a zero or non-finite vector")
    return k / n


def uniform_on_sphere(d: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw from the normalized surface measure on S^d.

    Returns shape ``(d + 1,)`` when ``size`` is None, else ``(size, d + 1)``.
    """
    if d < 1:
        raise InvalidDimensionError(f"d must be >= 1, got {d}")
    shape = (d + 1,) if size is None else (size, d + 1)
    while True:
        g = rng.standard_normal(shape)
        n = np.linalg.norm(g, axis=-1, keepdims=True)
        # zero-norm Gaussian draws have probability zero; retry keeps the contract
        if np.all(n > 0):
            return g / n


def tangent_direction(k: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform unit vector on the great (d-1)-sphere orthogonal to ``k``.

    For d = 1 the tangent sphere is S^0 and one of the two unit tangents is
    returned with probability 1/2.  For d >= 2 a Gaussian in R^{d+1} is
    projected onto the tangent hyperplane and renormalized.
    """
    k = np.asarray(k, dtype=np.float64)
    if k.size < 2:
        raise InvalidDimensionError("state must have at least 2 coordinates")
    if abs(np.dot(k, k) - 1.0) > 1e-10:
        raise ContractViolation("tangent_direction requires |k| = 1")
    if k.size == 2:
        sign = 1.0 if rng.random() < 0.5 else -1.0
        return sign * np.array([-k[1], k[0]])
    while True:
        g = rng.standard_normal(k.size)
        u = g - np.dot(g, k) * k
        n = np.linalg.norm(u)
        if n > 1e-8:
            u /= n
            # one re-projection pass removes the residual k-component
            u -= np.dot(u, k) * k
            return u / np.linalg.norm(u)


def jump(k: np.ndarray, s: float, u: np.ndarray) -> np.ndarray:
    """Post-collision state ``s k + sqrt(1 - s^2) u``, renormalized."""
    k = np.asarray(k, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if not -1.0 <= s <= 1.0:
        raise ValueError(f"jump cosine must lie in [-1, 1], got {s}")
    if abs(np.dot(u, k)) > ORTHO_TOL:
        raise ContractViolation(f"tangent not orthogonal to k (u.k = {np.dot(u, k):.3e})")
    kp = s * k + math.sqrt(max(0.0, 1.0 - s * s)) * u
    return kp / np.linalg.norm(kp)
