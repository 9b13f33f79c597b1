"""Compiled inner loops: sequential composition of jumps on the sphere.

A jump is encoded by ``w = 1 - s`` and a Gaussian vector ``g``.  The tangent
direction at the current momentum ``k`` is the normalized projection of
``g`` onto ``k^perp``; for ``d = 1`` it is ``sign(g_0)`` times the rotated
momentum.  Working with ``w`` keeps ``sqrt(1 - s^2) = sqrt(w (2 - w))``
accurate for grazing jumps.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency, kept lenient here
    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=True, inline="always")
def _step(k, w, g, i):
    """Apply jump ``i`` to ``k`` in place."""
    D = k.shape[0]
    c = np.sqrt(w * (2.0 - w))
    s = 1.0 - w
    if D == 2:
        sg = c if g[i, 0] >= 0.0 else -c
        k0 = s * k[0] - sg * k[1]
        k1 = s * k[1] + sg * k[0]
        f = 1.5 - 0.5 * (k0 * k0 + k1 * k1)
        k[0] = k0 * f
        k[1] = k1 * f
        return
    dot = 0.0
    gg = 0.0
    for j in range(D):
        dot += g[i, j] * k[j]
        gg += g[i, j] * g[i, j]
    perp = gg - dot * dot
    nn = 0.0
    if perp > 1e-8 * gg:
        inv = c / np.sqrt(perp)
        a = s - inv * dot
        for j in range(D):
            k[j] = a * k[j] + inv * g[i, j]
            nn += k[j] * k[j]
    else:
        # g numerically parallel to k: use the least aligned axis instead
        jmin = 0
        for j in range(D):
            if abs(k[j]) < abs(k[jmin]):
                jmin = j
        kj = k[jmin]
        inv = c / np.sqrt(1.0 - kj * kj)
        for j in range(D):
            k[j] = (s - inv * kj) * k[j]
        k[jmin] += inv
        for j in range(D):
            nn += k[j] * k[j]
    # |k| = 1 + O(1e-16), so one Newton step of 1/sqrt is exact to rounding
    f = 1.5 - 0.5 * nn
    for j in range(D):
        k[j] *= f


@njit(cache=True)
def compose_full(k0, w, g):
    """All momenta ``k_0 .. k_J``; shape ``(J + 1, D)``."""
    J = w.shape[0]
    D = k0.shape[0]
    out = np.empty((J + 1, D))
    k = k0.copy()
    out[0] = k
    for i in range(J):
        _step(k, w[i], g, i)
        out[i + 1] = k
    return out


@njit(cache=True)
def compose_grid(k0, x0, times, w, g, grid):
    """Momentum and position ``x0 - int_0^t m`` at sorted times ``grid``."""
    J = w.shape[0]
    D = k0.shape[0]
    G = grid.shape[0]
    mom = np.empty((G, D))
    pos = np.empty((G, D))
    k = k0.copy()
    x = x0.copy()
    t_prev = 0.0
    gi = 0
    for i in range(J + 1):
        t_next = times[i] if i < J else np.inf
        while gi < G and grid[gi] < t_next:
            dt = grid[gi] - t_prev
            for j in range(D):
                mom[gi, j] = k[j]
                pos[gi, j] = x[j] - dt * k[j]
            gi += 1
        if gi >= G:
            break
        dt = t_next - t_prev
        for j in range(D):
            x[j] -= dt * k[j]
        _step(k, w[i], g, i)
        t_prev = t_next
    return mom, pos


@njit(cache=True)
def compose_grid_levels(k0, x0, times, w, g, grid, etas):
    """``compose_grid`` for several truncations sharing one set of jumps.

    Level ``l`` keeps only the jumps with ``w >= etas[l]``, which is an exact
    realization of the process truncated at ``etas[l]`` (Poisson thinning).
    Returns arrays of shape ``(L, G, D)``.
    """
    L = etas.shape[0]
    G = grid.shape[0]
    D = k0.shape[0]
    mom = np.empty((L, G, D))
    pos = np.empty((L, G, D))
    for lev in range(L):
        keep = w >= etas[lev]
        m, p = compose_grid(k0, x0, times[keep], w[keep], g[keep], grid)
        mom[lev] = m
        pos[lev] = p
    return mom, pos


def warmup():
    """Compile the kernels once (before forking workers)."""
    for D in (2, 3):
        k0 = np.zeros(D)
        k0[-1] = 1.0
        w = np.array([0.5])
        g = np.ones((1, D))
        compose_full(k0, w, g)
        compose_grid(k0, np.zeros(D), np.array([0.5]), w, g, np.array([0.25, 1.0]))
        compose_grid_levels(k0, np.zeros(D), np.array([0.5]), w, g, np.array([1.0]), np.array([0.1]))
