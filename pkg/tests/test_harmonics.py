import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from rtjump.harmonics import (SpectralTable, dirichlet_form_Q, funk_hecke_mu, funk_hecke_table,
                              gamma_multiplier_R, gegenbauer_normalized, gegenbauer_quotient_table,
                              gegenbauer_table, laplace_eigenvalue, multiplicity, multiplier_constant, peaked_mu,
                              sobolev_norm_sq)
from rtjump.kernel import KernelSpec, mathfrak_C, truncated_mean_rate
from rtjump.sphere import sphere_area

S = np.linspace(-1, 1, 41)


@pytest.mark.parametrize("n", [0, 1, 2, 5, 17])
def test_gegenbauer_special_cases(n):
    assert np.allclose(gegenbauer_normalized(n, 1, S), special.eval_chebyt(n, S), atol=1e-13)
    assert np.allclose(gegenbauer_normalized(n, 2, S), special.eval_legendre(n, S), atol=1e-13)
    assert np.allclose(gegenbauer_normalized(n, 3, S), special.eval_chebyu(n, S) / (n + 1), atol=1e-13)


@pytest.mark.parametrize("d", [4, 5, 7])
def test_gegenbauer_general_dimension(d):
    lam = (d - 1) / 2
    for n in (1, 3, 8):
        ref = special.eval_gegenbauer(n, lam, S) / special.eval_gegenbauer(n, lam, 1.0)
        assert np.allclose(gegenbauer_normalized(n, d, S), ref, atol=1e-13)


def test_gegenbauer_table_shape_and_endpoint():
    t = gegenbauer_table(10, 3, np.zeros((2, 3)))
    assert t.shape == (11, 2, 3)
    assert np.allclose(gegenbauer_table(30, 4, 1.0), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        gegenbauer_normalized(-1, 2, 0.0)


@settings(max_examples=60, deadline=None)
@given(d=st.integers(1, 6), s=st.floats(-1.0, 0.999))
def test_quotient_table_matches_direct(d, s):
    q = gegenbauer_quotient_table(12, d, s)
    g = gegenbauer_table(12, d, s)
    assert np.allclose(q * (1 - s), 1 - g, atol=1e-10)


@pytest.mark.parametrize("d", [1, 2, 3, 6])
def test_quotient_table_limit_at_one(d):
    # q_n(1) = G_n'(1) = n (n + d - 1) / d
    q = gegenbauer_quotient_table(20, d, np.array([1.0, 1.0 - 1e-15]))
    n = np.arange(21)
    assert np.allclose(q[:, 0], n * (n + d - 1) / d, rtol=1e-12)
    assert np.allclose(q[:, 1], q[:, 0], rtol=1e-10)


def test_multiplicity_and_laplace():
    assert [multiplicity(1, n) for n in range(4)] == [1, 2, 2, 2]
    assert [multiplicity(2, n) for n in range(5)] == [1, 3, 5, 7, 9]
    assert [multiplicity(3, n) for n in range(5)] == [(n + 1) ** 2 for n in range(5)]
    for d in (4, 7):
        for n in (1, 2, 9):
            assert multiplicity(d, n) == math.comb(n + d, d) - math.comb(n + d - 2, d)
    assert multiplicity(2, 200) == 401
    assert laplace_eigenvalue(3, 2) == 12.0
    with pytest.raises(ValueError):
        multiplicity(0, 1)


# -- Funk-Hecke eigenvalues ---------------------------------------------------------

def test_normalized_pure_circle_free_eigenvalues_are_n():
    # d = 2, beta = 1/2, unit mean rate: mu_n = n exactly
    mu = funk_hecke_table(KernelSpec.pure(2, 0.5), 40)
    assert np.allclose(mu, np.arange(41), rtol=1e-10, atol=1e-14)


def _oracle_mu(spec, n, digits=30):
    d, beta = spec.d, spec.beta
    lam = mp.mpf(d - 1) / 2

    def G(s):
        if d == 1:
            return mp.chebyt(n, s)
        return mp.gegenbauer(n, lam, s) / mp.gegenbauer(n, lam, 1)

    with mp.workdps(digits):
        e = 1 - mp.mpf(beta)

        def f(v):
            w = v ** (1 / e)
            s = 1 - w
            jac = w / (e * v)
            return spec.a1 * w ** (-beta - mp.mpf(d) / 2) * (1 - G(s)) * (w * abs(2 - w)) ** (mp.mpf(d - 2) / 2) * jac
        # (1 - G_n) ~ w near 0, so the w^(1-beta) change of variables keeps it smooth
        return float(sphere_area(d - 1) * mp.quad(f, [0, mp.mpf(1) ** e, mp.mpf(2) ** e]))


@pytest.mark.parametrize("d, beta, n", [(1, 0.3, 4), (3, 0.7, 3), (3, 0.2, 6), (4, 0.5, 2)])
def test_funk_hecke_against_mpmath(d, beta, n):
    spec = KernelSpec.pure(d, beta, 0.9)
    assert funk_hecke_mu(spec, n) == pytest.approx(_oracle_mu(spec, n), rel=1e-9)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_mu_one_is_mean_rate(d):
    for spec in (KernelSpec.pure(d, 0.4, 1.7), KernelSpec.smooth_plus_singular(d, 0.6, 1.0, f1=0.5),
                 KernelSpec.mollified(KernelSpec.pure(d, 0.5), 20.0)):
        assert funk_hecke_mu(spec, 1) == pytest.approx(mathfrak_C(spec), rel=1e-10)
        assert funk_hecke_mu(spec, 1, 1e-3) == pytest.approx(truncated_mean_rate(spec, 1e-3), rel=1e-10)
    assert funk_hecke_mu(KernelSpec.pure(d, 0.4), 0) == 0.0


def test_truncated_eigenvalues_below_full():
    spec = KernelSpec.pure(3, 0.5)
    full = funk_hecke_table(spec, 20)
    trunc = funk_hecke_table(spec, 20, 1e-4)
    assert np.all(trunc[1:] < full[1:])
    assert np.all(full[2:] > full[1])


# -- Gamma multiplier ---------------------------------------------------------------------

@pytest.mark.parametrize("d", [1, 2, 3, 4])
@pytest.mark.parametrize("beta", [0.2, 0.5, 0.8])
def test_eigenvalue_over_multiplier_is_constant(d, beta):
    spec = KernelSpec.pure(d, beta, 1.0)
    n = np.arange(1, 33)
    ratio = funk_hecke_table(spec, 32)[1:] / gamma_multiplier_R(d, beta, n)
    assert np.ptp(ratio) / ratio[0] < 1e-6


def test_peaked_eigenvalues_frozen():
    # a1 |k - p|^(-3) on S^2 has eigenvalues 2 pi n
    for n in (1, 2, 7):
        assert peaked_mu(2, 0.5, 1.0, n) == pytest.approx(2 * math.pi * n, rel=1e-10)
        assert gamma_multiplier_R(2, 0.5, n) == pytest.approx(4 * math.pi * n, rel=1e-12)


@pytest.mark.parametrize("d, beta", [(1, 0.3), (2, 0.5), (3, 0.8)])
def test_multiplier_constant_is_degree_free(d, beta):
    k = multiplier_constant(d, beta)
    assert all(multiplier_constant(d, beta, n) == pytest.approx(k, rel=1e-10) for n in (2, 9, 30))
    assert multiplier_constant(2, 0.5) == pytest.approx(0.5, rel=1e-12)


def test_multiplier_edge_cases():
    assert gamma_multiplier_R(2, 0.3, 0) == 0.0
    r = gamma_multiplier_R(1, 0.5, np.arange(5))
    assert r[0] == 0.0 and np.all(np.diff(r) > 0)
    with pytest.raises(ValueError):
        gamma_multiplier_R(2, 1.0, 3)
    with pytest.raises(ValueError):
        gamma_multiplier_R(2, 0.5, -1)


@pytest.mark.parametrize("beta, n", [(0.5, 512), (0.9, 512), (0.1, 10 ** 7)])
def test_multiplier_growth(beta, n):
    # the subtracted constant decays like n^(-2 beta), so small beta needs larger n
    r = gamma_multiplier_R(3, beta, np.array([n, 2 * n]))
    assert r[1] / r[0] == pytest.approx(2 ** (2 * beta), rel=0.01)


# -- spectral table and forms -----------------------------------------------------------

def test_spectral_table_sandwich_band():
    for spec in (KernelSpec.pure(2, 0.5), KernelSpec.pure(3, 0.2), KernelSpec.smooth_plus_singular(2, 0.7, KernelSpec.pure(2, 0.7).a1, f1=0.05)):
        ratio = SpectralTable.build(spec, 128).sandwich_ratio()
        assert ratio.max() / ratio.min() <= 10.0


def test_dirichlet_form():
    table = SpectralTable.build(KernelSpec.pure(2, 0.5), 8)
    # Q(f, f) = sum mu_n |c|^2 with mu_n = n
    coeffs = {(0, 0): 5.0, (1, -1): 1.0, (1, 0): 2.0, (3, 2): 1j}
    assert dirichlet_form_Q(coeffs, table) == pytest.approx(1 * 5 + 3 * 1, rel=1e-10)
    assert dirichlet_form_Q([0.0, [1.0, 1.0], 2.0], table) == pytest.approx(2 + 8, rel=1e-10)
    assert sobolev_norm_sq({1: [1.0]}, table) == pytest.approx(1 + 2 ** 0.5)
    with pytest.raises(ValueError):
        dirichlet_form_Q({9: 1.0}, table)
    assert table.gap == pytest.approx(1.0, rel=1e-10)
