import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rtjump.sphere import (ContractViolation, InvalidDimensionError, jump, sphere_area,
                           tangent_direction, uniform_on_sphere, unit_vector)


@pytest.mark.parametrize("d, area", [(0, 2.0), (1, 2 * math.pi), (2, 4 * math.pi),
                                     (3, 2 * math.pi ** 2), (4, 8 * math.pi ** 2 / 3)])
def test_sphere_area_known_values(d, area):
    assert sphere_area(d) == pytest.approx(area, rel=1e-14)


def test_sphere_area_rejects_negative():
    with pytest.raises(InvalidDimensionError):
        sphere_area(-1)


def test_unit_vector_normalizes_and_validates():
    k = unit_vector([3.0, 4.0])
    assert np.allclose(k, [0.6, 0.8])
    with pytest.raises(InvalidDimensionError):
        unit_vector([1.0])
    with pytest.raises(ValueError):
        unit_vector([0.0, 0.0, 0.0])


@pytest.mark.parametrize("d", [1, 2, 3, 5])
def test_uniform_on_sphere_moments(d, rng):
    x = uniform_on_sphere(d, rng, size=40000)
    assert np.allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-14)
    # E[x] = 0 and E[x x^T] = I / (d + 1)
    assert np.all(np.abs(x.mean(axis=0)) < 5 / math.sqrt(40000))
    second = x.T @ x / len(x)
    assert np.allclose(second, np.eye(d + 1) / (d + 1), atol=0.015)


def test_tangent_direction_circle_is_two_point(rng):
    k = np.array([0.6, 0.8])
    seen = {tuple(np.round(tangent_direction(k, rng), 12)) for _ in range(200)}
    assert seen == {(-0.8, 0.6), (0.8, -0.6)}


def test_tangent_direction_requires_unit_state(rng):
    with pytest.raises(ContractViolation):
        tangent_direction(np.array([1.0, 1.0, 0.0]), rng)


def test_tangent_direction_is_uniform_on_great_sphere(rng):
    # on S^2 the tangent circle of the north pole: angle must be uniform
    k = np.array([0.0, 0.0, 1.0])
    u = np.array([tangent_direction(k, rng) for _ in range(20000)])
    ang = np.arctan2(u[:, 1], u[:, 0])
    hist, _ = np.histogram(ang, bins=8, range=(-math.pi, math.pi))
    expected = 20000 / 8
    chi2 = np.sum((hist - expected) ** 2 / expected)
    assert chi2 < 26.1  # 0.05% point of chi^2_7


@settings(max_examples=200, deadline=None)
@given(d=st.integers(1, 6), seed=st.integers(0, 2 ** 32 - 1), s=st.floats(-1.0, 1.0))
def test_jump_properties(d, seed, s):
    rng = np.random.Generator(np.random.Philox(seed))
    k = uniform_on_sphere(d, rng)
    u = tangent_direction(k, rng)
    assert abs(u @ k) <= 1e-12
    assert abs(u @ u - 1.0) <= 1e-12
    kp = jump(k, s, u)
    assert abs(kp @ kp - 1.0) <= 1e-12
    assert abs(kp @ k - s) <= 1e-12


def test_jump_contract_checks():
    k = np.array([0.0, 0.0, 1.0])
    with pytest.raises(ContractViolation):
        jump(k, 0.5, np.array([0.0, 0.6, 0.8]))
    with pytest.raises(ValueError):
        jump(k, 1.5, np.array([1.0, 0.0, 0.0]))
