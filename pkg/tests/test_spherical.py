"""Spherical baseline: harmonics, coupling coefficients, cross-checks."""

import math

import numpy as np
import pytest

from icart import kernels
from icart.core import legendre, random_unit
from icart.spherical import (
    SphVector,
    cg_coefficient,
    cg_product,
    cg_product_batch,
    real_sh,
)


def test_cg_known_value():
    assert cg_coefficient(1, 0, 1, 0, 0, 0) == pytest.approx(-1 / math.sqrt(3), abs=1e-12)


def test_cg_selection_rules_zero():
    # scalar output pairs only equal real components
    assert cg_coefficient(1, 1, 1, 0, 0, 0) == 0.0
    assert cg_coefficient(1, -1, 1, 1, 0, 0) == 0.0
    assert cg_coefficient(2, 0, 1, 0, 0, 0) == 0.0  # triangle


def test_cg_scalar_coupling_identity():
    for l in range(5):
        assert cg_coefficient(l, 0, 0, 0, l, 0) == pytest.approx(1.0, abs=1e-12)


def test_cg_m_bound_rejected():
    with pytest.raises(ValueError):
        cg_coefficient(1, 2, 1, 0, 0, 0)


def test_real_sh_degree0_constant():
    rng = np.random.default_rng(0)
    for _ in range(5):
        y = real_sh(0, random_unit(rng))
        assert y.components[0] == pytest.approx(1 / math.sqrt(4 * math.pi), abs=1e-14)


def test_real_sh_axis_alignment():
    y = real_sh(1, [0.0, 0.0, 1.0])
    assert abs(y.components[1]) > 0.1
    assert y.components[0] == pytest.approx(0.0, abs=1e-15)
    assert y.components[2] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("l", range(5))
def test_real_sh_addition_theorem_norm(l):
    rng = np.random.default_rng(l)
    for _ in range(20):
        y = real_sh(l, random_unit(rng))
        norm = float(np.sum(y.components ** 2))
        assert norm == pytest.approx((2 * l + 1) / (4 * math.pi), abs=1e-12)


def test_real_sh_degree_cap():
    with pytest.raises(ValueError):
        real_sh(5, [0.0, 0.0, 1.0])


def test_sph_vector_length_validation():
    with pytest.raises(ValueError):
        SphVector(2, np.zeros(4))


def test_cg_product_with_scalar_scales():
    rng = np.random.default_rng(1)
    u = real_sh(2, random_unit(rng))
    s = SphVector(0, [2.0])
    got = cg_product(u, s, 2)
    np.testing.assert_allclose(got.components, 2.0 * u.components, atol=1e-12)


def test_cg_product_vector_scalar_output_is_dot():
    rng = np.random.default_rng(2)
    a, b = random_unit(rng), random_unit(rng)
    ya, yb = real_sh(1, a), real_sh(1, b)
    got = cg_product(ya, yb, 0).components[0]
    # scalar coupling of two degree-1 vectors is proportional to their dot
    dot = float(a.xyz @ b.xyz)
    base = cg_product(real_sh(1, a), real_sh(1, a), 0).components[0]
    assert got == pytest.approx(base * dot, abs=1e-12)


def test_cg_product_triangle_violation():
    u = SphVector(1, [0.0, 1.0, 0.0])
    with pytest.raises(ValueError):
        cg_product(u, u, 3)


@pytest.mark.parametrize("l", range(1, 5))
def test_scalar_coupling_tracks_legendre(l):
    rng = np.random.default_rng(10 + l)
    ratios = []
    for _ in range(50):
        a, b = random_unit(rng), random_unit(rng)
        s = cg_product(real_sh(l, a), real_sh(l, b), 0).components[0]
        p = legendre(l, float(np.clip(a.xyz @ b.xyz, -1, 1)))
        ratios.append(s / p)
    ratios = np.asarray(ratios)
    assert np.max(np.abs(ratios - ratios[0])) < 1e-8


def test_cg_product_counters():
    kernels.reset_counters()
    u = SphVector(1, [1.0, 0.0, 0.0])
    cg_product(u, u, 2)
    assert kernels.counters.madds == 3 * 3 * 5
    kernels.reset_counters()
    cg_product_batch(1, 1, 2, np.ones((4, 3)), np.ones((4, 3)))
    assert kernels.counters.madds == 3 * 3 * 5 * 4
