"""Even/odd products, normalization constants, and path enumeration."""

import numpy as np
import pytest

from icart.core import (
    IrrepTensor,
    build_irreducible,
    contract,
    outer_power,
    random_rotation,
    random_unit,
    rotate,
    symmetry_violation,
    trace_violation,
)
from icart.product import (
    enumerate_paths,
    norm_const_even,
    norm_const_odd,
    product,
    product_even,
    product_odd,
    product_table,
)


def _even_triples(l_cap):
    for l1 in range(l_cap + 1):
        for l2 in range(l_cap + 1):
            for l3 in range(abs(l1 - l2), min(l1 + l2, l_cap) + 1):
                if (l1 + l2 - l3) % 2 == 0:
                    yield l1, l2, l3


def test_norm_const_even_values():
    for l in range(5):
        assert norm_const_even(l, 0, l) == pytest.approx(1.0, abs=1e-15)
    assert norm_const_even(1, 1, 0) == pytest.approx(1.0, abs=1e-15)
    assert norm_const_even(1, 1, 2) == pytest.approx(0.75, abs=1e-15)


def test_norm_const_odd_values():
    assert norm_const_odd(1, 1, 1) == pytest.approx(1.0, abs=1e-15)
    assert norm_const_odd(2, 1, 2) == pytest.approx(2.0 / 3.0, abs=1e-15)


def test_norm_const_parity_and_triangle_rejections():
    with pytest.raises(ValueError):
        norm_const_even(1, 1, 1)
    with pytest.raises(ValueError):
        norm_const_odd(1, 1, 2)
    with pytest.raises(ValueError):
        norm_const_odd(1, 1, 3)  # triangle bound
    with pytest.raises(ValueError):
        norm_const_even(2, 0, 4)


def test_even_product_scalar_case():
    rng = np.random.default_rng(0)
    r = random_unit(rng)
    t1 = build_irreducible(r, 1)
    z = product_even(t1, t1, 0)
    assert z.components[0] == pytest.approx(1.0, abs=1e-14)


def test_even_product_reproduces_rank2_construction():
    rng = np.random.default_rng(1)
    r = random_unit(rng)
    t1 = build_irreducible(r, 1)
    got = product_even(t1, t1, 2).components
    want = build_irreducible(r, 2).components
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_even_product_identity_with_scalar():
    rng = np.random.default_rng(2)
    for l in range(1, 5):
        x = build_irreducible(random_unit(rng), l)
        one = IrrepTensor(0, [1.0])
        got = product_even(x, one, l).components
        np.testing.assert_allclose(got, x.components, atol=1e-14)


def test_unity_normalization_all_even_triples():
    rng = np.random.default_rng(3)
    for _ in range(5):
        r = random_unit(rng)
        tensors = {l: build_irreducible(r, l) for l in range(5)}
        for l1, l2, l3 in _even_triples(4):
            z = product_even(tensors[l1], tensors[l2], l3)
            unity = contract(z, IrrepTensor(l3, outer_power(r.xyz, l3), False), l3)
            assert unity == pytest.approx(1.0, abs=1e-10), (l1, l2, l3)


def test_product_closure_symmetric_traceless():
    rng = np.random.default_rng(4)
    for l1, l2, l3 in _even_triples(4):
        x = build_irreducible(random_unit(rng), l1)
        y = build_irreducible(random_unit(rng), l2)
        z = product_even(x, y, l3)
        assert symmetry_violation(z) <= 1e-10
        assert trace_violation(z) <= 1e-10


def test_odd_product_is_cross_product():
    rng = np.random.default_rng(5)
    for _ in range(100):
        x = rng.normal(size=3)
        y = rng.normal(size=3)
        z = product_odd(IrrepTensor(1, x), IrrepTensor(1, y), 1)
        np.testing.assert_allclose(z.components, np.cross(x, y), atol=1e-12)


def test_odd_product_same_vector_vanishes():
    v = IrrepTensor(1, [0.3, -0.4, 0.5])
    np.testing.assert_allclose(product_odd(v, v, 1).components, 0.0, atol=1e-15)


def test_odd_product_rank2_properties():
    rng = np.random.default_rng(6)
    a, b = random_unit(rng), random_unit(rng)
    z = product_odd(build_irreducible(a, 2), build_irreducible(b, 1), 2)
    assert symmetry_violation(z) <= 1e-12
    assert trace_violation(z) <= 1e-12
    rot = random_rotation(rng, parity=-1)
    za = product_odd(
        rotate(build_irreducible(a, 2), rot),
        rotate(build_irreducible(b, 1), rot),
        2,
    )
    expected = rotate(z, rot).components * rot.parity
    np.testing.assert_allclose(za.components, expected, atol=1e-10)


def test_product_dispatch_and_triangle_error():
    rng = np.random.default_rng(7)
    x = build_irreducible(random_unit(rng), 1)
    y = build_irreducible(random_unit(rng), 1)
    assert product(x, y, 1).rank == 1  # odd branch
    assert product(x, y, 2).rank == 2  # even branch
    with pytest.raises(ValueError):
        product(x, y, 3)


def test_product_strict_mode_rejects_reducible_input():
    raw = IrrepTensor(2, np.outer([0, 0, 1.0], [0, 0, 1.0]))
    one = IrrepTensor(0, [1.0])
    with pytest.raises(ValueError):
        product_even(raw, one, 2, strict=True)


def test_equivariance_under_full_orthogonal_group():
    rng = np.random.default_rng(8)
    cases = [(1, 1, 2), (2, 2, 2), (3, 2, 3), (2, 2, 0), (2, 1, 2), (3, 3, 2)]
    for trial in range(30):
        parity = 1 if trial % 2 == 0 else -1
        rot = random_rotation(rng, parity)
        a, b = random_unit(rng), random_unit(rng)
        for l1, l2, l3 in cases:
            x = build_irreducible(a, l1)
            y = build_irreducible(b, l2)
            z = product(x, y, l3)
            zr = product(rotate(x, rot), rotate(y, rot), l3)
            expected = rotate(z, rot).components
            if (l1 + l2 - l3) % 2 == 1:
                expected = expected * parity
            np.testing.assert_allclose(zr.components, expected, atol=1e-10)


def test_bilinearity():
    rng = np.random.default_rng(9)
    x1 = build_irreducible(random_unit(rng), 2)
    x2 = build_irreducible(random_unit(rng), 2)
    y = build_irreducible(random_unit(rng), 2)
    alpha, beta = 0.7, -1.3
    combo = IrrepTensor(2, alpha * x1.components + beta * x2.components)
    lhs = product_even(combo, y, 2).components
    rhs = (
        alpha * product_even(x1, y, 2).components
        + beta * product_even(x2, y, 2).components
    )
    np.testing.assert_allclose(lhs, rhs, atol=1e-13)


def test_commutativity_even_products():
    rng = np.random.default_rng(10)
    x = build_irreducible(random_unit(rng), 2)
    y = build_irreducible(random_unit(rng), 2)
    for l3 in (0, 2, 4):
        np.testing.assert_allclose(
            product_even(x, y, l3).components,
            product_even(y, x, l3).components,
            atol=1e-12,
        )


def test_coefficient_table_lengths():
    spec = product_table(2, 2, 2)  # k=1, even
    assert len(spec.coefficients) == min(2, 2) - 1 + 1
    spec_odd = product_table(2, 1, 2)  # 2k+1=1, k=0
    assert len(spec_odd.coefficients) == min(2, 1) - 0


def test_table_cache_idempotent():
    a = product_table(1, 1, 2)
    b = product_table(1, 1, 2)
    assert a is b


def test_enumerate_paths_examples():
    full = enumerate_paths(1, 1, 2, "full")
    sym = enumerate_paths(1, 1, 2, "sym")
    assert {(p.leaves, p.intermediates) for p in full} == {((0, 1), (1,)), ((1, 0), (1,))}
    assert len(sym) == 1
    assert sym[0].multiplicity == 2
    single = enumerate_paths(3, 0, 1, "full")
    assert len(single) == 1 and single[0].leaves == (0,)


def test_enumerate_paths_nu1_variants_identical():
    for target in range(3):
        full = enumerate_paths(2, target, 1, "full")
        sym = enumerate_paths(2, target, 1, "sym")
        assert [(p.leaves, p.intermediates) for p in full] == [
            (p.leaves, p.intermediates) for p in sym
        ]


def test_enumerate_paths_sym_strictly_smaller_with_mixed_ranks():
    for l_max, target, nu in [(1, 1, 2), (2, 2, 3), (3, 2, 2)]:
        full = enumerate_paths(l_max, target, nu, "full")
        sym = enumerate_paths(l_max, target, nu, "sym")
        assert len(sym) < len(full)
        assert sum(p.multiplicity for p in sym) == len(full)


def test_enumerate_paths_validity():
    for p in enumerate_paths(3, 2, 3, "full"):
        lam = p.leaves[0]
        assert lam <= 3
        for leaf, nxt in zip(p.leaves[1:], p.intermediates):
            assert abs(lam - leaf) <= nxt <= lam + leaf
            assert (lam + leaf - nxt) % 2 == 0
            lam = nxt
        assert p.intermediates[-1] == 2
        assert all(i <= 3 for i in p.intermediates)


def test_enumerate_paths_rejects_bad_order():
    with pytest.raises(ValueError):
        enumerate_paths(2, 1, 0)


def test_enumerate_paths_cap_configurable_upward():
    capped = enumerate_paths(2, 2, 3, "full", intermediate_cap=2)
    raised = enumerate_paths(2, 2, 3, "full", intermediate_cap=4)
    assert len(raised) > len(capped)
    assert any(max(p.intermediates) > 2 for p in raised)


def test_table_cache_concurrent_first_use():
    # idempotent publication: concurrent builders must agree on one object
    import concurrent.futures

    from icart.product import clear_table_cache

    clear_table_cache()
    with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
        specs = list(pool.map(lambda _: product_table(3, 2, 3), range(16)))
    assert all(s is specs[0] for s in specs)
    clear_table_cache()
