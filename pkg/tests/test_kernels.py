"""Backend parity: the compiled and numpy kernels must agree bit for bit."""

import numpy as np
import pytest

from icart import kernels
from icart.kernels import BilinearTable, LinearTable
from icart.product import product_table

needs_compiled = pytest.mark.skipif(
    "compiled" not in kernels.available_backends(),
    reason="compiled kernels not built",
)


@pytest.fixture
def restore_backend():
    previous = kernels.backend_name()
    yield
    kernels.use_backend(previous)


def _random_table(rng, n_out, n_a, n_b, nnz):
    return BilinearTable(
        rng.integers(0, n_out, nnz),
        rng.integers(0, n_a, nnz),
        rng.integers(0, n_b, nnz),
        rng.normal(size=nnz),
        n_out, n_a, n_b,
    )


def test_bilinear_against_dense_einsum():
    rng = np.random.default_rng(0)
    table = _random_table(rng, 7, 5, 6, 40)
    a = rng.normal(size=(9, 5))
    b = rng.normal(size=(9, 6))
    dense = np.zeros((7, 5, 6))
    np.add.at(dense, (table.out_idx, table.a_idx, table.b_idx), table.coeff)
    want = np.einsum("oab,ra,rb->ro", dense, a, b)
    got = kernels.bilinear_apply(table, a, b)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_linear_against_dense():
    rng = np.random.default_rng(1)
    table = LinearTable(
        rng.integers(0, 6, 30), rng.integers(0, 4, 30), rng.normal(size=30), 6, 4
    )
    x = rng.normal(size=(5, 4))
    dense = np.zeros((6, 4))
    np.add.at(dense, (table.out_idx, table.in_idx), table.coeff)
    np.testing.assert_allclose(kernels.linear_apply(table, x), x @ dense.T, atol=1e-12)


def test_segment_sum_matches_loop():
    rng = np.random.default_rng(2)
    vals = rng.normal(size=(10, 3))
    seg = np.sort(rng.integers(0, 4, 10))
    want = np.zeros((4, 3))
    for row, s in zip(vals, seg):
        want[s] += row
    np.testing.assert_allclose(kernels.segment_sum(vals, seg, 4), want, atol=1e-14)


@needs_compiled
def test_backends_agree(restore_backend):
    """Each backend is deterministic; across backends only the summation
    order differs, so results agree to a few ulp."""
    rng = np.random.default_rng(3)
    spec = product_table(3, 2, 3)
    a = rng.normal(size=(17, 27))
    b = rng.normal(size=(17, 9))
    kernels.use_backend("python")
    py = kernels.bilinear_apply(spec.table, a, b)
    assert np.array_equal(py, kernels.bilinear_apply(spec.table, a, b))
    kernels.use_backend("compiled")
    cy = kernels.bilinear_apply(spec.table, a, b)
    assert np.array_equal(cy, kernels.bilinear_apply(spec.table, a, b))
    np.testing.assert_allclose(py, cy, rtol=1e-13, atol=1e-13)

    table = LinearTable(
        rng.integers(0, 11, 60), rng.integers(0, 9, 60), rng.normal(size=60), 11, 9
    )
    x = rng.normal(size=(13, 9))
    kernels.use_backend("python")
    py = kernels.linear_apply(table, x)
    kernels.use_backend("compiled")
    cy = kernels.linear_apply(table, x)
    np.testing.assert_allclose(py, cy, rtol=1e-13, atol=1e-13)

    vals = rng.normal(size=(40, 6))
    seg = np.sort(rng.integers(0, 8, 40))
    kernels.use_backend("python")
    py = kernels.segment_sum(vals, seg, 8)
    kernels.use_backend("compiled")
    cy = kernels.segment_sum(vals, seg, 8)
    np.testing.assert_allclose(py, cy, rtol=1e-13, atol=1e-13)


@needs_compiled
def test_float32_supported(restore_backend):
    rng = np.random.default_rng(4)
    spec = product_table(2, 2, 2)
    a = rng.normal(size=(5, 9)).astype(np.float32)
    b = rng.normal(size=(5, 9)).astype(np.float32)
    for backend in kernels.available_backends():
        kernels.use_backend(backend)
        out = kernels.bilinear_apply(spec.table, a, b)
        assert out.dtype == np.float32


def test_counters_deterministic():
    spec = product_table(2, 1, 1)
    a = np.ones((4, 9))
    b = np.ones((4, 3))
    kernels.reset_counters()
    kernels.bilinear_apply(spec.table, a, b)
    first = kernels.counters.snapshot()
    kernels.reset_counters()
    kernels.bilinear_apply(spec.table, a, b)
    assert kernels.counters.snapshot() == first
    assert first["madds"] == spec.table.nnz * 4


def test_transposed_tables_shapes():
    spec = product_table(2, 1, 1)
    t = spec.table
    assert t.wrt_a().n_out == t.n_a and t.wrt_a().n_a == t.n_out
    assert t.wrt_b().n_out == t.n_b and t.wrt_b().n_b == t.n_a


def test_empty_table():
    table = BilinearTable([], [], [], [], 4, 3, 2)
    out = kernels.bilinear_apply(table, np.ones((2, 3)), np.ones((2, 2)))
    np.testing.assert_array_equal(out, np.zeros((2, 4)))
