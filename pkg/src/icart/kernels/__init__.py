"""Hot numeric kernels with a compiled (Cython) and a pure-numpy backend.

The backend is chosen at import time: the compiled extension if it built,
otherwise the numpy fallback.  ``ICART_KERNELS=python|compiled|auto``
overrides the choice, as does :func:`use_backend`.  Each backend is
deterministic run to run; across backends results agree to a few ulp (the
numpy fallback reduces segments pairwise, the compiled loop sequentially),
and the integer operation counters are identical everywhere.

Sparse tables (:class:`BilinearTable`, :class:`LinearTable`) are immutable
after construction; their transposed views are built lazily and published
atomically (plain attribute assignment under the GIL), which makes
concurrent first use safe.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = [
    "BilinearTable",
    "LinearTable",
    "bilinear_apply",
    "linear_apply",
    "segment_sum",
    "backend_name",
    "use_backend",
    "available_backends",
    "counters",
    "reset_counters",
]


class _Counters:
    """Deterministic operation counters incremented by every kernel call.

    ``madds`` counts one multiply-add per nonzero table entry per batch row;
    benchmarks read and reset these around timed regions.
    """

    __slots__ = ("madds", "calls")

    def __init__(self):
        self.reset()

    def reset(self):
        self.madds = 0
        self.calls = 0

    def snapshot(self):
        return {"madds": self.madds, "calls": self.calls}


counters = _Counters()


def reset_counters():
    counters.reset()


def _sorted_triplet(out_idx, a_idx, b_idx, coeff):
    out_idx = np.asarray(out_idx, dtype=np.int64)
    a_idx = np.asarray(a_idx, dtype=np.int64)
    b_idx = np.asarray(b_idx, dtype=np.int64)
    coeff = np.asarray(coeff, dtype=np.float64)
    order = np.lexsort((b_idx, a_idx, out_idx))
    return out_idx[order], a_idx[order], b_idx[order], coeff[order]


class BilinearTable:
    """Sparse bilinear map ``C[:, o] += w * A[:, a] * B[:, b]``.

    Entries are sorted by output index so that both backends accumulate in
    the same order.  ``wrt_a()`` / ``wrt_b()`` return the transposed-slot
    tables used by reverse-mode adjoints; the product is bilinear, so each
    adjoint is again a :class:`BilinearTable`.
    """

    __slots__ = (
        "out_idx",
        "a_idx",
        "b_idx",
        "coeff",
        "n_out",
        "n_a",
        "n_b",
        "_starts",
        "_uniq",
        "_coeff32",
        "_t_a",
        "_t_b",
    )

    def __init__(self, out_idx, a_idx, b_idx, coeff, n_out, n_a, n_b):
        o, a, b, c = _sorted_triplet(out_idx, a_idx, b_idx, coeff)
        self.out_idx = np.ascontiguousarray(o)
        self.a_idx = np.ascontiguousarray(a)
        self.b_idx = np.ascontiguousarray(b)
        self.coeff = np.ascontiguousarray(c)
        self.n_out = int(n_out)
        self.n_a = int(n_a)
        self.n_b = int(n_b)
        if len(o):
            uniq, starts = np.unique(self.out_idx, return_index=True)
        else:
            uniq = np.zeros(0, dtype=np.int64)
            starts = np.zeros(0, dtype=np.int64)
        self._uniq = uniq
        self._starts = starts
        self._coeff32 = None
        self._t_a = None
        self._t_b = None

    @property
    def nnz(self):
        return len(self.coeff)

    def coeff_for(self, dtype):
        if dtype == np.float64:
            return self.coeff
        if self._coeff32 is None:
            self._coeff32 = self.coeff.astype(np.float32)
        return self._coeff32

    def wrt_a(self):
        """Table computing ``dA`` from ``(dC, B)``."""
        if self._t_a is None:
            self._t_a = BilinearTable(
                self.a_idx, self.out_idx, self.b_idx, self.coeff,
                self.n_a, self.n_out, self.n_b,
            )
        return self._t_a

    def wrt_b(self):
        """Table computing ``dB`` from ``(dC, A)``."""
        if self._t_b is None:
            self._t_b = BilinearTable(
                self.b_idx, self.out_idx, self.a_idx, self.coeff,
                self.n_b, self.n_out, self.n_a,
            )
        return self._t_b


class LinearTable:
    """Sparse linear map ``Y[:, o] += w * X[:, i]`` with a lazy transpose."""

    __slots__ = ("out_idx", "in_idx", "coeff", "n_out", "n_in",
                 "_starts", "_uniq", "_coeff32", "_t")

    def __init__(self, out_idx, in_idx, coeff, n_out, n_in):
        out_idx = np.asarray(out_idx, dtype=np.int64)
        in_idx = np.asarray(in_idx, dtype=np.int64)
        coeff = np.asarray(coeff, dtype=np.float64)
        order = np.lexsort((in_idx, out_idx))
        self.out_idx = np.ascontiguousarray(out_idx[order])
        self.in_idx = np.ascontiguousarray(in_idx[order])
        self.coeff = np.ascontiguousarray(coeff[order])
        self.n_out = int(n_out)
        self.n_in = int(n_in)
        if len(self.out_idx):
            uniq, starts = np.unique(self.out_idx, return_index=True)
        else:
            uniq = np.zeros(0, dtype=np.int64)
            starts = np.zeros(0, dtype=np.int64)
        self._uniq = uniq
        self._starts = starts
        self._coeff32 = None
        self._t = None

    @property
    def nnz(self):
        return len(self.coeff)

    def coeff_for(self, dtype):
        if dtype == np.float64:
            return self.coeff
        if self._coeff32 is None:
            self._coeff32 = self.coeff.astype(np.float32)
        return self._coeff32

    def transpose(self):
        if self._t is None:
            self._t = LinearTable(self.in_idx, self.out_idx, self.coeff,
                                  self.n_in, self.n_out)
        return self._t


from . import _python as _py_backend  # noqa: E402

_compiled_backend = None
try:  # pragma: no cover - exercised only when the extension built
    from . import _cython as _compiled_backend  # type: ignore
except ImportError:
    _compiled_backend = None

_backend = _py_backend
_backend_label = "python"


def available_backends():
    names = ["python"]
    if _compiled_backend is not None:
        names.append("compiled")
    return names


def use_backend(name: str):
    """Select the kernel backend: 'python', 'compiled', or 'auto'."""
    global _backend, _backend_label
    if name == "auto":
        name = "compiled" if _compiled_backend is not None else "python"
    if name == "python":
        _backend, _backend_label = _py_backend, "python"
    elif name == "compiled":
        if _compiled_backend is None:
            raise RuntimeError("compiled kernels are not available")
        _backend, _backend_label = _compiled_backend, "compiled"
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return _backend_label


def backend_name() -> str:
    return _backend_label


def bilinear_apply(table: BilinearTable, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Apply a bilinear table to 2-D operands of shape (rows, n_a)/(rows, n_b)."""
    rows = a.shape[0]
    counters.madds += table.nnz * rows
    counters.calls += 1
    return _backend.bilinear_apply(table, a, b)


def linear_apply(table: LinearTable, x: np.ndarray) -> np.ndarray:
    """Apply a linear table to a 2-D operand of shape (rows, n_in)."""
    rows = x.shape[0]
    counters.madds += table.nnz * rows
    counters.calls += 1
    return _backend.linear_apply(table, x)


def segment_sum(values: np.ndarray, segments: np.ndarray, n_out: int) -> np.ndarray:
    """Sum rows of ``values`` into ``n_out`` buckets; ``segments`` must be sorted."""
    counters.calls += 1
    return _backend.segment_sum(values, segments, n_out)


use_backend(os.environ.get("ICART_KERNELS", "auto"))
