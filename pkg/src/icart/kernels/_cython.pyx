# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend: sequential accumulation in table order."""

import numpy as np

cimport cython
cimport numpy as cnp

ctypedef fused floating:
    float
    double


def _bilinear_impl(cnp.int64_t[::1] out_idx, cnp.int64_t[::1] a_idx,
                   cnp.int64_t[::1] b_idx, floating[::1] coeff,
                   floating[:, ::1] a, floating[:, ::1] b,
                   floating[:, ::1] out):
    cdef Py_ssize_t rows = a.shape[0]
    cdef Py_ssize_t nnz = coeff.shape[0]
    cdef Py_ssize_t r, t
    cdef floating tmp
    for r in range(rows):
        for t in range(nnz):
            tmp = a[r, a_idx[t]] * b[r, b_idx[t]]
            tmp = tmp * coeff[t]
            out[r, out_idx[t]] += tmp


def bilinear_apply(table, a, b):
    a = np.ascontiguousarray(a)
    b = np.ascontiguousarray(b)
    out = np.zeros((a.shape[0], table.n_out), dtype=a.dtype)
    if table.nnz == 0 or a.shape[0] == 0:
        return out
    coeff = table.coeff_for(a.dtype)
    _bilinear_impl(table.out_idx, table.a_idx, table.b_idx, coeff, a, b, out)
    return out


def _linear_impl(cnp.int64_t[::1] out_idx, cnp.int64_t[::1] in_idx,
                 floating[::1] coeff, floating[:, ::1] x,
                 floating[:, ::1] out):
    cdef Py_ssize_t rows = x.shape[0]
    cdef Py_ssize_t nnz = coeff.shape[0]
    cdef Py_ssize_t r, t
    for r in range(rows):
        for t in range(nnz):
            out[r, out_idx[t]] += x[r, in_idx[t]] * coeff[t]


def linear_apply(table, x):
    x = np.ascontiguousarray(x)
    out = np.zeros((x.shape[0], table.n_out), dtype=x.dtype)
    if table.nnz == 0 or x.shape[0] == 0:
        return out
    coeff = table.coeff_for(x.dtype)
    _linear_impl(table.out_idx, table.in_idx, coeff, x, out)
    return out


def _segment_impl(floating[:, ::1] values, cnp.int64_t[::1] segments,
                  floating[:, ::1] out):
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t d = values.shape[1]
    cdef Py_ssize_t i, j
    cdef cnp.int64_t s
    for i in range(n):
        s = segments[i]
        for j in range(d):
            out[s, j] += values[i, j]


def segment_sum(values, segments, n_out):
    values = np.ascontiguousarray(values)
    segments = np.ascontiguousarray(segments, dtype=np.int64)
    orig_shape = values.shape
    if orig_shape[0] == 0:
        return np.zeros((n_out,) + orig_shape[1:], dtype=values.dtype)
    flat = values.reshape(orig_shape[0], -1)
    out = np.zeros((n_out, flat.shape[1]), dtype=values.dtype)
    _segment_impl(flat, segments, out)
    return out.reshape((n_out,) + orig_shape[1:])
