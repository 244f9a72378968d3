"""Pure-numpy kernel backend: presorted tables reduced segment-wise."""

from __future__ import annotations

import numpy as np


def bilinear_apply(table, a, b):
    rows = a.shape[0]
    out = np.zeros((rows, table.n_out), dtype=a.dtype)
    if table.nnz == 0 or rows == 0:
        return out
    coeff = table.coeff_for(a.dtype)
    contrib = a[:, table.a_idx] * b[:, table.b_idx]
    contrib *= coeff
    sums = np.add.reduceat(contrib, table._starts, axis=1)
    out[:, table._uniq] = sums
    return out


def linear_apply(table, x):
    rows = x.shape[0]
    out = np.zeros((rows, table.n_out), dtype=x.dtype)
    if table.nnz == 0 or rows == 0:
        return out
    coeff = table.coeff_for(x.dtype)
    contrib = x[:, table.in_idx] * coeff
    sums = np.add.reduceat(contrib, table._starts, axis=1)
    out[:, table._uniq] = sums
    return out


def segment_sum(values, segments, n_out):
    out = np.zeros((n_out,) + values.shape[1:], dtype=values.dtype)
    if len(segments) == 0:
        return out
    uniq, starts = np.unique(segments, return_index=True)
    out[uniq] = np.add.reduceat(values, starts, axis=0)
    return out
