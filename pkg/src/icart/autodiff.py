"""Minimal reverse-mode tape over numpy arrays.

Every primitive's vjp is written in terms of the same primitives, so the
backward pass can itself be recorded (``create_graph=True``) and
differentiated again -- which the training loss needs, since it contains
force terms that are themselves gradients.  The tensor-product adjoints
reuse the forward coefficient tables with transposed slots.

One tape per evaluation; tapes are not shared across threads.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import kernels

__all__ = ["Tape", "Var", "recording", "backward"]


class Tape:
    """Execution-ordered record of primitive operations."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = []

    def bytes_recorded(self) -> int:
        """Total bytes of values retained by the tape (reverse-mode peak)."""
        return sum(n.out.value.nbytes for n in self.nodes)


class _Node:
    __slots__ = ("vjp", "parents", "out")

    def __init__(self, vjp, parents, out):
        self.vjp = vjp
        self.parents = parents
        self.out = out


class Var:
    """Value plus optional tape linkage; ``track`` marks differentiable leaves."""

    __slots__ = ("value", "node", "track")

    def __init__(self, value, track=False):
        self.value = np.asarray(value)
        self.node = None
        self.track = track

    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        return f"Var(shape={self.value.shape}, track={self.track})"


_active_tape: list[Tape | None] = [None]


@contextlib.contextmanager
def recording(tape):
    """Make ``tape`` (or None to pause recording) current for the block."""
    _active_tape.append(tape)
    try:
        yield tape
    finally:
        _active_tape.pop()


def _asvar(x) -> Var:
    if isinstance(x, Var):
        return x
    return Var(np.asarray(x))


def _emit(value, vjp, parents) -> Var:
    out = Var(value)
    tape = _active_tape[-1]
    tracked = any(p.track for p in parents)
    if tape is not None and tracked:
        out.track = True
        out.node = _Node(vjp, parents, out)
        tape.nodes.append(out.node)
    return out


def backward(output: Var, wrt: list[Var], create_graph: bool = False,
             seed=None) -> list[Var | None]:
    """Reverse accumulation from ``output`` to the requested leaves.

    With ``create_graph`` the vjp operations are recorded on the active
    tape, making the returned gradients differentiable in turn.
    """
    tape = _active_tape[-1]
    if tape is None:
        raise RuntimeError("backward() needs an active tape")
    if seed is None:
        if output.value.size != 1:
            raise ValueError("implicit seed requires a scalar output")
        seed = Var(np.ones_like(output.value))
    grads: dict[int, Var] = {id(output): _asvar(seed)}
    targets = {id(v) for v in wrt}
    nodes = list(tape.nodes)
    # walk only nodes up to the output's position
    if output.node is not None:
        stop = len(nodes)
        for i in range(len(nodes) - 1, -1, -1):
            if nodes[i] is output.node:
                stop = i + 1
                break
        nodes = nodes[:stop]
    ctx = recording(tape if create_graph else None)
    with ctx:
        for node in reversed(nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            needs = tuple(
                p.track or id(p) in targets for p in node.parents
            )
            parent_grads = node.vjp(g, needs)
            for p, pg in zip(node.parents, parent_grads):
                if pg is None:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else add(prev, pg)
    return [grads.get(id(v)) for v in wrt]


# ---------------------------------------------------------------------------
# shape helpers


def _sum_to_shape(g: Var, shape) -> Var:
    """Reduce a broadcasted cotangent back to the operand's shape."""
    if g.value.shape == tuple(shape):
        return g
    extra = g.value.ndim - len(shape)
    axes = tuple(range(extra)) + tuple(
        i + extra for i, n in enumerate(shape) if n == 1 and g.value.shape[i + extra] != 1
    )
    red = sum_axes(g, axes, keepdims=False) if axes else g
    return reshape(red, shape)


# ---------------------------------------------------------------------------
# arithmetic primitives


def add(a, b) -> Var:
    a, b = _asvar(a), _asvar(b)

    def vjp(g, needs):
        return (
            _sum_to_shape(g, a.value.shape) if needs[0] else None,
            _sum_to_shape(g, b.value.shape) if needs[1] else None,
        )

    return _emit(a.value + b.value, vjp, (a, b))


def sub(a, b) -> Var:
    a, b = _asvar(a), _asvar(b)

    def vjp(g, needs):
        return (
            _sum_to_shape(g, a.value.shape) if needs[0] else None,
            _sum_to_shape(neg(g), b.value.shape) if needs[1] else None,
        )

    return _emit(a.value - b.value, vjp, (a, b))


def neg(a) -> Var:
    a = _asvar(a)

    def vjp(g, needs):
        return (neg(g) if needs[0] else None,)

    return _emit(-a.value, vjp, (a,))


def mul(a, b) -> Var:
    a, b = _asvar(a), _asvar(b)

    def vjp(g, needs):
        return (
            _sum_to_shape(mul(g, b), a.value.shape) if needs[0] else None,
            _sum_to_shape(mul(g, a), b.value.shape) if needs[1] else None,
        )

    return _emit(a.value * b.value, vjp, (a, b))


def scale(a, c: float) -> Var:
    a = _asvar(a)

    def vjp(g, needs):
        return (scale(g, c) if needs[0] else None,)

    return _emit(a.value * c, vjp, (a,))


def reshape(a, shape) -> Var:
    a = _asvar(a)
    shape = tuple(shape)
    old = a.value.shape

    def vjp(g, needs):
        return (reshape(g, old) if needs[0] else None,)

    return _emit(a.value.reshape(shape), vjp, (a,))


def sum_axes(a, axes=None, keepdims=False) -> Var:
    a = _asvar(a)
    old = a.value.shape

    def vjp(g, needs):
        if not needs[0]:
            return (None,)
        gv = g
        if axes is not None and not keepdims:
            expanded = list(gv.value.shape)
            for ax in sorted(axes if isinstance(axes, tuple) else (axes,)):
                expanded.insert(ax, 1)
            gv = reshape(gv, expanded)
        elif axes is None:
            gv = reshape(gv, (1,) * len(old))
        return (broadcast_to(gv, old),)

    return _emit(a.value.sum(axis=axes, keepdims=keepdims), vjp, (a,))


def broadcast_to(a, shape) -> Var:
    a = _asvar(a)
    old = a.value.shape

    def vjp(g, needs):
        return (_sum_to_shape(g, old) if needs[0] else None,)

    return _emit(np.broadcast_to(a.value, shape).copy(), vjp, (a,))


# ---------------------------------------------------------------------------
# elementwise functions (closed under differentiation)


def sin(a) -> Var:
    a = _asvar(a)

    def vjp(g, needs):
        return (mul(g, cos(a)) if needs[0] else None,)

    return _emit(np.sin(a.value), vjp, (a,))


def cos(a) -> Var:
    a = _asvar(a)

    def vjp(g, needs):
        return (mul(g, neg(sin(a))) if needs[0] else None,)

    return _emit(np.cos(a.value), vjp, (a,))


def reciprocal(a) -> Var:
    a = _asvar(a)

    def vjp(g, needs):
        if not needs[0]:
            return (None,)
        inv = reciprocal(a)
        return (neg(mul(g, mul(inv, inv))),)

    return _emit(1.0 / a.value, vjp, (a,))


def sqrt(a) -> Var:
    a = _asvar(a)

    def vjp(g, needs):
        if not needs[0]:
            return (None,)
        return (mul(g, scale(reciprocal(sqrt(a)), 0.5)),)

    return _emit(np.sqrt(a.value), vjp, (a,))


def sigmoid(a) -> Var:
    a = _asvar(a)

    def vjp(g, needs):
        if not needs[0]:
            return (None,)
        s = sigmoid(a)
        return (mul(g, mul(s, sub(1.0, s))),)

    def _stable(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out

    return _emit(_stable(np.asarray(a.value, dtype=np.float64)).astype(a.value.dtype), vjp, (a,))


def silu(a) -> Var:
    """x * sigmoid(x), composed from recorded primitives."""
    return mul(a, sigmoid(a))


def polyval(coeffs: np.ndarray, a) -> Var:
    """Polynomial in ``a`` with constant coefficients (highest power first)."""
    a = _asvar(a)
    coeffs = np.asarray(coeffs, dtype=a.value.dtype)

    def vjp(g, needs):
        if not needs[0]:
            return (None,)
        dcoeffs = np.polyder(coeffs.astype(np.float64))
        return (mul(g, polyval(dcoeffs, a)),)

    return _emit(np.polyval(coeffs, a.value), vjp, (a,))


def where_lt(a, threshold: float, x, y) -> Var:
    """Select x where a < threshold else y; the mask is not differentiated."""
    a, x, y = _asvar(a), _asvar(x), _asvar(y)
    mask = a.value < threshold

    def vjp(g, needs):
        gx = gy = None
        zero = Var(np.zeros_like(g.value))
        if needs[1]:
            gx = _sum_to_shape(where_mask(mask, g, zero), x.value.shape)
        if needs[2]:
            gy = _sum_to_shape(where_mask(~mask, g, zero), y.value.shape)
        return (None, gx, gy)

    return _emit(np.where(mask, x.value, y.value), vjp, (a, x, y))


def where_mask(mask: np.ndarray, x, y) -> Var:
    x, y = _asvar(x), _asvar(y)

    def vjp(g, needs):
        zero = Var(np.zeros_like(g.value))
        gx = _sum_to_shape(where_mask(mask, g, zero), x.value.shape) if needs[0] else None
        gy = _sum_to_shape(where_mask(~mask, g, zero), y.value.shape) if needs[1] else None
        return (gx, gy)

    return _emit(np.where(mask, x.value, y.value), vjp, (x, y))


# ---------------------------------------------------------------------------
# einsum (binary, every input index must appear in the output or the other
# operand -- true for every contraction this package uses)


def _einsum_vjp_specs(spec: str):
    ins, out = spec.split("->")
    s1, s2 = ins.split(",")
    return f"{out},{s2}->{s1}", f"{out},{s1}->{s2}"


def einsum(spec: str, a, b) -> Var:
    a, b = _asvar(a), _asvar(b)
    spec_a, spec_b = _einsum_vjp_specs(spec)

    def vjp(g, needs):
        ga = einsum(spec_a, g, b) if needs[0] else None
        gb = einsum(spec_b, g, a) if needs[1] else None
        return (ga, gb)

    return _emit(np.einsum(spec, a.value, b.value), vjp, (a, b))


# ---------------------------------------------------------------------------
# gather / scatter


def gather(a, idx: np.ndarray) -> Var:
    """Select rows along axis 0."""
    a = _asvar(a)
    idx = np.asarray(idx, dtype=np.int64)
    n = a.value.shape[0]

    def vjp(g, needs):
        return (scatter_add(g, idx, n) if needs[0] else None,)

    return _emit(a.value[idx], vjp, (a,))


def scatter_add(a, idx: np.ndarray, n: int) -> Var:
    """Accumulate rows into ``n`` slots along axis 0 (adjoint of gather)."""
    a = _asvar(a)
    idx = np.asarray(idx, dtype=np.int64)

    def vjp(g, needs):
        return (gather(g, idx) if needs[0] else None,)

    out = np.zeros((n,) + a.value.shape[1:], dtype=a.value.dtype)
    np.add.at(out, idx, a.value)
    return _emit(out, vjp, (a,))


def segment_sum(a, segments: np.ndarray, n: int) -> Var:
    """Sorted-segment sum along axis 0 (fast pooling path)."""
    a = _asvar(a)
    segments = np.asarray(segments, dtype=np.int64)

    def vjp(g, needs):
        return (gather(g, segments) if needs[0] else None,)

    return _emit(kernels.segment_sum(a.value, segments, n), vjp, (a,))


def stack0(items) -> Var:
    items = [_asvar(x) for x in items]

    def vjp(g, needs):
        outs = []
        for i, need in enumerate(needs):
            outs.append(take_row(g, i) if need else None)
        return tuple(outs)

    return _emit(np.stack([x.value for x in items], axis=0), vjp, tuple(items))


def take_index_last(a, idx: int) -> Var:
    """Select one index of the last axis."""
    a = _asvar(a)
    n = a.value.shape[-1]

    def vjp(g, needs):
        return (embed_index_last(g, idx, n) if needs[0] else None,)

    return _emit(np.ascontiguousarray(a.value[..., idx]), vjp, (a,))


def embed_index_last(a, idx: int, n: int) -> Var:
    """Place values at one index of a new trailing axis of length n."""
    a = _asvar(a)

    def vjp(g, needs):
        return (take_index_last(g, idx) if needs[0] else None,)

    out = np.zeros(a.value.shape + (n,), dtype=a.value.dtype)
    out[..., idx] = a.value
    return _emit(out, vjp, (a,))


def take_row(a, i: int) -> Var:
    a = _asvar(a)
    n = a.value.shape[0]

    def vjp(g, needs):
        if not needs[0]:
            return (None,)
        return (scatter_add(reshape(g, (1,) + g.value.shape), np.array([i]), n),)

    return _emit(a.value[i], vjp, (a,))


# ---------------------------------------------------------------------------
# sparse-table kernels


def bilinear(table, a, b) -> Var:
    """Batched sparse bilinear product on 2-D operands (rows, n)."""
    a, b = _asvar(a), _asvar(b)

    def vjp(g, needs):
        ga = bilinear(table.wrt_a(), g, b) if needs[0] else None
        gb = bilinear(table.wrt_b(), g, a) if needs[1] else None
        return (ga, gb)

    return _emit(kernels.bilinear_apply(table, a.value, b.value), vjp, (a, b))


def linear_map(table, a) -> Var:
    """Batched sparse linear map on a 2-D operand (rows, n)."""
    a = _asvar(a)

    def vjp(g, needs):
        return (linear_map(table.transpose(), g) if needs[0] else None,)

    return _emit(kernels.linear_apply(table, a.value), vjp, (a,))


# ---------------------------------------------------------------------------
# geometry helpers


def row_norms(a) -> Var:
    """Euclidean norm of each row of an (n, 3) array."""
    return sqrt(einsum("ni,ni->n", a, a))


def normalize_rows(a) -> Var:
    """Rows scaled to unit norm; gradients project out the radial part."""
    n = row_norms(a)
    inv = reciprocal(n)
    return mul(a, reshape(inv, inv.value.shape + (1,)))
