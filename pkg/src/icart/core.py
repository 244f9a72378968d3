"""Dense rank-l Cartesian tensor storage and primitive operations.

Rank-l tensors are stored flat with 3**l components in row-major index
order; only 2l+1 of those components are independent for a symmetric
traceless tensor, but dense storage keeps every contraction kernel
branch-free.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kernels import LinearTable, linear_apply

__all__ = [
    "IrrepTensor",
    "UnitVector",
    "Rotation",
    "L_CAP",
    "TOL_SYM",
    "TOL_TRACE",
    "double_factorial",
    "index_placements",
    "placement_count",
    "sym_bracket",
    "sym_bracket_term_count",
    "tensor_map",
    "build_irreducible",
    "outer_power",
    "contract",
    "levicivita_reduce",
    "epsilon_tensor",
    "is_symmetric",
    "is_traceless",
    "symmetry_violation",
    "trace_violation",
    "rotate",
    "legendre",
    "random_unit",
    "random_rotation",
]

L_CAP = 6  # factorial coefficients stay well inside 64-bit integers
TOL_SYM = 1e-12
TOL_TRACE = 1e-12
_TOL_UNIT = 1e-12
_TOL_ORTHO = 1e-12


def double_factorial(n: int) -> int:
    """n!! with the conventions 0!! = 1 and (-1)!! = 1."""
    if n < -1:
        raise ValueError(f"double factorial undefined for n={n}")
    result = 1
    while n > 1:
        result *= n
        n -= 2
    return result


@dataclass(frozen=True)
class UnitVector:
    """A 3-vector with unit Euclidean norm."""

    xyz: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.xyz, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(v) - 1.0) > _TOL_UNIT:
            raise ValueError(f"not a unit vector: |v|={np.linalg.norm(v)!r}")
        object.__setattr__(self, "xyz", v)


@dataclass(frozen=True)
class Rotation:
    """An orthogonal 3x3 matrix; parity -1 matrices (reflections) allowed."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        if np.max(np.abs(m @ m.T - np.eye(3))) > _TOL_ORTHO:
            raise ValueError("matrix is not orthogonal")
        object.__setattr__(self, "matrix", m)

    @property
    def parity(self) -> int:
        return 1 if np.linalg.det(self.matrix) > 0 else -1


@dataclass
class IrrepTensor:
    """Flat rank-l Cartesian tensor claimed symmetric and traceless."""

    rank: int
    components: np.ndarray
    claimed_irreducible: bool = True

    def __post_init__(self):
        c = np.asarray(self.components, dtype=np.float64).reshape(-1)
        if c.size != 3 ** self.rank:
            raise ValueError(
                f"rank {self.rank} tensor needs {3 ** self.rank} components, got {c.size}"
            )
        self.components = c

    def dense(self) -> np.ndarray:
        """View as an ndarray with ``rank`` axes of length 3."""
        return self.components.reshape((3,) * self.rank)

    def validate(self, tol_sym: float = TOL_SYM, tol_trace: float = TOL_TRACE):
        if self.claimed_irreducible:
            if not is_symmetric(self, tol_sym):
                raise ValueError("tensor violates the symmetry invariant")
            if not is_traceless(self, tol_trace):
                raise ValueError("tensor violates the traceless invariant")
        return self


def _as_dense(x, rank=None):
    if isinstance(x, IrrepTensor):
        return x.dense()
    if isinstance(x, UnitVector):
        return x.xyz
    arr = np.asarray(x, dtype=np.float64)
    if rank is not None:
        arr = arr.reshape((3,) * rank)
    return arr


def index_placements(n: int, leg_counts: tuple[int, ...], n_pairs: int):
    """Distinct placements of n indices into symmetric leg blocks and delta pairs.

    Yields (legs, pairs) where ``legs`` is a tuple of sorted position tuples,
    one per block, and ``pairs`` is a tuple of (a, b) position pairs.  Blocks
    are unordered internally (the factors are symmetric) and pairs are
    unordered among themselves, so every distinct term of the symmetrization
    bracket appears exactly once.
    """
    if sum(leg_counts) + 2 * n_pairs != n:
        raise ValueError("leg counts and pairs do not cover all indices")

    def pairings(positions):
        if not positions:
            yield ()
            return
        first = positions[0]
        for j in range(1, len(positions)):
            rest = positions[1:j] + positions[j + 1:]
            for tail in pairings(rest):
                yield ((first, positions[j]),) + tail

    def split(positions, counts):
        if not counts:
            for pr in pairings(positions):
                yield (), pr
            return
        c = counts[0]
        for combo in itertools.combinations(positions, c):
            remaining = tuple(p for p in positions if p not in combo)
            for legs, pr in split(remaining, counts[1:]):
                yield (combo,) + legs, pr

    yield from split(tuple(range(n)), tuple(leg_counts))


def placement_count(n: int, leg_counts: tuple[int, ...], n_pairs: int) -> int:
    """Closed-form count of distinct placements (multiset permutations)."""
    c = math.factorial(n)
    for k in leg_counts:
        c //= math.factorial(k)
    c //= 2 ** n_pairs * math.factorial(n_pairs)
    return c


def sym_bracket_term_count(l: int, m: int) -> int:
    """Number of distinct terms in the bracket with l-2m legs and m pairs."""
    return placement_count(l, (l - 2 * m,), m)


def _flat_index(idx: tuple[int, ...]) -> int:
    row = 0
    for i in idx:
        row = row * 3 + i
    return row


def sym_bracket(r_hat, l: int, m: int) -> IrrepTensor:
    """Sum over distinct placements of l-2m unit-vector legs and m delta pairs.

    Returns the unnormalized rank-l bracket tensor; the l=3, m=1 case is
    ``r_i1 d_i2i3 + r_i2 d_i3i1 + r_i3 d_i1i2``.
    """
    if not 0 <= m <= l // 2:
        raise ValueError(f"need 0 <= m <= l//2, got l={l}, m={m}")
    r = _as_dense(r_hat).reshape(3)
    flat = np.zeros(3 ** l, dtype=np.float64)
    for legs, pairs in index_placements(l, (l - 2 * m,), m):
        leg_positions = legs[0]
        for idx in itertools.product(range(3), repeat=l):
            ok = all(idx[a] == idx[b] for a, b in pairs)
            if not ok:
                continue
            term = 1.0
            for p in leg_positions:
                term *= r[idx[p]]
            flat[_flat_index(idx)] += term
    return IrrepTensor(l, flat, claimed_irreducible=False)


_tensor_maps: dict[tuple[int, int], LinearTable] = {}


def tensor_map(l: int) -> LinearTable:
    """Linear map from the l-fold outer power of a unit vector to its
    symmetric traceless rank-l tensor.

    Delta terms of degree l-2m are raised to degree l by inserting m powers
    of the squared norm (which is 1 on the unit sphere), so the whole
    construction becomes a single sparse matrix on the 3**l outer power.
    """
    if l < 0:
        raise ValueError("rank must be non-negative")
    if l > L_CAP:
        raise ValueError(f"rank {l} above the coefficient overflow cap {L_CAP}")
    cached = _tensor_maps.get(l)
    if cached is not None:
        return cached
    size = 3 ** l
    entries: dict[tuple[int, int], float] = {}
    norm = double_factorial(2 * l - 1) / math.factorial(l)
    for m in range(l // 2 + 1):
        c_m = (
            norm
            * (-1) ** m
            * double_factorial(2 * l - 2 * m - 1)
            / double_factorial(2 * l - 1)
        )
        for legs, pairs in index_placements(l, (l - 2 * m,), m):
            leg_positions = legs[0]
            for idx in itertools.product(range(3), repeat=l):
                if any(idx[a] != idx[b] for a, b in pairs):
                    continue
                row = _flat_index(idx)
                # norm-squared insertions: one extra (j, j) index pair per
                # delta pair keeps the column a full degree-l monomial
                for js in itertools.product(range(3), repeat=m):
                    col_idx = tuple(idx[p] for p in leg_positions) + tuple(
                        j for j in js for _ in range(2)
                    )
                    col = _flat_index(col_idx)
                    entries[(row, col)] = entries.get((row, col), 0.0) + c_m
    rows = np.array([k[0] for k in entries], dtype=np.int64)
    cols = np.array([k[1] for k in entries], dtype=np.int64)
    vals = np.array(list(entries.values()), dtype=np.float64)
    keep = np.abs(vals) > 0.0
    table = LinearTable(rows[keep], cols[keep], vals[keep], size, size)
    _tensor_maps.setdefault(l, table)
    return _tensor_maps[l]


def outer_power(v: np.ndarray, l: int) -> np.ndarray:
    """Flat l-fold outer power of a 3-vector (3**l components)."""
    v = np.asarray(v, dtype=np.float64).reshape(3)
    out = np.ones(1, dtype=np.float64)
    for _ in range(l):
        out = np.multiply.outer(out, v).reshape(-1)
    return out


def build_irreducible(r_hat, l: int) -> IrrepTensor:
    """Symmetric traceless rank-l tensor of a unit vector, normalized so the
    l-fold contraction with the vector itself is 1."""
    r = r_hat.xyz if isinstance(r_hat, UnitVector) else UnitVector(r_hat).xyz
    table = tensor_map(l)
    comp = linear_apply(table, outer_power(r, l)[None, :])[0]
    return IrrepTensor(l, comp, claimed_irreducible=True)


def contract(x, y, r: int):
    """r-fold contraction over the first r indices of each operand.

    ``r = 0`` is the outer product.  For symmetric operands the result is
    independent of which indices are contracted.
    """
    xd = _as_dense(x)
    yd = _as_dense(y)
    a, b = xd.ndim, yd.ndim
    if r > min(a, b):
        raise ValueError(f"cannot contract {r} folds of ranks {a} and {b}")
    res = np.tensordot(xd, yd, axes=(tuple(range(r)), tuple(range(r))))
    if res.ndim == 0:
        return float(res)
    return IrrepTensor(res.ndim, res.reshape(-1), claimed_irreducible=False)


_EPSILON_SIGN_ERROR = False


def epsilon_tensor() -> np.ndarray:
    """The rank-3 antisymmetric symbol; a deliberate sign-error hook exists
    for negative-control testing of the check suite."""
    eps = np.zeros((3, 3, 3), dtype=np.float64)
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    if _EPSILON_SIGN_ERROR:
        eps[0, 1, 2] = -1.0
    return eps


def set_epsilon_sign_error(enabled: bool):
    """Test hook: corrupt one antisymmetric-symbol entry (negative control)."""
    global _EPSILON_SIGN_ERROR
    from . import product as _product

    _EPSILON_SIGN_ERROR = bool(enabled)
    _product.clear_table_cache()


def levicivita_reduce(m, slots: tuple[int, int] = (0, 1)):
    """Contract two designated indices with the antisymmetric symbol.

    The new index replaces the pair and is placed first; for two vectors
    stacked as an outer product this is exactly the cross product.
    """
    md = _as_dense(m)
    if md.ndim < 2:
        raise ValueError("need at least two indices to reduce")
    a, b = slots
    eps = epsilon_tensor()
    moved = np.moveaxis(md, (a, b), (0, 1))
    res = np.einsum("eab,ab...->e...", eps, moved)
    if res.ndim == 1:
        return IrrepTensor(1, res, claimed_irreducible=True)
    return IrrepTensor(res.ndim, res.reshape(-1), claimed_irreducible=False)


def symmetry_violation(x) -> float:
    """Max deviation of any index transposition; adjacent swaps generate all."""
    xd = _as_dense(x)
    l = xd.ndim
    worst = 0.0
    for i in range(l - 1):
        swapped = np.swapaxes(xd, i, i + 1)
        worst = max(worst, float(np.max(np.abs(xd - swapped))) if xd.size else 0.0)
    return worst


def trace_violation(x) -> float:
    """Max component of the contraction of any index pair."""
    xd = _as_dense(x)
    l = xd.ndim
    worst = 0.0
    for i in range(l):
        for j in range(i + 1, l):
            tr = np.trace(xd, axis1=i, axis2=j)
            mag = float(np.max(np.abs(tr))) if np.ndim(tr) else float(abs(tr))
            worst = max(worst, mag)
    return worst


def is_symmetric(x, tol: float = TOL_SYM) -> bool:
    return symmetry_violation(x) <= tol


def is_traceless(x, tol: float = TOL_TRACE) -> bool:
    return trace_violation(x) <= tol


def rotate(x, rotation) -> IrrepTensor:
    """Transform every index by the orthogonal matrix (full O(3) action)."""
    r = rotation.matrix if isinstance(rotation, Rotation) else np.asarray(rotation)
    xd = _as_dense(x)
    l = xd.ndim
    if l == 0:
        return x
    letters = "abcdefghij"[:l]
    out_letters = "klmnopqrst"[:l]
    spec = ",".join(f"{o}{i}" for o, i in zip(out_letters, letters))
    spec = f"{spec},{letters}->{out_letters}"
    res = np.einsum(spec, *([r] * l), xd)
    claimed = x.claimed_irreducible if isinstance(x, IrrepTensor) else False
    return IrrepTensor(l, res.reshape(-1), claimed_irreducible=claimed)


def legendre(l: int, x: float) -> float:
    """Legendre polynomial by upward recurrence (independent oracle)."""
    if abs(x) > 1 + 1e-12:
        raise ValueError("argument outside [-1, 1]")
    p_prev, p = 1.0, x
    if l == 0:
        return 1.0
    for n in range(1, l):
        p_prev, p = p, ((2 * n + 1) * x * p - n * p_prev) / (n + 1)
    return p


def random_unit(rng: np.random.Generator) -> UnitVector:
    v = rng.normal(size=3)
    return UnitVector(v / np.linalg.norm(v))


def random_rotation(rng: np.random.Generator, parity: int = 1) -> Rotation:
    """Haar-ish random rotation via QR; parity=-1 appends a reflection."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    if parity == -1:
        q = -q
    return Rotation(q)
