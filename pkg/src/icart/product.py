"""Even and odd products of irreducible Cartesian tensors.

Each (l1, l2, l3) product is compiled once into a sparse bilinear table
(the main performance lever); evaluation and the reverse-mode adjoints all
run through that table.  Rank coupling requires the triangle bound
|l1-l2| <= l3 <= l1+l2; the parity of l1+l2-l3 selects the even (identity
insertions) or odd (one antisymmetric contraction) branch.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    IrrepTensor,
    L_CAP,
    double_factorial,
    epsilon_tensor,
    index_placements,
)
from .kernels import BilinearTable, bilinear_apply

__all__ = [
    "ProductSpec",
    "PathSpec",
    "norm_const_even",
    "norm_const_odd",
    "product_even",
    "product_odd",
    "product",
    "product_table",
    "valid_triples",
    "enumerate_paths",
    "clear_table_cache",
]


def _check_triple(l1: int, l2: int, l3: int):
    if min(l1, l2, l3) < 0:
        raise ValueError("ranks must be non-negative")
    if max(l1, l2, l3) > L_CAP:
        raise ValueError(f"rank above cap {L_CAP}: ({l1},{l2},{l3})")
    if not abs(l1 - l2) <= l3 <= l1 + l2:
        raise ValueError(f"triangle bound violated: ({l1},{l2},{l3})")


def norm_const_even(l1: int, l2: int, l3: int) -> float:
    """Normalization of the even product, fixed by the unity contraction of
    products of same-direction unit-vector tensors."""
    _check_triple(l1, l2, l3)
    if (l1 + l2 - l3) % 2 != 0:
        raise ValueError(f"({l1},{l2},{l3}) is not an even coupling")
    big_l = l1 + l2 + l3
    ls = [big_l - 2 * l - 1 for l in (l1, l2, l3)]
    num = (
        math.factorial(l1)
        * math.factorial(l2)
        * double_factorial(2 * l3 - 1)
        * math.factorial((ls[0] + 1) // 2)
        * math.factorial((ls[1] + 1) // 2)
    )
    den = (
        math.factorial(l3)
        * double_factorial(ls[0])
        * double_factorial(ls[1])
        * double_factorial(ls[2])
        * math.factorial(big_l // 2)
    )
    return num / den


def norm_const_odd(l1: int, l2: int, l3: int) -> float:
    """Normalization of the odd (antisymmetric) product."""
    _check_triple(l1, l2, l3)
    if (l1 + l2 - l3) % 2 != 1:
        raise ValueError(f"({l1},{l2},{l3}) is not an odd coupling")
    if l3 < 1:
        raise ValueError("odd coupling needs l3 >= 1")
    big_l = l1 + l2 + l3
    ls = [big_l - 2 * l - 1 for l in (l1, l2, l3)]
    num = (
        2
        * math.factorial(l1)
        * math.factorial(l2)
        * double_factorial(2 * l3 - 1)
        * math.factorial(ls[0] // 2)
        * math.factorial(ls[1] // 2)
    )
    den = (
        math.factorial(l3 - 1)
        * double_factorial(ls[0] + 1)
        * double_factorial(ls[1] + 1)
        * double_factorial(ls[2] + 1)
        * math.factorial((big_l + 1) // 2)
    )
    return num / den


@dataclass(frozen=True)
class ProductSpec:
    """Compiled coupling (l1, l2) -> l3: parity, per-m coefficients, and the
    sparse bilinear table realizing the whole product."""

    l1: int
    l2: int
    l3: int
    parity: str  # "even" | "odd"
    k: int
    coefficients: tuple[float, ...]  # per-m scalars including the norm const
    table: BilinearTable
    perm_terms: int  # total distinct index placements over all m


_table_cache: dict[tuple[int, int, int], ProductSpec] = {}


def clear_table_cache():
    _table_cache.clear()


def _even_entries(l1, l2, l3, coeffs, k):
    entries: dict[tuple[int, int, int], float] = {}
    perm_terms = 0
    for m, c_m in enumerate(coeffs):
        s = k + m
        p, q = l1 - s, l2 - s
        for legs, pairs in index_placements(l3, (p, q), m):
            perm_terms += 1
            x_pos, y_pos = legs
            for idx in itertools.product(range(3), repeat=l3):
                if any(idx[a] != idx[b] for a, b in pairs):
                    continue
                row = 0
                for i in idx:
                    row = row * 3 + i
                x_free = tuple(idx[pos] for pos in x_pos)
                y_free = tuple(idx[pos] for pos in y_pos)
                for sigma in itertools.product(range(3), repeat=s):
                    xi = 0
                    for i in sigma + x_free:
                        xi = xi * 3 + i
                    yi = 0
                    for i in sigma + y_free:
                        yi = yi * 3 + i
                    key = (row, xi, yi)
                    entries[key] = entries.get(key, 0.0) + c_m
    return entries, perm_terms


def _odd_entries(l1, l2, l3, coeffs, k):
    eps = epsilon_tensor()
    entries: dict[tuple[int, int, int], float] = {}
    perm_terms = 0
    for m, c_m in enumerate(coeffs):
        s = k + m
        p, q = l1 - s - 1, l2 - s - 1
        for legs, pairs in index_placements(l3, (1, p, q), m):
            perm_terms += 1
            (e_pos,), x_pos, y_pos = legs
            for idx in itertools.product(range(3), repeat=l3):
                if any(idx[a] != idx[b] for a, b in pairs):
                    continue
                row = 0
                for i in idx:
                    row = row * 3 + i
                x_free = tuple(idx[pos] for pos in x_pos)
                y_free = tuple(idx[pos] for pos in y_pos)
                e = idx[e_pos]
                for a in range(3):
                    for b in range(3):
                        w = eps[e, a, b]
                        if w == 0.0:
                            continue
                        for sigma in itertools.product(range(3), repeat=s):
                            xi = 0
                            for i in sigma + (a,) + x_free:
                                xi = xi * 3 + i
                            yi = 0
                            for i in sigma + (b,) + y_free:
                                yi = yi * 3 + i
                            key = (row, xi, yi)
                            entries[key] = entries.get(key, 0.0) + c_m * w
    return entries, perm_terms


def product_table(l1: int, l2: int, l3: int) -> ProductSpec:
    """Compile (and cache) the sparse table of the (l1, l2) -> l3 product."""
    key = (l1, l2, l3)
    cached = _table_cache.get(key)
    if cached is not None:
        return cached
    _check_triple(l1, l2, l3)
    k2 = l1 + l2 - l3
    if k2 % 2 == 0:
        parity, k = "even", k2 // 2
        const = norm_const_even(l1, l2, l3)
        n_m = min(l1, l2) - k + 1
        coeffs = tuple(
            const
            * (-1) ** m
            * 2 ** m
            * double_factorial(2 * l3 - 2 * m - 1)
            / double_factorial(2 * l3 - 1)
            for m in range(n_m)
        )
        entries, perm_terms = _even_entries(l1, l2, l3, coeffs, k)
    else:
        parity, k = "odd", (k2 - 1) // 2
        const = norm_const_odd(l1, l2, l3)
        n_m = min(l1, l2) - k
        coeffs = tuple(
            const
            * (-1) ** m
            * 2 ** m
            * double_factorial(2 * l3 - 2 * m - 1)
            / double_factorial(2 * l3 - 1)
            for m in range(n_m)
        )
        entries, perm_terms = _odd_entries(l1, l2, l3, coeffs, k)
    rows = np.fromiter((e[0] for e in entries), dtype=np.int64, count=len(entries))
    xs = np.fromiter((e[1] for e in entries), dtype=np.int64, count=len(entries))
    ys = np.fromiter((e[2] for e in entries), dtype=np.int64, count=len(entries))
    vals = np.fromiter(entries.values(), dtype=np.float64, count=len(entries))
    keep = np.abs(vals) > 1e-300
    table = BilinearTable(
        rows[keep], xs[keep], ys[keep], vals[keep], 3 ** l3, 3 ** l1, 3 ** l2
    )
    spec = ProductSpec(l1, l2, l3, parity, k, coeffs, table, perm_terms)
    _table_cache.setdefault(key, spec)
    return _table_cache[key]


def _validate_inputs(x: IrrepTensor, y: IrrepTensor, strict: bool):
    if strict:
        x.validate(1e-9, 1e-9)
        y.validate(1e-9, 1e-9)


def product_even(x: IrrepTensor, y: IrrepTensor, l3: int, strict: bool = False) -> IrrepTensor:
    """Even-parity product; bilinear, output symmetric and traceless."""
    spec = product_table(x.rank, y.rank, l3)
    if spec.parity != "even":
        raise ValueError(f"({x.rank},{y.rank},{l3}) is not an even coupling")
    _validate_inputs(x, y, strict)
    out = bilinear_apply(spec.table, x.components[None, :], y.components[None, :])[0]
    return IrrepTensor(l3, out, claimed_irreducible=True)


def product_odd(x: IrrepTensor, y: IrrepTensor, l3: int, strict: bool = False) -> IrrepTensor:
    """Odd-parity product; contains one antisymmetric contraction, so the
    output picks up the pseudo-tensor sign under reflections."""
    spec = product_table(x.rank, y.rank, l3)
    if spec.parity != "odd":
        raise ValueError(f"({x.rank},{y.rank},{l3}) is not an odd coupling")
    _validate_inputs(x, y, strict)
    out = bilinear_apply(spec.table, x.components[None, :], y.components[None, :])[0]
    return IrrepTensor(l3, out, claimed_irreducible=True)


def product(x: IrrepTensor, y: IrrepTensor, l3: int, strict: bool = False) -> IrrepTensor:
    """Dispatch to the even or odd product by the parity of l1+l2-l3."""
    if (x.rank + y.rank - l3) % 2 == 0:
        return product_even(x, y, l3, strict)
    return product_odd(x, y, l3, strict)


@dataclass(frozen=True)
class PathSpec:
    """One entry of the product basis: leaf ranks, the intermediate rank
    after each binary step (last equals the target), and dedup bookkeeping."""

    leaves: tuple[int, ...]
    intermediates: tuple[int, ...]
    target: int
    variant: str = "full"
    multiplicity: int = 1

    @property
    def order(self) -> int:
        return len(self.leaves)


def _even_couplings(la: int, lb: int, cap: int):
    lo, hi = abs(la - lb), la + lb
    return [lc for lc in range(lo, min(hi, cap) + 1) if (la + lb - lc) % 2 == 0]


def valid_triples(l1_max: int, l2_max: int, l3_max: int):
    """All even-parity triangle-valid (l1, l2, l3) with the given caps."""
    triples = []
    for l1 in range(l1_max + 1):
        for l2 in range(l2_max + 1):
            for l3 in _even_couplings(l1, l2, l3_max):
                triples.append((l1, l2, l3))
    return triples


def enumerate_paths(
    l_max: int,
    target: int,
    nu: int,
    variant: str = "full",
    intermediate_cap: int | None = None,
) -> list[PathSpec]:
    """All left-nested even-parity coupling sequences reaching ``target``.

    ``full`` keeps every leaf ordering; ``sym`` keeps one representative per
    (sorted leaf multiset, intermediate sequence), exploiting the symmetry of
    the binary product, with the number of merged orderings recorded as the
    multiplicity.  For nu = 1 the two variants coincide.
    """
    if nu < 1:
        raise ValueError("correlation order must be >= 1")
    if variant not in ("full", "sym"):
        raise ValueError(f"unknown variant {variant!r}")
    cap = l_max if intermediate_cap is None else intermediate_cap
    full: list[PathSpec] = []

    def extend(leaves, inters, current, depth):
        if depth == nu:
            if current == target:
                full.append(PathSpec(leaves, inters, target, "full"))
            return
        last = depth == nu - 1
        for leaf in range(l_max + 1):
            for nxt in _even_couplings(current, leaf, current + leaf):
                if last and nxt != target:
                    continue
                if not last and nxt > cap:
                    continue
                extend(leaves + (leaf,), inters + (nxt,), nxt, depth + 1)

    if nu == 1:
        if target <= l_max:
            full.append(PathSpec((target,), (), target, "full"))
    else:
        for first in range(l_max + 1):
            extend((first,), (), first, 1)

    if variant == "full":
        return full
    merged: dict[tuple, PathSpec] = {}
    for path in full:
        key = (tuple(sorted(path.leaves)), path.intermediates)
        if key in merged:
            old = merged[key]
            merged[key] = PathSpec(
                old.leaves, old.intermediates, old.target, "sym",
                old.multiplicity + 1,
            )
        else:
            merged[key] = PathSpec(
                path.leaves, path.intermediates, path.target, "sym", 1
            )
    return list(merged.values())
