"""Minimal real spherical harmonics and coupled products (degree <= 4).

This exists only as the runtime/memory comparison baseline and for one
cross-representation correctness check; it is deliberately a dense
double-loop implementation, not an optimized spherical library.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .kernels import counters

__all__ = [
    "SphVector",
    "SH_DEGREE_CAP",
    "cg_coefficient",
    "cg_table",
    "cg_product",
    "real_sh",
]

SH_DEGREE_CAP = 4


@dataclass
class SphVector:
    """2l+1 real components ordered m = -l..l."""

    degree: int
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=np.float64).reshape(-1)
        if c.size != 2 * self.degree + 1:
            raise ValueError(
                f"degree {self.degree} needs {2 * self.degree + 1} components"
            )
        self.components = c


def _fact(n: int) -> Fraction:
    return Fraction(math.factorial(n))


def _complex_cg(l1, m1, l2, m2, l3, m3) -> float:
    """Condon-Shortley Clebsch-Gordan coefficient from the closed-form
    alternating sum over factorials (exact rational inner sum)."""
    if m3 != m1 + m2:
        return 0.0
    if not (abs(l1 - l2) <= l3 <= l1 + l2):
        return 0.0
    if abs(m1) > l1 or abs(m2) > l2 or abs(m3) > l3:
        return 0.0
    pref = (
        Fraction(2 * l3 + 1)
        * _fact(l3 + l1 - l2)
        * _fact(l3 - l1 + l2)
        * _fact(l1 + l2 - l3)
        / _fact(l1 + l2 + l3 + 1)
    )
    pref *= (
        _fact(l3 + m3)
        * _fact(l3 - m3)
        * _fact(l1 - m1)
        * _fact(l1 + m1)
        * _fact(l2 - m2)
        * _fact(l2 + m2)
    )
    total = Fraction(0)
    for k in range(0, l1 + l2 - l3 + 1):
        denoms = (
            k,
            l1 + l2 - l3 - k,
            l1 - m1 - k,
            l2 + m2 - k,
            l3 - l2 + m1 + k,
            l3 - l1 - m2 + k,
        )
        if any(d < 0 for d in denoms):
            continue
        term = Fraction(1)
        for d in denoms:
            term /= _fact(d)
        total += (-1) ** k * term
    if total == 0:
        return 0.0
    return float(total) * math.sqrt(float(pref))


def _real_basis_transform(l: int) -> np.ndarray:
    """Unitary map from complex (Condon-Shortley) to real components."""
    dim = 2 * l + 1
    u = np.zeros((dim, dim), dtype=np.complex128)
    s = 1 / math.sqrt(2)

    def col(m):
        return m + l

    u[col(0), col(0)] = 1.0
    for m in range(1, l + 1):
        u[col(m), col(m)] = (-1) ** m * s
        u[col(m), col(-m)] = s
        u[col(-m), col(-m)] = 1j * s
        u[col(-m), col(m)] = -1j * (-1) ** m * s
    return u


_cg_tables: dict[tuple[int, int, int], np.ndarray] = {}


def cg_table(l1: int, l2: int, l3: int) -> np.ndarray:
    """Dense real-basis coupling coefficients, shape (2l1+1, 2l2+1, 2l3+1).

    For odd l1+l2+l3 the complex->real transform produces purely imaginary
    numbers; the table stores their imaginary part (an internal phase
    convention -- only ratios and even couplings are consumed downstream).
    """
    key = (l1, l2, l3)
    cached = _cg_tables.get(key)
    if cached is not None:
        return cached
    c = np.zeros((2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1))
    if abs(l1 - l2) <= l3 <= l1 + l2:
        cplx = np.zeros((2 * l1 + 1, 2 * l2 + 1, 2 * l3 + 1))
        for m1 in range(-l1, l1 + 1):
            for m2 in range(-l2, l2 + 1):
                m3 = m1 + m2
                if abs(m3) <= l3:
                    cplx[m1 + l1, m2 + l2, m3 + l3] = _complex_cg(l1, m1, l2, m2, l3, m3)
        u1 = _real_basis_transform(l1)
        u2 = _real_basis_transform(l2)
        u3 = _real_basis_transform(l3)
        mixed = np.einsum("am,bn,co,mno->abc", u1, u2, u3.conj(), cplx.astype(complex))
        if (l1 + l2 + l3) % 2 == 0:
            c = mixed.real.copy()
        else:
            c = mixed.imag.copy()
    _cg_tables.setdefault(key, c)
    return _cg_tables[key]


def cg_coefficient(l1, m1, l2, m2, l3, m3) -> float:
    """Single real-basis coupling coefficient; zero when selection rules fail."""
    for l, m in ((l1, m1), (l2, m2), (l3, m3)):
        if abs(m) > l:
            raise ValueError(f"|m|={abs(m)} exceeds degree {l}")
    if not abs(l1 - l2) <= l3 <= l1 + l2:
        return 0.0
    return float(cg_table(l1, l2, l3)[m1 + l1, m2 + l2, m3 + l3])


def cg_product(u: SphVector, v: SphVector, l3: int) -> SphVector:
    """Coupled product by the explicit double sum over components.

    Kept as dense loops on purpose: the benchmark measures this scaling,
    and the multiply-add counter mirrors the Cartesian kernels.
    """
    l1, l2 = u.degree, v.degree
    if not abs(l1 - l2) <= l3 <= l1 + l2:
        raise ValueError(f"triangle bound violated: ({l1},{l2},{l3})")
    table = cg_table(l1, l2, l3)
    out = np.zeros(2 * l3 + 1)
    for i1 in range(2 * l1 + 1):
        for i2 in range(2 * l2 + 1):
            w = table[i1, i2]
            out += w * (u.components[i1] * v.components[i2])
    counters.madds += (2 * l1 + 1) * (2 * l2 + 1) * (2 * l3 + 1)
    counters.calls += 1
    return SphVector(l3, out)


def cg_product_batch(l1: int, l2: int, l3: int, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Batched variant for the benchmark: operands (rows, 2l+1)."""
    table = cg_table(l1, l2, l3)
    rows = u.shape[0]
    out = np.zeros((rows, 2 * l3 + 1), dtype=u.dtype)
    for i1 in range(2 * l1 + 1):
        for i2 in range(2 * l2 + 1):
            out += table[i1, i2] * (u[:, i1:i1 + 1] * v[:, i2:i2 + 1])
    counters.madds += (2 * l1 + 1) * (2 * l2 + 1) * (2 * l3 + 1) * rows
    counters.calls += 1
    return out


def _legendre_block(l: int, m: int, z: np.ndarray) -> np.ndarray:
    """Associated Legendre with the sin^m theta factor removed (polynomial
    in z = cos theta); positive-phase convention."""
    q_mm = float(np.prod(np.arange(1, 2 * m, 2))) if m > 0 else 1.0
    if l == m:
        return np.full_like(z, q_mm)
    q_prev = np.full_like(z, q_mm)
    q = (2 * m + 1) * z * q_prev
    if l == m + 1:
        return q
    for ll in range(m + 2, l + 1):
        q_prev, q = q, ((2 * ll - 1) * z * q - (ll - 1 + m) * q_prev) / (ll - m)
    return q


def real_sh(l: int, r_hat) -> SphVector:
    """Real orthonormal spherical harmonics from Cartesian polynomials."""
    if l > SH_DEGREE_CAP:
        raise ValueError(f"degree {l} above the baseline cap {SH_DEGREE_CAP}")
    xyz = np.asarray(getattr(r_hat, "xyz", r_hat), dtype=np.float64).reshape(3)
    x, y, z = xyz
    comps = np.zeros(2 * l + 1)
    # Re/Im((x+iy)^m) by recurrence
    a = [1.0]
    b = [0.0]
    for m in range(1, l + 1):
        a.append(a[-1] * x - b[-1] * y)
        b.append(b[-1] * x + a[-2] * y)
    zl = np.array(z)
    for m in range(0, l + 1):
        norm = math.sqrt(
            (2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m)
        )
        q = float(_legendre_block(l, m, zl))
        if m == 0:
            comps[l] = norm * q
        else:
            comps[l + m] = math.sqrt(2) * norm * q * a[m]
            comps[l - m] = math.sqrt(2) * norm * q * b[m]
    return SphVector(l, comps)
