"""Atomic configurations, extended-XYZ ingestion, and neighbor lists.

Units are Angstrom and eV throughout.  Neighbor lists store directed edges
(both orientations) sorted by (u, v, shift) so that the brute-force and
cell-list builders produce identical output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AtomicConfiguration",
    "NeighborList",
    "ParseError",
    "parse_extxyz",
    "parse_extxyz_file",
    "write_extxyz",
    "build_neighbor_list",
    "symbol_to_number",
    "number_to_symbol",
]

_SYMBOLS = (
    "X H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe "
    "Co Ni Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn "
    "Sb Te I Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W "
    "Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn"
).split()
_NUMBERS = {s: i for i, s in enumerate(_SYMBOLS)}


def symbol_to_number(symbol: str) -> int:
    try:
        return _NUMBERS[symbol]
    except KeyError:
        raise ValueError(f"unknown element symbol {symbol!r}") from None


def number_to_symbol(z: int) -> str:
    if not 0 < z < len(_SYMBOLS):
        raise ValueError(f"unknown atomic number {z}")
    return _SYMBOLS[z]


class ParseError(ValueError):
    """Malformed extended-XYZ input; carries frame and line numbers."""


@dataclass
class AtomicConfiguration:
    """Positions (N, 3), atomic numbers (N,), optional periodic cell and
    reference labels."""

    positions: np.ndarray
    atomic_numbers: np.ndarray
    cell: np.ndarray | None = None
    pbc: np.ndarray | None = None
    reference_energy: float | None = None
    reference_forces: np.ndarray | None = None
    raw_atom_lines: list[str] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.atomic_numbers = np.asarray(self.atomic_numbers, dtype=np.int64).reshape(-1)
        n = len(self.atomic_numbers)
        if n < 1:
            raise ValueError("configuration needs at least one atom")
        if self.positions.shape != (n, 3):
            raise ValueError("positions and atomic numbers disagree in length")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("non-finite coordinates")
        if self.cell is not None:
            self.cell = np.asarray(self.cell, dtype=np.float64).reshape(3, 3)
            if abs(np.linalg.det(self.cell)) < 1e-12:
                raise ValueError("singular cell")
            if self.pbc is None:
                self.pbc = np.array([True, True, True])
            self.pbc = np.asarray(self.pbc, dtype=bool).reshape(3)
        if self.reference_forces is not None:
            self.reference_forces = np.asarray(
                self.reference_forces, dtype=np.float64
            ).reshape(n, 3)

    @property
    def n_atoms(self) -> int:
        return len(self.atomic_numbers)


@dataclass
class NeighborList:
    """Directed edges within the cutoff: indices, distances, unit vectors,
    and integer periodic-image shifts."""

    edge_u: np.ndarray
    edge_v: np.ndarray
    distances: np.ndarray
    unit_vectors: np.ndarray
    shifts: np.ndarray
    cutoff: float

    @property
    def n_edges(self) -> int:
        return len(self.edge_u)


def _split_key_values(comment: str) -> dict[str, str]:
    """Tokenize key=value pairs; values may be double-quoted with spaces."""
    out = {}
    i, n = 0, len(comment)
    while i < n:
        while i < n and comment[i].isspace():
            i += 1
        if i >= n:
            break
        j = i
        while j < n and comment[j] not in "= \t":
            j += 1
        key = comment[i:j]
        if j < n and comment[j] == "=":
            j += 1
            if j < n and comment[j] == '"':
                k = comment.index('"', j + 1)
                value = comment[j + 1:k]
                i = k + 1
            else:
                k = j
                while k < n and not comment[k].isspace():
                    k += 1
                value = comment[j:k]
                i = k
        else:
            value = "T"
            i = j
        if key:
            out[key] = value
    return out


def _parse_properties(spec: str):
    fields = spec.split(":")
    if len(fields) % 3 != 0:
        raise ValueError(f"bad Properties spec {spec!r}")
    cols = []
    for i in range(0, len(fields), 3):
        name, kind, width = fields[i], fields[i + 1], int(fields[i + 2])
        cols.append((name, kind, width))
    return cols


def parse_extxyz(text: str) -> list[AtomicConfiguration]:
    """Parse concatenated extended-XYZ frames.

    Recognized comment keys: Lattice, Properties (species, pos, forces),
    energy, pbc; unknown keys are ignored.  Errors report the frame and
    line number.
    """
    lines = text.splitlines()
    configs = []
    i = 0
    frame = 0
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        frame += 1
        try:
            n = int(lines[i].strip())
        except ValueError:
            raise ParseError(
                f"frame {frame}, line {i + 1}: bad atom count {lines[i]!r}"
            ) from None
        if n < 1:
            raise ParseError(f"frame {frame}, line {i + 1}: atom count must be >= 1")
        if i + 1 >= len(lines):
            raise ParseError(f"frame {frame}, line {i + 1}: missing comment line")
        if i + 2 + n > len(lines):
            raise ParseError(
                f"frame {frame}, line {i + 1}: expected {n} atom rows, file ends early"
            )
        keys = _split_key_values(lines[i + 1])
        cols = _parse_properties(keys.get("Properties", "species:S:1:pos:R:3"))
        cell = None
        pbc = None
        if "Lattice" in keys:
            vals = [float(x) for x in keys["Lattice"].split()]
            if len(vals) != 9:
                raise ParseError(f"frame {frame}: Lattice needs 9 numbers")
            cell = np.array(vals).reshape(3, 3)
        if "pbc" in keys:
            pbc = np.array([t in ("T", "True", "true", "1") for t in keys["pbc"].split()])
        energy = float(keys["energy"]) if "energy" in keys else None
        width_total = sum(w for _, _, w in cols)
        numbers = np.zeros(n, dtype=np.int64)
        positions = np.zeros((n, 3))
        forces = None
        raw = []
        for a in range(n):
            line_no = i + 2 + a
            tokens = lines[line_no].split()
            raw.append(lines[line_no])
            if len(tokens) != width_total:
                raise ParseError(
                    f"frame {frame}, line {line_no + 1}: expected {width_total} "
                    f"columns per Properties, got {len(tokens)}"
                )
            c = 0
            for name, kind, width in cols:
                chunk = tokens[c:c + width]
                c += width
                if name == "species":
                    numbers[a] = symbol_to_number(chunk[0])
                elif name in ("Z", "numbers"):
                    numbers[a] = int(chunk[0])
                elif name == "pos":
                    positions[a] = [float(x) for x in chunk]
                elif name == "forces":
                    if forces is None:
                        forces = np.zeros((n, 3))
                    forces[a] = [float(x) for x in chunk]
            if not np.all(np.isfinite(positions[a])):
                raise ParseError(
                    f"frame {frame}, line {line_no + 1}: non-finite coordinate"
                )
        try:
            configs.append(
                AtomicConfiguration(
                    positions,
                    numbers,
                    cell=cell,
                    pbc=pbc,
                    reference_energy=energy,
                    reference_forces=forces,
                    raw_atom_lines=raw,
                )
            )
        except ValueError as exc:
            raise ParseError(f"frame {frame}: {exc}") from None
        i += 2 + n
    return configs


def parse_extxyz_file(path) -> list[AtomicConfiguration]:
    with open(path) as fh:
        return parse_extxyz(fh.read())


def write_extxyz(configs, energies=None, forces=None) -> str:
    """Serialize frames; original atom-line text is reused verbatim when no
    forces are appended, so untouched geometry round-trips byte for byte."""
    chunks = []
    for idx, cfg in enumerate(configs):
        n = cfg.n_atoms
        keys = []
        if cfg.cell is not None:
            flat = " ".join(f"{x:.10g}" for x in cfg.cell.reshape(-1))
            keys.append(f'Lattice="{flat}"')
            keys.append('pbc="' + " ".join("T" if p else "F" for p in cfg.pbc) + '"')
        f = None
        if forces is not None and forces[idx] is not None:
            f = np.asarray(forces[idx])
            keys.append("Properties=species:S:1:pos:R:3:forces:R:3")
        else:
            keys.append("Properties=species:S:1:pos:R:3")
        if energies is not None and energies[idx] is not None:
            keys.append(f"energy={energies[idx]:.10f}")
        elif cfg.reference_energy is not None:
            keys.append(f"energy={cfg.reference_energy:.10f}")
        chunks.append(str(n))
        chunks.append(" ".join(keys))
        for a in range(n):
            if f is None and cfg.raw_atom_lines is not None:
                chunks.append(cfg.raw_atom_lines[a])
            else:
                sym = number_to_symbol(int(cfg.atomic_numbers[a]))
                pos = " ".join(f"{x:.10f}" for x in cfg.positions[a])
                line = f"{sym} {pos}"
                if f is not None:
                    line += " " + " ".join(f"{x:.10f}" for x in f[a])
                chunks.append(line)
    return "\n".join(chunks) + "\n"


def _min_image_heights(cell: np.ndarray) -> np.ndarray:
    inv = np.linalg.inv(cell)
    return 1.0 / np.linalg.norm(inv, axis=1)


def _pair_edges_brute(cfg: AtomicConfiguration, r_c: float):
    """O(N^2) reference path; minimum-image when a cell is present."""
    pos = cfg.positions
    n = cfg.n_atoms
    edges = []
    if cfg.cell is None:
        for u in range(n):
            d = pos[u] - pos
            dist = np.linalg.norm(d, axis=1)
            for v in range(n):
                if v != u and dist[v] <= r_c:
                    edges.append((u, v, (0, 0, 0)))
    else:
        inv = np.linalg.inv(cfg.cell)
        for u in range(n):
            frac = (pos[u] - pos) @ inv
            shift = np.where(cfg.pbc, -np.round(frac), 0.0)
            d = pos[u] - pos + shift @ cfg.cell
            dist = np.linalg.norm(d, axis=1)
            for v in range(n):
                if v != u and dist[v] <= r_c:
                    edges.append((u, v, tuple(int(s) for s in shift[v])))
    return edges


def _pair_edges_cells(cfg: AtomicConfiguration, r_c: float):
    """Cell-list fast path producing the identical edge multiset."""
    pos = cfg.positions
    n = cfg.n_atoms
    if cfg.cell is None:
        lo = pos.min(axis=0) - 1e-9
        span = np.maximum(pos.max(axis=0) - lo, 1e-9)
        nbins = np.maximum((span // r_c).astype(int), 1)
        which = np.minimum((pos - lo) / (span / nbins), nbins - 1e-9).astype(int)
        buckets: dict[tuple, list[int]] = {}
        for a in range(n):
            buckets.setdefault(tuple(which[a]), []).append(a)
        edges = []
        for (bx, by, bz), members in buckets.items():
            neigh = []
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        neigh.extend(buckets.get((bx + dx, by + dy, bz + dz), ()))
            for u in members:
                for v in neigh:
                    if v == u:
                        continue
                    if np.linalg.norm(pos[u] - pos[v]) <= r_c:
                        edges.append((u, v, (0, 0, 0)))
        return edges
    # periodic: bin in fractional space per axis
    inv = np.linalg.inv(cfg.cell)
    heights = _min_image_heights(cfg.cell)
    nbins = np.maximum((heights // r_c).astype(int), 1)
    frac = pos @ inv
    wrapped = np.where(cfg.pbc, frac - np.floor(frac), frac)
    which = np.minimum((wrapped * nbins).astype(int), nbins - 1)
    buckets: dict[tuple, list[int]] = {}
    for a in range(n):
        buckets.setdefault(tuple(which[a]), []).append(a)
    edges = []
    for key, members in buckets.items():
        neigh = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    cand = np.array(key) + (dx, dy, dz)
                    wrap = cand % nbins
                    neigh.extend(buckets.get(tuple(wrap), ()))
        seen = sorted(set(neigh))
        for u in members:
            for v in seen:
                rel = frac[u] - frac[v]
                shift = np.where(cfg.pbc, -np.round(rel), 0.0)
                d = pos[u] - pos[v] + shift @ cfg.cell
                if u != v and np.linalg.norm(d) <= r_c:
                    edges.append((u, v, tuple(int(s) for s in shift)))
    return edges


def build_neighbor_list(cfg: AtomicConfiguration, r_c: float,
                        method: str = "auto") -> NeighborList:
    """Directed edges within the cutoff, sorted by (u, v, shift).

    ``method``: 'brute', 'cells', or 'auto' (cells for larger systems).
    Periodic systems use the minimum-image convention and reject cutoffs
    exceeding half the smallest cell height rather than silently truncating.
    """
    if r_c <= 0:
        raise ValueError("cutoff must be positive")
    if cfg.cell is not None and np.any(cfg.pbc):
        heights = _min_image_heights(cfg.cell)
        limit = heights[cfg.pbc].min() / 2.0
        if r_c > limit + 1e-12:
            raise ValueError(
                f"cutoff {r_c} exceeds half the minimal cell height {limit:.6g}; "
                "minimum-image neighbor lists would miss images"
            )
    if method == "auto":
        method = "cells" if cfg.n_atoms > 64 else "brute"
    if cfg.cell is not None and not np.all(cfg.pbc):
        method = "brute"  # cell binning assumes fully periodic or free
    if method == "brute":
        edges = _pair_edges_brute(cfg, r_c)
    elif method == "cells":
        edges = _pair_edges_cells(cfg, r_c)
    else:
        raise ValueError(f"unknown neighbor method {method!r}")
    edges = sorted(set(edges))
    if edges:
        u = np.array([e[0] for e in edges], dtype=np.int64)
        v = np.array([e[1] for e in edges], dtype=np.int64)
        shifts = np.array([e[2] for e in edges], dtype=np.int64)
    else:
        u = np.zeros(0, dtype=np.int64)
        v = np.zeros(0, dtype=np.int64)
        shifts = np.zeros((0, 3), dtype=np.int64)
    pos = cfg.positions
    if cfg.cell is not None:
        d = pos[u] - pos[v] + shifts @ cfg.cell
    else:
        d = pos[u] - pos[v]
    dist = np.linalg.norm(d, axis=1)
    if np.any(dist <= 0):
        raise ValueError("coincident atoms in neighbor list")
    unit = d / dist[:, None]
    return NeighborList(u, v, dist, unit, shifts, r_c)
