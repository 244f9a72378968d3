"""Equivariant many-body message-passing potential on Cartesian tensors.

Layer t builds two-body features by coupling radially weighted direction
tensors with neighbor states, multiplies them into a product basis of
correlation order nu, contracts the basis with learnable per-path weights
into messages, applies a residual update, and reads rank-0 channels out as
per-atom energies.  Only even-parity couplings appear anywhere, so the
total energy is invariant under the full orthogonal group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .atoms import AtomicConfiguration, build_neighbor_list
from .core import tensor_map
from .product import enumerate_paths, product_table, valid_triples

__all__ = [
    "ModelConfig",
    "ModelStructure",
    "structure_for",
    "init_params",
    "decay_param_names",
    "bessel_basis",
    "poly_cutoff",
    "radial_weights",
    "two_body_first",
    "two_body",
    "product_basis",
    "messages",
    "update",
    "readout",
    "forward_energy",
    "energy",
    "fit_shift_scale",
]


@dataclass(frozen=True)
class ModelConfig:
    """Hyperparameters; species are atomic numbers in embedding order."""

    species: tuple[int, ...]
    r_cut: float = 5.0
    l_max: int = 3
    L_max: int = 2
    correlation: int = 3
    n_layers: int = 2
    channels: int = 8
    latent_channels: int = 4
    variant: str = "sym"  # full | sym | sym+lt
    n_bessel: int = 8
    envelope_p: int = 5
    radial_widths: tuple[int, ...] = (64, 64, 64)
    readout_hidden: int = 16
    intermediate_cap: int | None = None
    dtype: str = "float64"

    def __post_init__(self):
        if self.variant not in ("full", "sym", "sym+lt"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.correlation < 1:
            raise ValueError("correlation order must be >= 1")
        cap = self.l_max if self.intermediate_cap is None else self.intermediate_cap
        if self.L_max > cap:
            raise ValueError("message rank cannot exceed the intermediate cap")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")
        if len(self.species) < 1:
            raise ValueError("at least one species required")

    @property
    def cap(self) -> int:
        return self.l_max if self.intermediate_cap is None else self.intermediate_cap

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def latent(self) -> bool:
        return self.variant.endswith("lt")

    @property
    def path_variant(self) -> str:
        return "sym" if self.variant.startswith("sym") else "full"

    @classmethod
    def paper_default(cls, species, r_cut: float = 5.0) -> "ModelConfig":
        """Production-scale hyperparameters (256 channels, rank-3 embedding)."""
        return cls(
            species=tuple(species), r_cut=r_cut, l_max=3, L_max=2,
            correlation=3, n_layers=2, channels=256, latent_channels=64,
        )


class ModelStructure:
    """Derived bookkeeping: coupling triples, product paths, weight shapes."""

    def __init__(self, config: ModelConfig):
        self.config = config
        self.triples_first = [(l, 0, l) for l in range(config.l_max + 1)]
        self.triples_later = valid_triples(config.l_max, config.L_max, config.l_max)
        self.paths = {}
        for L in range(config.L_max + 1):
            per_nu = {}
            for nu in range(1, config.correlation + 1):
                per_nu[nu] = enumerate_paths(
                    config.l_max, L, nu, config.path_variant, config.cap
                )
            self.paths[L] = per_nu

    def triples(self, t: int):
        return self.triples_first if t == 0 else self.triples_later

    def path_list(self, L: int):
        """Paths for rank L flattened over correlation order (nu ascending)."""
        out = []
        for nu in sorted(self.paths[L]):
            out.extend(self.paths[L][nu])
        return out

    def n_paths(self, L: int) -> int:
        return len(self.path_list(L))


@lru_cache(maxsize=32)
def structure_for(config: ModelConfig) -> ModelStructure:
    return ModelStructure(config)


def decay_param_names(config: ModelConfig) -> set[str]:
    """Weight groups subject to weight decay: product mixing and message
    expansion weights."""
    names = set()
    for t in range(config.n_layers):
        for l in range(config.l_max + 1):
            names.add(f"layer{t}.prodmix.{l}")
        for L in range(config.L_max + 1):
            names.add(f"layer{t}.msg.{L}")
    return names


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Seeded parameter initialization.

    Channel-mixing and update weights are unit normal; message weights use
    std 1/len(paths) per correlation order (1/(sqrt(d)*len) when coupled);
    plain feed-forward layers are unit normal scaled by 1/sqrt(fan_in).
    """
    rng = np.random.default_rng(seed)
    st = structure_for(config)
    K = config.channels
    Kp = config.latent_channels if config.latent else K
    nz = config.n_species
    dt = config.np_dtype
    params: dict[str, np.ndarray] = {}

    def normal(shape, std=1.0):
        return (rng.standard_normal(shape) * std).astype(dt)

    params["species_embed"] = normal((nz, K))
    for t in range(config.n_layers):
        widths = (config.n_bessel,) + tuple(config.radial_widths)
        for i in range(len(widths) - 1):
            params[f"layer{t}.radial.w{i}"] = normal(
                (widths[i + 1], widths[i]), 1.0 / math.sqrt(widths[i])
            )
        n_out = K * len(st.triples(t))
        params[f"layer{t}.radial.w{len(widths) - 1}"] = normal(
            (n_out, widths[-1]), 1.0 / math.sqrt(widths[-1])
        )
        if t > 0:
            for l2 in range(config.L_max + 1):
                params[f"layer{t}.mixA.{l2}"] = normal((K, K))
        for l in range(config.l_max + 1):
            params[f"layer{t}.prodmix.{l}"] = normal((Kp, K))
        for L in range(config.L_max + 1):
            blocks = []
            for nu in sorted(st.paths[L]):
                n_nu = len(st.paths[L][nu])
                if n_nu == 0:
                    continue
                std = 1.0 / n_nu
                if config.latent:
                    std /= math.sqrt(K)
                    blocks.append(normal((nz, n_nu, K, Kp), std))
                else:
                    blocks.append(normal((nz, n_nu, K), std))
            if blocks:
                params[f"layer{t}.msg.{L}"] = np.concatenate(blocks, axis=1)
            else:
                shape = (nz, 0, K, Kp) if config.latent else (nz, 0, K)
                params[f"layer{t}.msg.{L}"] = np.zeros(shape, dtype=dt)
            params[f"layer{t}.update.self.{L}"] = normal((K, K))
            params[f"layer{t}.update.res.{L}"] = normal((nz, K, K))
        if t < config.n_layers - 1:
            params[f"layer{t}.readout.w"] = normal((K,))
        else:
            h = config.readout_hidden
            params[f"layer{t}.readout.w1"] = normal((h, K))
            params[f"layer{t}.readout.b1"] = np.zeros(h, dtype=dt)
            params[f"layer{t}.readout.w2"] = normal((h,))
    params["shift"] = np.zeros(nz, dtype=dt)
    params["scale"] = np.ones((), dtype=dt)
    return params


# ---------------------------------------------------------------------------
# radial embedding


def _envelope_coeffs(p: int) -> np.ndarray:
    """1 - (p+1)(p+2)/2 d^p + p(p+2) d^(p+1) - p(p+1)/2 d^(p+2), highest first."""
    coeffs = np.zeros(p + 3)
    coeffs[0] = -p * (p + 1) / 2.0
    coeffs[1] = p * (p + 2)
    coeffs[2] = -(p + 1) * (p + 2) / 2.0
    coeffs[-1] = 1.0
    return coeffs


def poly_cutoff(r, r_cut: float, p: int = 5) -> ad.Var:
    """Smooth envelope: 1 at r=0, 0 with two vanishing derivatives at r_cut,
    and exactly 0 beyond."""
    r = r if isinstance(r, ad.Var) else ad.Var(np.asarray(r, dtype=np.float64))
    d = ad.scale(r, 1.0 / r_cut)
    poly = ad.polyval(_envelope_coeffs(p), d)
    zero = ad.Var(np.zeros_like(r.value))
    return ad.where_lt(d, 1.0, poly, zero)


def bessel_basis(r, r_cut: float, n: int = 8, p: int = 5) -> ad.Var:
    """Sinusoidal radial basis scaled by 1/r and the polynomial envelope.

    Values for r >= r_cut are exactly zero (the envelope clamps), which keeps
    finite-difference probes across the cutoff well defined.
    """
    rv = r if isinstance(r, ad.Var) else ad.Var(np.asarray(r, dtype=np.float64))
    if np.any(rv.value <= 0):
        raise ValueError("radial basis requires r > 0")
    d = ad.scale(rv, 1.0 / r_cut)
    freqs = np.arange(1, n + 1) * math.pi
    args = ad.einsum("e,j->ej", d, ad.Var(freqs.astype(rv.value.dtype)))
    sins = ad.sin(args)
    inv_r = ad.reciprocal(rv)
    env = poly_cutoff(rv, r_cut, p)
    radial = ad.mul(sins, ad.reshape(ad.mul(inv_r, env), (-1, 1)))
    return ad.scale(radial, math.sqrt(2.0 / r_cut))


def radial_weights(r, params, t: int, st: ModelStructure) -> ad.Var:
    """Edge-wise weight table (E, K, n_triples): feed-forward net over the
    radial basis, output multiplied by the envelope once more so every
    message vanishes smoothly at the cutoff."""
    cfg = st.config
    x = bessel_basis(r, cfg.r_cut, cfg.n_bessel, cfg.envelope_p)
    n_hidden = len(cfg.radial_widths)
    for i in range(n_hidden):
        x = ad.einsum("oi,ei->eo", params[f"layer{t}.radial.w{i}"], x)
        x = ad.silu(x)
    x = ad.einsum("oi,ei->eo", params[f"layer{t}.radial.w{n_hidden}"], x)
    env = poly_cutoff(r, cfg.r_cut, cfg.envelope_p)
    x = ad.mul(x, ad.reshape(env, (-1, 1)))
    n_edges = x.value.shape[0]
    return ad.reshape(x, (n_edges, cfg.channels, len(st.triples(t))))


# ---------------------------------------------------------------------------
# message-passing blocks (all operate on tape Vars)


def direction_tensors(r_hat: ad.Var, l_max: int) -> dict[int, ad.Var]:
    """Per-edge symmetric traceless tensors of the unit vectors, rank 0..l_max."""
    n_edges = r_hat.value.shape[0]
    powers = {0: ad.Var(np.ones((n_edges, 1), dtype=r_hat.value.dtype))}
    for l in range(1, l_max + 1):
        prev = powers[l - 1]
        nxt = ad.einsum("ea,eb->eab", prev, r_hat)
        powers[l] = ad.reshape(nxt, (n_edges, 3 ** l))
    return {l: ad.linear_map(tensor_map(l), powers[l]) for l in range(l_max + 1)}


def two_body_first(T, radial, h0, edge_u, edge_v, n_atoms, st) -> dict[int, ad.Var]:
    """First-layer two-body features: neighbor-pooled direction tensors
    weighted by the radial net and the neighbor species embedding."""
    he = ad.gather(h0, edge_v)  # (E, K)
    out = {}
    for idx, (l1, _, _) in enumerate(st.triples_first):
        w = ad.mul(ad.take_index_last(radial, idx), he)
        contrib = ad.einsum("ek,ec->ekc", w, T[l1])
        out[l1] = ad.segment_sum(contrib, edge_u, n_atoms)
    return out


def two_body(T, radial, h, edge_u, edge_v, params, t: int, st) -> dict[int, ad.Var]:
    """Two-body features for layers past the first: even products of the
    radially weighted direction tensor with channel-mixed neighbor states,
    pooled over neighbors."""
    cfg = st.config
    inv_sqrt_d = 1.0 / math.sqrt(cfg.channels)
    mixed = {}
    for l2 in range(cfg.L_max + 1):
        if l2 in h:
            mixed[l2] = ad.scale(
                ad.einsum("kq,nqc->nkc", params[f"layer{t}.mixA.{l2}"], h[l2]),
                inv_sqrt_d,
            )
    n_atoms = h[0].value.shape[0]
    n_edges = len(edge_u)
    sums: dict[int, ad.Var] = {}
    for idx, (l1, l2, l3) in enumerate(st.triples_later):
        if l2 not in mixed:
            continue
        spec = product_table(l1, l2, l3)
        w = ad.take_index_last(radial, idx)  # (E, K)
        xe = ad.einsum("ek,ec->ekc", w, T[l1])
        ye = ad.gather(mixed[l2], edge_v)
        rows = n_edges * cfg.channels
        ze = ad.bilinear(
            spec.table,
            ad.reshape(xe, (rows, 3 ** l1)),
            ad.reshape(ye, (rows, 3 ** l2)),
        )
        ze = ad.reshape(ze, (n_edges, cfg.channels, 3 ** l3))
        sums[l3] = ze if l3 not in sums else ad.add(sums[l3], ze)
    out = {}
    for l3 in range(cfg.l_max + 1):
        if l3 in sums:
            out[l3] = ad.segment_sum(sums[l3], edge_u, n_atoms)
        else:
            out[l3] = ad.Var(
                np.zeros((n_atoms, cfg.channels, 3 ** l3), dtype=h[0].value.dtype)
            )
    return out


def product_basis(A, params, t: int, st) -> dict[int, list[ad.Var]]:
    """Iterated products of mixed two-body features along every path.

    Shared path prefixes are evaluated once; the sym variant's path lists
    are subsets of the full ones, so its work never exceeds full.
    """
    cfg = st.config
    Kp = cfg.latent_channels if cfg.latent else cfg.channels
    inv_sqrt_d = 1.0 / math.sqrt(cfg.channels)
    n_atoms = A[0].value.shape[0]
    mixed = {}
    for l in range(cfg.l_max + 1):
        mixed[l] = ad.scale(
            ad.einsum("kq,nqc->nkc", params[f"layer{t}.prodmix.{l}"], A[l]),
            inv_sqrt_d,
        )
    rows = n_atoms * Kp
    memo: dict[tuple, ad.Var] = {}

    def eval_path(leaves, inters):
        key = (leaves, inters)
        if key in memo:
            return memo[key]
        if len(leaves) == 1:
            result = mixed[leaves[0]]
        else:
            prev = eval_path(leaves[:-1], inters[:-1])
            lam_prev = inters[-2] if len(inters) >= 2 else leaves[0]
            leaf = leaves[-1]
            lam = inters[-1]
            spec = product_table(lam_prev, leaf, lam)
            z = ad.bilinear(
                spec.table,
                ad.reshape(prev, (rows, 3 ** lam_prev)),
                ad.reshape(mixed[leaf], (rows, 3 ** leaf)),
            )
            result = ad.reshape(z, (n_atoms, Kp, 3 ** lam))
        memo[key] = result
        return result

    out: dict[int, list[ad.Var]] = {}
    for L in range(cfg.L_max + 1):
        out[L] = [eval_path(p.leaves, p.intermediates) for p in st.path_list(L)]
    return out


def messages(B, params, z_idx, t: int, st) -> dict[int, ad.Var]:
    """Per-path linear expansion of the product basis; the latent variant
    decodes the reduced channel space back to full width here."""
    cfg = st.config
    out = {}
    for L in range(cfg.L_max + 1):
        paths = B[L]
        n_atoms = len(z_idx)
        if not paths:
            out[L] = ad.Var(
                np.zeros((n_atoms, cfg.channels, 3 ** L), dtype=cfg.np_dtype)
            )
            continue
        stacked = ad.stack0(paths)  # (P, N, Kp, 3^L)
        w = ad.gather(params[f"layer{t}.msg.{L}"], z_idx)
        if cfg.latent:
            out[L] = ad.einsum("pnqc,npkq->nkc", stacked, w)
        else:
            out[L] = ad.einsum("pnkc,npk->nkc", stacked, w)
    return out


def update(h, m, params, z_idx, t: int, st) -> dict[int, ad.Var]:
    """Linear update with the species-resolved residual connection."""
    cfg = st.config
    inv_d = 1.0 / math.sqrt(cfg.channels)
    inv_dz = 1.0 / math.sqrt(cfg.channels * cfg.n_species)
    out = {}
    for L in range(cfg.L_max + 1):
        new = ad.scale(
            ad.einsum("kq,nqc->nkc", params[f"layer{t}.update.self.{L}"], m[L]),
            inv_d,
        )
        if L in h:
            res_w = ad.gather(params[f"layer{t}.update.res.{L}"], z_idx)
            res = ad.scale(ad.einsum("nkq,nqc->nkc", res_w, h[L]), inv_dz)
            new = ad.add(new, res)
        out[L] = new
    return out


def readout(h, params, t: int, st) -> ad.Var:
    """Per-atom energy from rank-0 channels: linear for inner layers, a
    one-hidden-layer net (the only biased layer) for the last."""
    cfg = st.config
    scalars = ad.reshape(h[0], (h[0].value.shape[0], cfg.channels))
    inv_d = 1.0 / math.sqrt(cfg.channels)
    if t < cfg.n_layers - 1:
        return ad.scale(ad.einsum("k,nk->n", params[f"layer{t}.readout.w"], scalars), inv_d)
    pre = ad.scale(
        ad.einsum("ok,nk->no", params[f"layer{t}.readout.w1"], scalars), inv_d
    )
    pre = ad.add(pre, ad.reshape(params[f"layer{t}.readout.b1"], (1, -1)))
    hidden = ad.silu(pre)
    return ad.scale(
        ad.einsum("o,no->n", params[f"layer{t}.readout.w2"], hidden),
        1.0 / math.sqrt(cfg.readout_hidden),
    )


def _free_atom_readouts(params, config: ModelConfig, st) -> list[ad.Var]:
    """Per-species readout baselines: the layer stack propagated with empty
    message sums.  Subtracting these makes an isolated atom's energy exactly
    its species shift, for any parameter values."""
    nz = config.n_species
    z_all = np.arange(nz, dtype=np.int64)
    h = {0: ad.reshape(params["species_embed"], (nz, config.channels, 1))}
    zeros = {
        L: ad.Var(np.zeros((nz, config.channels, 3 ** L), dtype=config.np_dtype))
        for L in range(config.L_max + 1)
    }
    out = []
    for t in range(config.n_layers):
        h = update(h, zeros, params, z_all, t, st)
        out.append(readout(h, params, t, st))
    return out


def forward_energy(pos: ad.Var, z_idx: np.ndarray, edge_u, edge_v, shift_vec,
                   params, config: ModelConfig, collect: bool = False):
    """Total energy as a tape Var; ``collect`` returns every intermediate
    tensor (two-body, basis, messages, states) for invariant checks."""
    st = structure_for(config)
    n_atoms = len(z_idx)
    diag: dict[str, dict] = {"A": {}, "B": {}, "m": {}, "h": {}}
    dtype = config.np_dtype

    ru = ad.gather(pos, edge_u)
    rv = ad.gather(pos, edge_v)
    r_vec = ad.add(ad.sub(ru, rv), ad.Var(np.asarray(shift_vec, dtype=dtype)))
    r = ad.row_norms(r_vec)
    r_hat = ad.normalize_rows(r_vec)
    T = direction_tensors(r_hat, config.l_max)

    baselines = _free_atom_readouts(params, config, st)
    h = {0: ad.reshape(ad.gather(params["species_embed"], z_idx), (n_atoms, config.channels, 1))}
    e_total = None
    for t in range(config.n_layers):
        radial = radial_weights(r, params, t, st)
        if t == 0:
            h0_flat = ad.reshape(h[0], (n_atoms, config.channels))
            A = two_body_first(T, radial, h0_flat, edge_u, edge_v, n_atoms, st)
        else:
            A = two_body(T, radial, h, edge_u, edge_v, params, t, st)
        B = product_basis(A, params, t, st)
        m = messages(B, params, z_idx, t, st)
        h = update(h, m, params, z_idx, t, st)
        e_t = ad.sub(readout(h, params, t, st), ad.gather(baselines[t], z_idx))
        e_total = e_t if e_total is None else ad.add(e_total, e_t)
        if collect:
            diag["A"][t] = {l: v.value for l, v in A.items()}
            diag["B"][t] = {L: [v.value for v in vs] for L, vs in B.items()}
            diag["m"][t] = {L: v.value for L, v in m.items()}
            diag["h"][t] = {L: v.value for L, v in h.items()}

    shift = ad.gather(params["shift"], z_idx)
    per_atom = ad.add(shift, ad.mul(params["scale"], e_total))
    total = ad.sum_axes(per_atom)
    return (total, diag) if collect else (total, None)


def _edges_for(cfg: AtomicConfiguration, config: ModelConfig):
    nl = build_neighbor_list(cfg, config.r_cut)
    if cfg.cell is not None:
        shift_vec = nl.shifts @ cfg.cell
    else:
        shift_vec = np.zeros((nl.n_edges, 3))
    return nl.edge_u, nl.edge_v, shift_vec


def species_indices(numbers, config: ModelConfig) -> np.ndarray:
    lookup = {z: i for i, z in enumerate(config.species)}
    try:
        return np.array([lookup[int(z)] for z in numbers], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"species {exc} not covered by the model") from None


def _wrap_params(params, dtype) -> dict[str, ad.Var]:
    return {k: ad.Var(np.asarray(v, dtype=dtype)) for k, v in params.items()}


def energy(cfg: AtomicConfiguration, params, config: ModelConfig,
            collect: bool = False):
    """Total energy in eV (no tape, plain evaluation)."""
    z_idx = species_indices(cfg.atomic_numbers, config)
    edge_u, edge_v, shift_vec = _edges_for(cfg, config)
    pos = ad.Var(np.asarray(cfg.positions, dtype=config.np_dtype))
    total, diag = forward_energy(
        pos, z_idx, edge_u, edge_v, shift_vec,
        _wrap_params(params, config.np_dtype), config, collect=collect,
    )
    return (float(total.value), diag) if collect else float(total.value)


def fit_shift_scale(configs, config: ModelConfig):
    """Per-species energy shift by least squares on species counts, and a
    global scale from the root-mean-square force component."""
    counts = []
    energies = []
    force_sq = []
    n_force = 0
    for cfg in configs:
        row = [int(np.sum(cfg.atomic_numbers == z)) for z in config.species]
        if cfg.reference_energy is not None:
            counts.append(row)
            energies.append(cfg.reference_energy)
        if cfg.reference_forces is not None:
            force_sq.append(float(np.sum(cfg.reference_forces ** 2)))
            n_force += cfg.reference_forces.size
    shift = np.zeros(config.n_species)
    if counts:
        a = np.asarray(counts, dtype=np.float64)
        b = np.asarray(energies, dtype=np.float64)
        shift, *_ = np.linalg.lstsq(a, b, rcond=None)
    scale = 1.0
    if n_force:
        scale = math.sqrt(sum(force_sq) / n_force)
        if scale == 0.0:
            scale = 1.0
    return shift.astype(config.np_dtype), np.asarray(scale, dtype=config.np_dtype)
