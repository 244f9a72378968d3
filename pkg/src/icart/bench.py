"""Scaling benchmark: inference time, retained memory, and operation
counters versus tensor rank and correlation order, for the Cartesian
kernels against the coupled-spherical baseline.

Wall-clock assertions downstream are trend-only; the deterministic
multiply-add counters carry the quantitative claims.

Accounting convention for the cost-model comparison: a binary product is
charged at its dense rate (index placements x output elements x 3^folds
contraction mul-adds, before sparsity pruning), and a nu-fold path at the
product of its step rates (fully expanded evaluation, no intermediate
caching).  The runtime counters (actual sparse table mul-adds) are reported
alongside.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from . import model as mdl
from .atoms import AtomicConfiguration
from .core import placement_count
from .product import enumerate_paths, product_table
from .spherical import cg_product_batch

__all__ = [
    "BenchRecord",
    "count_product_ops",
    "dense_product_cost",
    "path_set_cost",
    "cost_model_value",
    "cost_model_fit",
    "bench_scaling",
    "records_to_csv",
    "CSV_COLUMNS",
    "make_benchmark_configuration",
    "GNUPLOT_SCRIPT",
]


def count_product_ops(l1: int, l2: int, l3: int) -> dict:
    """Deterministic operation counters for one coupling.

    ``madds`` counts the sparse table entries actually multiplied per batch
    row; ``dense_madds`` is the pre-sparsity rate used by the cost-model
    comparison; ``perm_terms`` counts distinct index placements.
    """
    spec = product_table(l1, l2, l3)
    return {
        "madds": spec.table.nnz,
        "dense_madds": dense_product_cost(l1, l2, l3),
        "perm_terms": spec.perm_terms,
        "out_elements": 3 ** l3,
    }


def dense_product_cost(l1: int, l2: int, l3: int) -> int:
    """Placements x outputs x contraction mul-adds, summed over the
    coefficient table; the odd branch pays an extra double contraction."""
    k2 = l1 + l2 - l3
    total = 0
    if k2 % 2 == 0:
        k = k2 // 2
        for m in range(0, min(l1, l2) - k + 1):
            s = k + m
            pl = placement_count(l3, (l1 - s, l2 - s), m)
            total += pl * 3 ** l3 * 3 ** s
    else:
        k = (k2 - 1) // 2
        for m in range(0, min(l1, l2) - k):
            s = k + m
            pl = placement_count(l3, (1, l1 - s - 1, l2 - s - 1), m)
            total += pl * 3 ** l3 * 3 ** (s + 1) * 3
    return total


def _grid_paths(l_max: int, L_max: int, nu: int, variant: str, cap: int):
    paths = []
    for target in range(L_max + 1):
        for n in range(1, nu + 1):
            paths.extend(enumerate_paths(l_max, target, n, variant, cap))
    return paths


def path_set_cost(L: int, nu: int, variant: str = "full") -> dict:
    """Static counters for the (L, nu) cell with rank caps fixed to L."""
    paths = _grid_paths(L, L, nu, variant, L)
    expanded = 0.0
    sparse = 0
    perm = 0
    for p in paths:
        cost = 3.0 ** p.target
        lam_prev = p.leaves[0]
        for j in range(1, len(p.leaves)):
            lam = p.intermediates[j - 1]
            cost *= dense_product_cost(lam_prev, p.leaves[j], lam)
            spec = product_table(lam_prev, p.leaves[j], lam)
            sparse += spec.table.nnz
            perm += spec.perm_terms
            lam_prev = lam
        expanded += cost
    return {
        "n_paths": len(paths),
        "expanded_madds": expanded,
        "sparse_madds": sparse,
        "perm_terms": perm,
    }


def cost_model_value(L: int, nu: int, n_paths: int) -> float:
    """n_paths * (9^L L!/(2^(L/2) (L/2)!))^(nu-1)."""
    x = 9.0 ** L * math.factorial(L) / (2.0 ** (L / 2) * math.gamma(L / 2 + 1))
    return n_paths * x ** (nu - 1)


def cost_model_fit(cells) -> tuple[float, float]:
    """Slope-1 log-space fit of expanded counters against the cost model.

    ``cells`` is an iterable of (L, nu); returns (R^2, fitted constant).
    """
    logm = []
    logc = []
    for L, nu in cells:
        stats = path_set_cost(L, nu, "full")
        logm.append(math.log(stats["expanded_madds"]))
        logc.append(math.log(cost_model_value(L, nu, stats["n_paths"])))
    logm = np.asarray(logm)
    logc = np.asarray(logc)
    d = logm - logc
    const = float(np.exp(d.mean()))
    ss_res = float(np.sum((d - d.mean()) ** 2))
    ss_tot = float(np.sum((logm - logm.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return r2, const


@dataclass
class BenchRecord:
    mode: str  # model | kernel
    kernel: str  # cartesian | cg
    variant: str
    backend: str
    L: int
    nu: int
    channels: int
    repeats: int
    time_ms: float  # median of repeats
    min_ms: float  # minimum of repeats (noise-robust trend estimator)
    peak_bytes: int
    madds: int
    perm_terms: int
    n_paths: int
    dense_madds: float
    status: str = "ok"


CSV_COLUMNS = [
    "mode", "kernel", "variant", "backend", "L", "nu", "channels", "repeats",
    "time_ms", "min_ms", "peak_bytes", "madds", "perm_terms", "n_paths",
    "dense_madds", "status",
]


def compare_variants(L: int, nu: int, repeats: int = 20, channels: int = 8) -> dict:
    """Median model-forward times of the full and sym bases at one grid
    point, interleaved in a single timing session so drift cancels."""
    conf = make_benchmark_configuration()
    _prewarm_tables(L, nu)
    run_full, _ = _prepare_model_cell(L, nu, "full", channels, conf)
    run_sym, _ = _prepare_model_cell(L, nu, "sym", channels, conf)
    (t_full, _), (t_sym, _) = _round_robin_times([run_full, run_sym], repeats)
    return {
        "full_ms": t_full,
        "sym_ms": t_sym,
        "full_paths": path_set_cost(L, nu, "full")["n_paths"],
        "sym_paths": path_set_cost(L, nu, "sym")["n_paths"],
    }


def records_to_csv(records) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for r in records:
        d = asdict(r)
        lines.append(",".join(str(d[c]) for c in CSV_COLUMNS))
    return "\n".join(lines) + "\n"


GNUPLOT_SCRIPT = """\
# gnuplot script for the scaling benchmark CSV (pass the csv as `csv`)
set datafile separator ','
set key autotitle columnhead
set logscale y
set xlabel 'correlation order'
set ylabel 'time per structure [ms]'
plot for [L=1:3] csv using 6:($5==L ? $9 : 1/0) with linespoints title sprintf('L=%d', L)
"""


def make_benchmark_configuration(n_side: int = 3, spacing: float = 2.2) -> AtomicConfiguration:
    """Fixed synthetic 27-atom cube used by every benchmark row."""
    pts = []
    for i in range(n_side):
        for j in range(n_side):
            for k in range(n_side):
                pts.append((i * spacing, j * spacing, k * spacing))
    return AtomicConfiguration(np.array(pts), [1] * len(pts))


def _round_robin_times(runners: list, repeats: int, warmup: int = 3) -> list[float]:
    """Median per-runner wall time with interleaved, per-pass shuffled passes.

    Interleaving makes slow machine drift hit every cell alike; shuffling the
    within-pass order removes neighbor effects (a cell always following the
    largest one runs with cold caches).  GC stays off during timed regions.
    """
    import gc

    for fn in runners:
        for _ in range(warmup):
            fn()
    samples = [[] for _ in runners]
    order_rng = np.random.default_rng(12345)
    gc.collect()
    enabled = gc.isenabled()
    gc.disable()
    try:
        for _ in range(repeats):
            for i in order_rng.permutation(len(runners)):
                fn = runners[i]
                t0 = time.perf_counter()
                fn()
                samples[i].append(time.perf_counter() - t0)
    finally:
        if enabled:
            gc.enable()
    return [(float(np.median(s) * 1e3), float(min(s) * 1e3)) for s in samples]


def _prewarm_tables(L_max: int, nu_max: int):
    """Build every sparse table the grid will touch so one-time compilation
    never lands inside a timed cell."""
    from .core import tensor_map

    for l in range(L_max + 1):
        tensor_map(l)
    for L in range(1, L_max + 1):
        for p in _grid_paths(L, L, nu_max, "full", L):
            lam_prev = p.leaves[0]
            for j in range(1, len(p.leaves)):
                product_table(lam_prev, p.leaves[j], p.intermediates[j - 1])
                lam_prev = p.intermediates[j - 1]


def _prepare_model_cell(L, nu, variant, channels, conf):
    config = mdl.ModelConfig(
        species=(1,), r_cut=3.0, l_max=L, L_max=L, correlation=nu,
        channels=channels, variant=variant,
    )
    params = mdl.init_params(config, seed=0)
    z_idx = mdl.species_indices(conf.atomic_numbers, config)
    edge_u, edge_v, shift_vec = mdl._edges_for(conf, config)
    pvars = mdl._wrap_params(params, config.np_dtype)
    pos = ad.Var(conf.positions)

    def run():
        return mdl.forward_energy(pos, z_idx, edge_u, edge_v, shift_vec, pvars, config)

    def measure():
        kernels.reset_counters()
        run()
        madds = kernels.counters.madds
        # retained-memory metric: bytes recorded on a tape of one evaluation
        tape = ad.Tape()
        pos_t = ad.Var(conf.positions, track=True)
        with ad.recording(tape):
            mdl.forward_energy(pos_t, z_idx, edge_u, edge_v, shift_vec, pvars, config)
        return madds, tape.bytes_recorded()

    return run, measure


def _prepare_kernel_cell(L, nu, variant, channels, conf, rng, kernel):
    n_rows = conf.n_atoms * channels
    paths = _grid_paths(L, L, nu, variant, L)
    if kernel == "cartesian":
        feats = {l: rng.standard_normal((n_rows, 3 ** l)) for l in range(L + 1)}

        def step(lam_prev, leaf, lam, prev):
            spec = product_table(lam_prev, leaf, lam)
            return kernels.bilinear_apply(spec.table, prev, feats[leaf])

        dim = lambda l: 3 ** l
    else:  # coupled-spherical baseline
        feats = {l: rng.standard_normal((n_rows, 2 * l + 1)) for l in range(L + 1)}

        def step(lam_prev, leaf, lam, prev):
            return cg_product_batch(lam_prev, leaf, lam, prev, feats[leaf])

        dim = lambda l: 2 * l + 1

    def run():
        memo = {}

        def eval_path(leaves, inters):
            key = (leaves, inters)
            if key in memo:
                return memo[key]
            if len(leaves) == 1:
                out = feats[leaves[0]]
            else:
                prev = eval_path(leaves[:-1], inters[:-1])
                lam_prev = inters[-2] if len(inters) >= 2 else leaves[0]
                out = step(lam_prev, leaves[-1], inters[-1], prev)
            memo[key] = out
            return out

        acc = 0.0
        for p in paths:
            acc += float(eval_path(p.leaves, p.intermediates)[0, 0])
        return acc

    def measure():
        kernels.reset_counters()
        run()
        peak = sum(8 * n_rows * dim(p.target) for p in paths)
        return kernels.counters.madds, peak

    return run, measure


def bench_scaling(L_list, nu_list, variant: str = "full", repeats: int = 5,
                  channels: int = 8, mode: str = "model",
                  kernel: str = "cartesian", backend: str | None = None,
                  seed: int = 0) -> list[BenchRecord]:
    """Measure the (L, nu) grid with interleaved timing passes.

    Out-of-memory cells become status='oom' records instead of aborting the
    sweep; runs are pinned to whatever single thread numpy provides.
    """
    if mode == "model" and kernel != "cartesian":
        raise ValueError("model mode benchmarks the Cartesian network")
    conf = make_benchmark_configuration()
    previous = kernels.backend_name()
    if backend:
        kernels.use_backend(backend)
    _prewarm_tables(max(L_list), max(nu_list))
    cells = []
    records = []
    try:
        for L in L_list:
            for nu in nu_list:
                rng = np.random.default_rng(seed)
                try:
                    if mode == "model":
                        run, measure = _prepare_model_cell(L, nu, variant, channels, conf)
                    else:
                        run, measure = _prepare_kernel_cell(
                            L, nu, variant, channels, conf, rng, kernel
                        )
                    cells.append((L, nu, run, measure))
                except MemoryError:
                    cells.append((L, nu, None, None))
        timings = _round_robin_times(
            [run for (_, _, run, _) in cells if run is not None], repeats
        )
        timing_iter = iter(timings)
        for L, nu, run, measure in cells:
            if run is None:
                records.append(BenchRecord(
                    mode=mode, kernel=kernel, variant=variant,
                    backend=kernels.backend_name(), L=L, nu=nu,
                    channels=channels, repeats=repeats, time_ms=0.0,
                    min_ms=0.0, peak_bytes=0, madds=0, perm_terms=0,
                    n_paths=0, dense_madds=0.0, status="oom",
                ))
                continue
            madds, peak = measure()
            stats = path_set_cost(L, nu, "full" if variant == "full" else "sym")
            med_ms, min_ms = next(timing_iter)
            records.append(BenchRecord(
                mode=mode, kernel=kernel, variant=variant,
                backend=kernels.backend_name(), L=L, nu=nu,
                channels=channels, repeats=repeats, time_ms=med_ms,
                min_ms=min_ms, peak_bytes=peak, madds=madds,
                perm_terms=stats["perm_terms"],
                n_paths=stats["n_paths"],
                dense_madds=stats["expanded_madds"],
            ))
    finally:
        kernels.use_backend(previous)
    return records
