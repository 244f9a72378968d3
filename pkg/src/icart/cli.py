"""Command-line interface.

Exit codes: 0 success, 1 check failure, 2 usage error, 3 data error.
All randomness flows from one 64-bit seed printed at startup.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

__all__ = ["main"]


def _parse_range(text: str) -> list[int]:
    """'1..4' or '1,2,3' or '2'."""
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",")]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="icart",
        description="Irreducible Cartesian tensor algebra and equivariant potentials",
    )
    parser.add_argument("--seed", type=int, default=2024, help="global random seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="0 = library default, 1 = deterministic single thread")
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="run the invariant/property suite")
    p_check.add_argument("--tol", type=float, default=None,
                         help="override every tolerance (e.g. 0 to show the FP floor)")
    p_check.add_argument("--only", nargs="*", default=None, help="subset of check names")
    p_check.add_argument("--inject-epsilon-sign-error", action="store_true",
                         help="test hook: corrupt the antisymmetric symbol (negative control)")

    p_tensor = sub.add_parser("tensor", help="print tensor components and product tables")
    p_tensor.add_argument("--l", type=int, default=3)
    p_tensor.add_argument("--dir", type=str, default="0,0,1")
    p_tensor.add_argument("--product", type=str, default=None,
                          help="l1,l2,l3: print coupling constants and counters")

    p_bench = sub.add_parser("bench", help="scaling benchmark, CSV output")
    p_bench.add_argument("--L", type=str, default="1..3")
    p_bench.add_argument("--nu", type=str, default="1..4")
    p_bench.add_argument("--variant", choices=["full", "sym"], default="full")
    p_bench.add_argument("--channels", type=int, default=8)
    p_bench.add_argument("--repeats", type=int, default=5)
    p_bench.add_argument("--mode", choices=["model", "kernel"], default="model")
    p_bench.add_argument("--kernel", choices=["cartesian", "cg"], default="cartesian")
    p_bench.add_argument("--backend", choices=["auto", "python", "compiled"], default="auto")
    p_bench.add_argument("--compare-kernels", action="store_true",
                         help="emit rows for both the compiled and python backends")
    p_bench.add_argument("--out", type=str, default="bench.csv")
    p_bench.add_argument("--plot-script", type=str, default=None,
                         help="also emit a gnuplot script to this path")

    p_train = sub.add_parser("train", help="desk-scale training")
    p_train.add_argument("--synthetic", action="store_true",
                         help="use the built-in pair-potential data set")
    p_train.add_argument("--train-xyz", type=str, default=None)
    p_train.add_argument("--val-xyz", type=str, default=None)
    p_train.add_argument("--epochs", type=int, default=200)
    p_train.add_argument("--batch-size", type=int, default=5)
    p_train.add_argument("--lr", type=float, default=0.01)
    p_train.add_argument("--channels", type=int, default=8)
    p_train.add_argument("--l-max", type=int, default=2)
    p_train.add_argument("--L-max", dest="big_l_max", type=int, default=1)
    p_train.add_argument("--correlation", type=int, default=2)
    p_train.add_argument("--variant", choices=["full", "sym", "sym+lt"], default="sym")
    p_train.add_argument("--cutoff", type=float, default=5.0)
    p_train.add_argument("--out", type=str, default="model.ckpt")
    p_train.add_argument("--history", type=str, default="history.csv")

    p_predict = sub.add_parser("predict", help="energies/forces for extended-XYZ frames")
    p_predict.add_argument("--model", type=str, required=True)
    p_predict.add_argument("--xyz", type=str, required=True)
    p_predict.add_argument("--out", type=str, required=True)
    p_predict.add_argument("--no-forces", action="store_true")

    p_dump = sub.add_parser("dump-edges", help="neighbor-list CSV for debugging")
    p_dump.add_argument("--xyz", type=str, required=True)
    p_dump.add_argument("--cutoff", type=float, required=True)
    p_dump.add_argument("--out", type=str, default="-")
    return parser


def _cmd_check(args) -> int:
    from . import checks
    from .core import set_epsilon_sign_error

    if args.inject_epsilon_sign_error:
        set_epsilon_sign_error(True)
    try:
        results = checks.run_checks(seed=args.seed, tolerance_override=args.tol,
                                    names=args.only)
    finally:
        if args.inject_epsilon_sign_error:
            set_epsilon_sign_error(False)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:32s} max_violation={r.max_violation:.3e} "
              f"tolerance={r.tolerance:.3e} {status}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


def _cmd_tensor(args) -> int:
    from .bench import count_product_ops
    from .core import UnitVector, build_irreducible
    from .product import product_table

    if args.product:
        l1, l2, l3 = (int(x) for x in args.product.split(","))
        spec = product_table(l1, l2, l3)
        counters = count_product_ops(l1, l2, l3)
        print(f"coupling ({l1},{l2},{l3}): parity={spec.parity} k={spec.k}")
        print(f"coefficients: {', '.join(f'{c:.10g}' for c in spec.coefficients)}")
        for key, value in counters.items():
            print(f"{key}: {value}")
        return 0
    vec = np.array([float(x) for x in args.dir.split(",")])
    vec = vec / np.linalg.norm(vec)
    tensor = build_irreducible(UnitVector(vec), args.l)
    dense = tensor.dense()
    print(f"rank-{args.l} tensor of direction {vec.round(6).tolist()}")
    axes = "xyz"
    flat = dense.reshape(-1)
    for i, value in enumerate(flat):
        if abs(value) < 1e-14:
            continue
        idx = np.unravel_index(i, dense.shape) if args.l else ()
        label = "".join(axes[j] for j in idx) if args.l else "scalar"
        print(f"({label}) = {value:.12g}")
    return 0


def _cmd_bench(args) -> int:
    from . import bench

    Ls = _parse_range(args.L)
    nus = _parse_range(args.nu)
    backends = [args.backend]
    if args.compare_kernels:
        from . import kernels

        backends = kernels.available_backends()
        mode = "kernel"
    else:
        mode = args.mode
    records = []
    for backend in backends:
        records.extend(bench.bench_scaling(
            Ls, nus, variant=args.variant, repeats=args.repeats,
            channels=args.channels, mode=mode, kernel=args.kernel,
            backend=backend, seed=args.seed,
        ))
    csv = bench.records_to_csv(records)
    with open(args.out, "w") as fh:
        fh.write(csv)
    print(f"wrote {len(records)} rows to {args.out}")
    if args.plot_script:
        with open(args.plot_script, "w") as fh:
            fh.write(f"csv = '{args.out}'\n" + bench.GNUPLOT_SCRIPT)
        print(f"wrote plot script to {args.plot_script}")
    return 0


def _cmd_train(args) -> int:
    from . import train as trainmod
    from .atoms import ParseError, parse_extxyz_file
    from .checkpoint import save_checkpoint
    from .model import ModelConfig

    if args.synthetic:
        data = trainmod.make_pair_potential_set(24, seed=args.seed)
        train_set, val_set = data[:20], data[20:]
        species = (1,)
    else:
        if not args.train_xyz or not args.val_xyz:
            print("error: need --train-xyz and --val-xyz (or --synthetic)", file=sys.stderr)
            return 2
        try:
            train_set = parse_extxyz_file(args.train_xyz)
            val_set = parse_extxyz_file(args.val_xyz)
        except (OSError, ParseError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 3
        species = tuple(sorted({int(z) for cfg in train_set + val_set
                                for z in cfg.atomic_numbers}))
    config = ModelConfig(
        species=species, r_cut=args.cutoff, l_max=args.l_max,
        L_max=args.big_l_max, correlation=args.correlation,
        channels=args.channels, variant=args.variant,
    )
    tc = trainmod.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                              lr=args.lr, seed=args.seed)
    rows = []

    def log(entry):
        rows.append(entry)
        if entry["epoch"] % 20 == 0:
            print(f"epoch {entry['epoch']:4d} train {entry['train_loss']:.6f} "
                  f"val {entry['val_loss']:.6f} lr {entry['lr']:.5f}")

    try:
        best, history = trainmod.train_loop(train_set, val_set, config, tc, log=log)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    save_checkpoint(args.out, best, config, extra={"seed": args.seed})
    with open(args.history, "w") as fh:
        fh.write("epoch,train_loss,val_loss,lr\n")
        for h in history:
            fh.write(f"{h['epoch']},{h['train_loss']:.12g},{h['val_loss']:.12g},{h['lr']:.12g}\n")
    print(f"wrote checkpoint {args.out} and history {args.history}")
    return 0


def _cmd_predict(args) -> int:
    from . import grad as gradmod
    from .atoms import ParseError, parse_extxyz_file, write_extxyz
    from .checkpoint import CheckpointError, load_checkpoint

    try:
        params, config, _ = load_checkpoint(args.model)
    except (OSError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    try:
        frames = parse_extxyz_file(args.xyz)
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    if not frames:
        print("error: no frames in input", file=sys.stderr)
        return 3
    energies = []
    forces = []
    try:
        for cfg in frames:
            if args.no_forces:
                from .model import energy

                energies.append(energy(cfg, params, config))
                forces.append(None)
            else:
                e, f = gradmod.energy_and_forces(cfg, params, config)
                energies.append(e)
                forces.append(f)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    with open(args.out, "w") as fh:
        fh.write(write_extxyz(frames, energies, forces))
    print(f"wrote {len(frames)} frames to {args.out}")
    return 0


def _cmd_dump_edges(args) -> int:
    from .atoms import ParseError, build_neighbor_list, parse_extxyz_file

    try:
        frames = parse_extxyz_file(args.xyz)
    except (OSError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    lines = ["frame,u,v,shift_a,shift_b,shift_c,r,ux,uy,uz"]
    try:
        for fi, cfg in enumerate(frames):
            nl = build_neighbor_list(cfg, args.cutoff)
            for e in range(nl.n_edges):
                s = nl.shifts[e]
                u_vec = nl.unit_vectors[e]
                lines.append(
                    f"{fi},{nl.edge_u[e]},{nl.edge_v[e]},{s[0]},{s[1]},{s[2]},"
                    f"{nl.distances[e]:.12g},{u_vec[0]:.12g},{u_vec[1]:.12g},{u_vec[2]:.12g}"
                )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    text = "\n".join(lines) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    print(f"seed: {args.seed}", file=sys.stderr)
    handlers = {
        "check": _cmd_check,
        "tensor": _cmd_tensor,
        "bench": _cmd_bench,
        "train": _cmd_train,
        "predict": _cmd_predict,
        "dump-edges": _cmd_dump_edges,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
