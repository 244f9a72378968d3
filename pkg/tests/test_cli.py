"""Command-line contract: exit codes, file outputs, determinism."""

import subprocess
import sys

import numpy as np

from icart.cli import main

XYZ = """2
Properties=species:S:1:pos:R:3
H 0.0 0.0 0.0
H 0.0 0.0 0.9
"""


def run_cli(args, capsys):
    code = main(args)
    out = capsys.readouterr()
    return code, out.out


def test_tensor_prints_rank3_component(capsys):
    code, out = run_cli(["tensor", "--l", "3", "--dir", "0,0,1"], capsys)
    assert code == 0
    assert "(zzz) = 1" in out
    assert "(xxz) = -0.5" in out


def test_tensor_product_table(capsys):
    code, out = run_cli(["tensor", "--product", "1,1,2"], capsys)
    assert code == 0
    assert "parity=even" in out
    assert "madds" in out


def test_check_subset_passes(capsys):
    code, out = run_cli(
        ["check", "--only", "printed_rank3_values", "odd_product_cross"], capsys
    )
    assert code == 0
    assert out.count("PASS") == 2


def test_check_negative_control_fails(capsys):
    code, out = run_cli(
        ["check", "--inject-epsilon-sign-error", "--only", "odd_product_cross"],
        capsys,
    )
    assert code == 1
    assert "FAIL" in out
    # the corruption must not leak into later runs
    code2, _ = run_cli(["check", "--only", "odd_product_cross"], capsys)
    assert code2 == 0


def test_check_zero_tolerance_demonstrates_floor(capsys):
    code, out = run_cli(
        ["check", "--tol", "0", "--only", "tensor_construction_unity"], capsys
    )
    assert code == 1
    assert "FAIL" in out


def test_usage_error_exit_code(capsys):
    assert main(["no-such-command"]) == 2


def test_bench_csv_row_count(tmp_path, capsys):
    out_csv = tmp_path / "bench.csv"
    code, _ = run_cli(
        ["bench", "--L", "1..2", "--nu", "1,2", "--repeats", "1",
         "--mode", "kernel", "--out", str(out_csv)],
        capsys,
    )
    assert code == 0
    lines = out_csv.read_text().strip().split("\n")
    assert len(lines) == 5  # header + 2x2 grid


def test_bench_compare_kernels_rows(tmp_path, capsys):
    from icart import kernels

    out_csv = tmp_path / "cmp.csv"
    code, _ = run_cli(
        ["bench", "--L", "1", "--nu", "1", "--repeats", "1",
         "--compare-kernels", "--out", str(out_csv)],
        capsys,
    )
    assert code == 0
    lines = out_csv.read_text().strip().split("\n")
    assert len(lines) == 1 + len(kernels.available_backends())
    backends = {line.split(",")[3] for line in lines[1:]}
    assert backends == set(kernels.available_backends())


def test_bench_plot_script(tmp_path, capsys):
    out_csv = tmp_path / "bench.csv"
    script = tmp_path / "plot.gp"
    code, _ = run_cli(
        ["bench", "--L", "1", "--nu", "1", "--repeats", "1", "--mode", "kernel",
         "--out", str(out_csv), "--plot-script", str(script)],
        capsys,
    )
    assert code == 0
    assert "gnuplot" in script.read_text()


def test_train_synthetic_deterministic(tmp_path, capsys):
    histories = []
    for run in range(2):
        ckpt = tmp_path / f"m{run}.ckpt"
        hist = tmp_path / f"h{run}.csv"
        code, _ = run_cli(
            ["train", "--synthetic", "--epochs", "2", "--channels", "2",
             "--l-max", "1", "--L-max", "0", "--correlation", "1",
             "--out", str(ckpt), "--history", str(hist)],
            capsys,
        )
        assert code == 0
        histories.append(hist.read_text())
    assert histories[0] == histories[1]


def test_predict_roundtrip_and_rotation(tmp_path, capsys):
    ckpt = tmp_path / "m.ckpt"
    hist = tmp_path / "h.csv"
    code, _ = run_cli(
        ["train", "--synthetic", "--epochs", "1", "--channels", "2",
         "--l-max", "1", "--L-max", "0", "--correlation", "1",
         "--out", str(ckpt), "--history", str(hist)],
        capsys,
    )
    assert code == 0
    xyz_in = tmp_path / "in.xyz"
    # a frame plus its rotated copy
    rng = np.random.default_rng(0)
    from icart.atoms import AtomicConfiguration, write_extxyz
    from icart.core import random_rotation

    pos = rng.normal(scale=1.5, size=(3, 3)) * [1, 1, 1]
    rot = random_rotation(rng, -1).matrix
    frames = [
        AtomicConfiguration(pos, [1, 1, 1]),
        AtomicConfiguration(pos @ rot.T, [1, 1, 1]),
    ]
    xyz_in.write_text(write_extxyz(frames))
    xyz_out = tmp_path / "out.xyz"
    code, _ = run_cli(
        ["predict", "--model", str(ckpt), "--xyz", str(xyz_in), "--out", str(xyz_out)],
        capsys,
    )
    assert code == 0
    from icart.atoms import parse_extxyz

    predicted = parse_extxyz(xyz_out.read_text())
    assert abs(predicted[0].reference_energy - predicted[1].reference_energy) < 1e-8
    assert predicted[0].reference_forces is not None


def test_predict_identity_roundtrip_geometry(tmp_path, capsys):
    ckpt = tmp_path / "m.ckpt"
    run_cli(
        ["train", "--synthetic", "--epochs", "1", "--channels", "2",
         "--l-max", "1", "--L-max", "0", "--correlation", "1",
         "--out", str(ckpt), "--history", str(tmp_path / "h.csv")],
        capsys,
    )
    xyz_in = tmp_path / "in.xyz"
    xyz_in.write_text(XYZ)
    xyz_out = tmp_path / "out.xyz"
    code, _ = run_cli(
        ["predict", "--model", str(ckpt), "--xyz", str(xyz_in),
         "--out", str(xyz_out), "--no-forces"],
        capsys,
    )
    assert code == 0
    # original atom lines preserved byte for byte when only energy is added
    out_lines = xyz_out.read_text().splitlines()
    assert out_lines[2] == "H 0.0 0.0 0.0"
    assert out_lines[3] == "H 0.0 0.0 0.9"


def test_predict_empty_file_is_data_error(tmp_path, capsys):
    ckpt = tmp_path / "m.ckpt"
    run_cli(
        ["train", "--synthetic", "--epochs", "1", "--channels", "2",
         "--l-max", "1", "--L-max", "0", "--correlation", "1",
         "--out", str(ckpt), "--history", str(tmp_path / "h.csv")],
        capsys,
    )
    empty = tmp_path / "empty.xyz"
    empty.write_text("")
    code, _ = run_cli(
        ["predict", "--model", str(ckpt), "--xyz", str(empty),
         "--out", str(tmp_path / "o.xyz")],
        capsys,
    )
    assert code == 3


def test_predict_unknown_species_is_data_error(tmp_path, capsys):
    ckpt = tmp_path / "m.ckpt"
    run_cli(
        ["train", "--synthetic", "--epochs", "1", "--channels", "2",
         "--l-max", "1", "--L-max", "0", "--correlation", "1",
         "--out", str(ckpt), "--history", str(tmp_path / "h.csv")],
        capsys,
    )
    xyz = tmp_path / "in.xyz"
    xyz.write_text("1\nProperties=species:S:1:pos:R:3\nO 0 0 0\n")
    code, _ = run_cli(
        ["predict", "--model", str(ckpt), "--xyz", str(xyz),
         "--out", str(tmp_path / "o.xyz")],
        capsys,
    )
    assert code == 3


def test_dump_edges_csv(tmp_path, capsys):
    xyz = tmp_path / "in.xyz"
    xyz.write_text(XYZ)
    out = tmp_path / "edges.csv"
    code, _ = run_cli(
        ["dump-edges", "--xyz", str(xyz), "--cutoff", "5.0", "--out", str(out)],
        capsys,
    )
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("frame,u,v")
    assert len(lines) == 3  # two directed edges


def test_console_entry_point():
    result = subprocess.run(
        [sys.executable, "-m", "icart.cli", "tensor", "--l", "1", "--dir", "1,0,0"],
        capture_output=True, text=True,
    )
    assert result.returncode == 0
    assert "(x) = 1" in result.stdout
