import csv
import json
import math
import os
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mgspectral import get_workers, set_workers
from mgspectral.checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from mgspectral.cli import EIGEN_COLUMNS, EXIT_BLOWUP, EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from mgspectral.config import (ConfigError, InitialSpec, MildSpec, RunConfig, RunSpec, ScanSpec, SweepSpec,
                               config_to_text, default_config_text, parse_config, parse_norm)
from mgspectral.multiplier import PhysicalParams
from mgspectral.spectral import Grid, NormSpec, random_smooth


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run_cli(tmp_path, text, command, *extra):
    cfg = write(tmp_path, text)
    out = tmp_path / "out"
    return main([command, "--config", cfg, "--out", str(out), *extra]), out


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


class TestConfig:
    def test_defaults_round_trip(self):
        assert parse_config(default_config_text()) == RunConfig()

    def test_empty_text_is_defaults(self):
        assert parse_config("") == RunConfig()

    def test_grid_shorthand(self):
        assert parse_config("[grid]\nn = 16\n").grid == (16, 16, 16)

    @pytest.mark.parametrize("text,key", [
        ("[grid]\nn1 = 15\n", "n1"),
        ("[grid]\nn3 = abc\n", "n3"),
        ("[params]\nn_squared = 0\n", "n_squared"),
        ("[params]\neps_nu = -1\n", "eps_nu"),
        ("[params]\nforcing_m = 1.5\n", "forcing_m"),
        ("[params]\nviscosity = 1\n", "viscosity"),
        ("[run]\ndt = 0\n", "dt"),
        ("[run]\ntrack = L2, X9\n", "track"),
        ("[initial]\npreset = banana\n", "preset"),
        ("[scan]\nepsilons = 0.1, 0.2\n", "epsilons"),
        ("[scan]\ncase = vii\n", "case"),
        ("[mild]\np = 2\n", "p"),
        ("[eigen]\nn_max = 8\n", "n_max"),
        ("[output]\nthreads = -2\n", "threads"),
    ])
    def test_errors_name_the_key(self, text, key):
        with pytest.raises(ConfigError) as exc:
            parse_config("# header\n" + text, "c.ini")
        msg = str(exc.value)
        assert key in msg
        assert msg.startswith("c.ini:")

    def test_error_reports_line(self):
        with pytest.raises(ConfigError) as exc:
            parse_config("[grid]\nn1 = 16\nn2 = 7\n", "c.ini")
        assert str(exc.value).startswith("c.ini:3:")

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="bogus"):
            parse_config("[bogus]\nx = 1\n")

    def test_syntax_error(self):
        with pytest.raises(ConfigError):
            parse_config("n1 = 16\n")

    @pytest.mark.parametrize("label,spec", [("L2", NormSpec(0, 2)), ("Linf", NormSpec(0, math.inf)),
                                            ("W0.5_4", NormSpec(0.5, 4)), ("H1_2", NormSpec(1, 2, False))])
    def test_norm_labels(self, label, spec):
        assert parse_norm(label) == spec

    @given(
        grid=st.tuples(*[st.sampled_from([8, 10, 16, 32, 64])] * 3),
        params=st.builds(PhysicalParams, n_squared=st.floats(0.01, 100), eps_nu=st.floats(0, 10),
                         eps_kappa=st.floats(0, 10), damping_c=st.floats(0, 1), amplitude_A=st.floats(-100, 100),
                         forcing_m=st.integers(1, 4)),
        initial=st.builds(InitialSpec, preset=st.sampled_from(["single_mode", "random_smooth", "mg_steady"]),
                          amplitude=st.floats(0.1, 10), seed=st.integers(0, 2**31), kmax=st.integers(1, 8),
                          mode=st.tuples(st.integers(-4, 4), st.integers(-4, 4), st.integers(0, 4))),
        run=st.builds(RunSpec, dt=st.floats(1e-6, 1), t_end=st.floats(1e-3, 100),
                      sample_every=st.integers(1, 100), checkpoint_every=st.integers(0, 100),
                      track=st.lists(st.sampled_from([NormSpec(0, 2), NormSpec(0, 3), NormSpec(0.5, 4),
                                                      NormSpec(0, math.inf), NormSpec(1, 2, False)]),
                                     min_size=1, max_size=4, unique=True).map(tuple)),
        sweep=st.builds(SweepSpec, kappas=st.lists(st.floats(1e-6, 1), min_size=1, max_size=5).map(tuple)),
        mild=st.builds(MildSpec, T=st.floats(1e-3, 1), tol=st.floats(1e-14, 1e-3), p=st.floats(3.5, 10)),
        scan=st.builds(ScanSpec, case=st.sampled_from(["i", "ii", "iii", "iv"]), alpha=st.floats(0.5, 5)),
        threads=st.integers(0, 64),
    )
    def test_round_trip(self, grid, params, initial, run, sweep, mild, scan, threads):
        cfg = RunConfig(grid, params, initial, run, scan=scan, sweep=sweep, mild=mild, threads=threads,
                        output="runs/a b")
        assert parse_config(config_to_text(cfg)) == cfg


class TestCheckpoint:
    def test_bit_exact(self, tmp_path):
        g = Grid(8, 10, 12)
        th = random_smooth(g, 3)
        p = PhysicalParams(n_squared=1 / 3, eps_kappa=0.1, amplitude_A=-2.5, forcing_m=2)
        path = tmp_path / "a.mgsp"
        write_checkpoint(path, 0.1 + 0.2, th, p)
        t, th2, p2 = read_checkpoint(path)
        assert t == 0.1 + 0.2 and p2 == p
        assert th2.coeffs.tobytes() == th.coeffs.tobytes()
        assert os.path.getsize(path) == 76 + 8 * 10 * 7 * 16

    def test_header_layout(self, tmp_path):
        path = tmp_path / "a.mgsp"
        write_checkpoint(path, 2.0, random_smooth(Grid.cube(8), 0), PhysicalParams())
        raw = path.read_bytes()
        assert raw[:4] == b"MGSP"
        assert struct.unpack("<I3Id", raw[4:28]) == (1, 8, 8, 8, 2.0)

    @pytest.mark.parametrize("mutate", [
        lambda b: b"XXXX" + b[4:],
        lambda b: b[:4] + struct.pack("<I", 9) + b[8:],
        lambda b: b[:-16],
        lambda b: b[:40],
    ])
    def test_corruption_detected(self, tmp_path, mutate):
        path = tmp_path / "a.mgsp"
        write_checkpoint(path, 1.0, random_smooth(Grid.cube(8), 0), PhysicalParams())
        path.write_bytes(mutate(path.read_bytes()))
        with pytest.raises(CheckpointError):
            read_checkpoint(path)


SIM = """[grid]
n = 16
[params]
eps_nu = 1.0
eps_kappa = 0.1
[initial]
preset = single_mode
[run]
dt = 0.01
t_end = 0.2
sample_every = 5
track = L2, L3, W0.5_4
"""


class TestSimulate:
    def test_minimal_single_mode(self, tmp_path):
        rc, out = run_cli(tmp_path, SIM, "simulate")
        assert rc == EXIT_OK
        rows = read_csv(out / "series.csv")
        assert rows[0] == ["t", "norm_L2", "norm_L3", "norm_W0.5_4"]
        assert len(rows) == 1 + 5
        assert (out / "series.csv").read_bytes().count(b"\r\n") == len(rows)
        summary = json.loads((out / "summary.json").read_text())
        assert summary["invariants"]["l2_non_increasing"]["pass"]
        l2 = [float(r[1]) for r in rows[1:]]
        want = math.sqrt((2 * math.pi) ** 3 / 2) * np.exp(-0.1 * np.array([float(r[0]) for r in rows[1:]]))
        assert np.allclose(l2, want, rtol=1e-13)
        assert (out / "final.mgsp").exists() and (out / "plot.txt").exists()

    def test_odd_grid_rejected_before_run(self, tmp_path, capsys):
        rc, out = run_cli(tmp_path, SIM.replace("n = 16", "n1 = 16\nn2 = 15\nn3 = 16"), "simulate")
        assert rc == EXIT_CONFIG
        assert not out.exists()
        assert "n2" in capsys.readouterr().err

    def test_steady_state(self, tmp_path):
        text = SIM.replace("preset = single_mode", "preset = mg_steady").replace(
            "eps_kappa = 0.1", "eps_kappa = 0.1\namplitude_A = 10").replace("t_end = 0.2", "t_end = 1.0")
        rc, out = run_cli(tmp_path, text, "simulate")
        assert rc == EXIT_OK
        inv = json.loads((out / "summary.json").read_text())["invariants"]
        assert inv["steady_state_max_deviation"]["value"] <= 1e-12

    def test_reproducible(self, tmp_path):
        text = SIM.replace("preset = single_mode", "preset = random_smooth\nseed = 11")
        a = tmp_path / "a"
        b = tmp_path / "b"
        a.mkdir()
        b.mkdir()
        assert run_cli(a, text, "simulate")[0] == EXIT_OK
        assert run_cli(b, text, "simulate")[0] == EXIT_OK
        assert (a / "out" / "series.csv").read_bytes() == (b / "out" / "series.csv").read_bytes()
        assert (a / "out" / "final.mgsp").read_bytes() == (b / "out" / "final.mgsp").read_bytes()

    def test_checkpoints_and_restart(self, tmp_path):
        text = SIM.replace("preset = single_mode", "preset = random_smooth").replace(
            "sample_every = 5", "sample_every = 5\ncheckpoint_every = 7")
        rc, out = run_cli(tmp_path, text, "simulate")
        assert rc == EXIT_OK
        t_ck, _, _ = read_checkpoint(out / "checkpoint.mgsp")
        assert t_ck == pytest.approx(0.2)
        rows = read_csv(out / "series.csv")
        times = [float(r[0]) for r in rows[1:]]
        assert times == sorted(set(times)) and times[-1] == pytest.approx(0.2)
        restart = text.replace("preset = random_smooth", f"preset = from_checkpoint\ncheckpoint = {out / 'final.mgsp'}")
        sub = tmp_path / "r"
        sub.mkdir()
        rc, out2 = run_cli(sub, restart, "simulate")
        assert rc == EXIT_OK
        t2, _, _ = read_checkpoint(out2 / "final.mgsp")
        assert t2 == pytest.approx(0.4)

    def test_blowup_keeps_last_checkpoint(self, tmp_path):
        text = """[grid]
n = 16
[params]
eps_nu = 0
eps_kappa = 0
[initial]
preset = random_smooth
amplitude = 1e4
kmax = 5
[run]
dt = 0.05
t_end = 50
checkpoint_every = 1
sample_every = 1
"""
        rc, out = run_cli(tmp_path, text, "simulate")
        assert rc == EXIT_BLOWUP
        t, th, _ = read_checkpoint(out / "checkpoint.mgsp")
        assert np.all(np.isfinite(th.coeffs)) and t > 0
        assert "blow-up" in json.loads((out / "summary.json").read_text())["error"]
        assert not (out / "final.mgsp").exists()


EIG = """[params]
n_squared = 1
eps_nu = 0
eps_kappa = 0
amplitude_A = {A}
[eigen]
k1 = 1
k2 = 1
k1_max = {kmax}
k2_max = {kmax}
"""


class TestEigen:
    def test_benchmark_row(self, tmp_path):
        rc, out = run_cli(tmp_path, EIG.format(A=10, kmax=0), "eigen")
        assert rc == EXIT_OK
        rows = read_csv(out / "eigen.csv")
        assert rows[0] == EIGEN_COLUMNS
        r = dict(zip(rows[0], rows[1]))
        assert float(r["sigma_lower"]) == pytest.approx(0.4) and float(r["sigma_upper"]) == pytest.approx(5.0)
        assert 0.4 < float(r["sigma_star"]) < 5.0 and r["outcome"] == "unstable"
        assert float(r["residual"]) < 1e-12

    def test_zero_amplitude(self, tmp_path):
        text = EIG.format(A=0, kmax=0).replace("eps_kappa = 0", "eps_kappa = 0.1")
        rc, out = run_cli(tmp_path, text, "eigen")
        r = dict(zip(*read_csv(out / "eigen.csv")))
        assert rc == EXIT_OK and r["outcome"] == "no unstable real root" and r["sigma_star"] == "nan"

    def test_box_scan_sorted(self, tmp_path):
        rc, out = run_cli(tmp_path, EIG.format(A=10, kmax=8), "eigen")
        rows = read_csv(out / "eigen.csv")[1:]
        assert rc == EXIT_OK and len(rows) == 64
        sig = [float(r[5]) for r in rows]
        assert sig == sorted(sig, reverse=True)
        assert {(int(r[2]), int(r[3])) for r in rows} == {(a, b) for a in range(1, 9) for b in range(1, 9)}


def test_scan(tmp_path):
    text = "[params]\namplitude_A = 16\n[scan]\ncase = ii\nepsilons = 0.1, 0.01, 0.001\n"
    rc, out = run_cli(tmp_path, text, "scan")
    assert rc == EXIT_OK
    rows = read_csv(out / "scan.csv")
    assert len(rows) == 4 and rows[0][0] == "epsilon"
    data = json.loads((out / "scan.json").read_text())
    assert abs(data["fitted_exponent"] + 1) < 0.15 and data["case"] == "ii"


def test_kappa_sweep(tmp_path):
    text = """[grid]
n = 16
[initial]
preset = random_smooth
[sweep]
kappas = 0.1, 0.01, 0.001, 0.0001
t_end = 1
sample_times = 0.5
dt = 0.01
"""
    rc, out = run_cli(tmp_path, text, "kappa-sweep")
    assert rc == EXIT_OK
    data = json.loads((out / "sweep.json").read_text())
    diss = list(data["dissipation"].values())
    assert len(diss) == 4 and data["dissipation_decreasing"]
    assert all(a > b > 0 for a, b in zip(diss, diss[1:]))
    assert data["monotone"]


def test_mild_single_mode(tmp_path, capsys):
    text = "[grid]\nn = 16\n[params]\neps_kappa = 0.1\n[initial]\npreset = single_mode\n"
    rc, out = run_cli(tmp_path, text, "mild-solve")
    assert rc == EXIT_OK
    assert "converged in 1 iteration " in capsys.readouterr().out
    assert json.loads((out / "mild.json").read_text())["iterations"] == 1


def test_mild_divergence(tmp_path, capsys):
    text = ("[grid]\nn = 16\n[params]\neps_nu = 0.1\neps_kappa = 0.1\n[initial]\npreset = random_smooth\n"
            "amplitude = 30\nseed = 1\n[mild]\nmax_iter = 40\ntol = 1e-9\n")
    rc, out = run_cli(tmp_path, text, "mild-solve")
    assert rc == EXIT_FAIL
    assert "error" in json.loads((out / "mild.json").read_text())
    assert not (out / "mild_final.mgsp").exists()


def test_mild_needs_diffusion(tmp_path):
    text = "[grid]\nn = 16\n[params]\neps_kappa = 0\n"
    assert run_cli(tmp_path, text, "mild-solve")[0] == EXIT_CONFIG


class TestEntry:
    def test_print_defaults(self, capsys):
        assert main(["--print-defaults"]) == EXIT_OK
        assert parse_config(capsys.readouterr().out) == RunConfig()

    def test_missing_config_file(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.ini")]) == EXIT_CONFIG

    def test_command_needs_config(self):
        with pytest.raises(SystemExit):
            main(["simulate"])

    def test_threads_precedence(self, tmp_path, monkeypatch):
        before = get_workers()
        try:
            monkeypatch.setenv("MGSPECTRAL_THREADS", "3")
            run_cli(tmp_path, EIG.format(A=10, kmax=0), "eigen", "--threads", "1")
            assert get_workers() == 3
            monkeypatch.delenv("MGSPECTRAL_THREADS")
            run_cli(tmp_path, EIG.format(A=10, kmax=0), "eigen", "--threads", "2")
            assert get_workers() == 2
            run_cli(tmp_path, EIG.format(A=10, kmax=0) + "[output]\nthreads = 5\n", "eigen")
            assert get_workers() == 5
        finally:
            set_workers(before)
