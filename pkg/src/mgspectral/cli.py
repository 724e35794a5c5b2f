"""Command line: mgspectral {simulate|eigen|scan|kappa-sweep|mild-solve|check} --config FILE."""
from __future__ import annotations

import argparse
import csv
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__, kernels
from .config import ConfigError, RunConfig, config_to_text, default_config_text, load_config
from .series import fmt
from .spectral import Grid, get_workers, set_workers

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3

EIGEN_COLUMNS = ["eps_nu", "eps_kappa", "k1", "k2", "sigma_lower", "sigma_star", "sigma_upper", "n_max",
                 "residual", "outcome"]


def _csv_writer(f):
    return csv.writer(f, lineterminator="\r\n")


def _num(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "nan" if not math.isfinite(x) else fmt(x)


def _summary_base(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "version": __version__, "backend": kernels.BACKEND, "workers": get_workers(),
            "python": platform.python_version(), "numpy": np.__version__, "config": config_to_text(cfg)}


# --- simulate ---------------------------------------------------------------------------------

def initial_state(cfg: RunConfig):
    from .checkpoint import read_checkpoint
    from .evolve import ForcingSpec, SimState, mg_steady, mg_steady_plus_perturbation, single_mode
    from .spectral import random_smooth

    init, p = cfg.initial, cfg.params
    grid = Grid(*cfg.grid)
    t0 = 0.0
    if init.preset == "single_mode":
        theta = single_mode(grid, init.mode, init.amplitude)
    elif init.preset == "mg_steady":
        theta = mg_steady(grid, p)
    elif init.preset == "mg_steady_plus_perturbation":
        theta = mg_steady_plus_perturbation(grid, p, init.k1, init.k2, init.delta or None)
    elif init.preset == "random_smooth":
        theta = random_smooth(grid, init.seed, init.amplitude, init.kmax)
    else:
        t0, theta, _ = read_checkpoint(init.checkpoint)
        if theta.grid != grid:
            raise ConfigError(f"checkpoint grid {theta.grid.shape} does not match [grid] {grid.shape}")
    forcing = cfg.run.forcing
    if forcing == "auto":
        forcing = "mg_steady" if init.preset.startswith("mg_steady") else "none"
    return SimState(t0, theta, p, ForcingSpec(forcing))


def cmd_simulate(cfg: RunConfig, out: str) -> int:
    from .checkpoint import write_checkpoint
    from .diagnostics import write_json
    from .evolve import BlowupError, run
    from .series import NormSeries, write_series_csv

    state = initial_state(cfg)
    theta0 = state.theta
    rc = cfg.run
    t_final = state.t + rc.t_end
    chunk = rc.checkpoint_every * rc.dt if rc.checkpoint_every else rc.t_end
    track = {s.label: s for s in rc.track}
    times: list[np.ndarray] = []
    values: dict[str, list[np.ndarray]] = {k: [] for k in track}
    ckpt = os.path.join(out, "checkpoint.mgsp")
    summary = _summary_base(cfg, "simulate")
    t_start = time.perf_counter()
    status = EXIT_OK
    try:
        while state.t < t_final - 1e-12 * max(1.0, t_final):
            stop = min(state.t + chunk, t_final)
            res = run(state, stop, rc.dt, track=track, sample_every=rc.sample_every)
            skip = 1 if times else 0  # chunk start duplicates the previous chunk end
            times.append(res.series[0].times[skip:])
            for s in res.series:
                values[s.label].append(s.values[skip:])
            state = res.state
            if rc.checkpoint_every:
                write_checkpoint(ckpt, state.t, state.theta, state.params)
    except BlowupError as exc:
        status = EXIT_BLOWUP
        summary["error"] = f"blow-up: {exc}"
        print(f"error: {exc}; last good checkpoint kept at {ckpt}", file=sys.stderr)
    wall = time.perf_counter() - t_start
    if times:
        t_all = np.concatenate(times)
        series = [NormSeries(t_all, np.concatenate(values[k]), track[k], k) for k in track]
        write_series_csv(os.path.join(out, "series.csv"), series)
        summary["invariants"] = _simulate_invariants(cfg, theta0, state, series)
    if status == EXIT_OK:
        write_checkpoint(os.path.join(out, "final.mgsp"), state.t, state.theta, state.params)
    summary.update({"t_final": state.t, "wall_seconds": wall, "cfl_warning": state.cfl_warning,
                    "seed": cfg.initial.seed})
    write_json(os.path.join(out, "summary.json"), summary)
    with open(os.path.join(out, "plot.txt"), "w", encoding="utf-8") as f:
        f.write("series.csv: x = t (linear), y = norm_* (log scale); one curve per column.\n")
    print(f"simulate: t = {fmt(state.t)}, wrote {out}")
    return status


def _simulate_invariants(cfg, theta0, state, series) -> dict:
    from .spectral import spectral_l2, to_physical
    inv = {}
    if cfg.initial.preset == "mg_steady":
        d = float(np.abs(to_physical(state.theta).samples - to_physical(theta0).samples).max())
        inv["steady_state_max_deviation"] = {"value": d, "pass": d <= 1e-12}
    if state.forcing.kind == "none":
        l2 = [s for s in series if s.spec is not None and s.spec.s == 0 and s.spec.p == 2]
        if l2:
            v = l2[0].values
            if cfg.params.eps_kappa == 0 and cfg.params.damping_c == 0:
                drift = float(np.abs(v / v[0] - 1).max()) if v[0] > 0 else 0.0
                inv["l2_relative_drift"] = {"value": drift, "pass": drift <= 1e-6}
            else:
                inc = float(np.diff(v).max()) if len(v) > 1 else 0.0
                inv["l2_non_increasing"] = {"value": inc, "pass": inc <= 0.0}
        inv["final_l2"] = {"value": spectral_l2(state.theta), "pass": True}
    return inv


# --- eigen / scan ----------------------------------------------------------------------------------

def eigen_row(k1: int, k2: int, cfg: RunConfig) -> list:
    from .stability import StabilityProblem, eigen_residual, sigma_bounds, sigma_star_cf
    p = cfg.params
    prob = StabilityProblem(k1, k2, p, cfg.eigen.n_max)
    b = sigma_bounds(prob)
    cf = sigma_star_cf(prob, b)
    if cf.found:
        outcome, res = "unstable", eigen_residual(prob, cf.sigma)
    else:
        outcome, res = "no unstable real root", float("nan")
    return [p.eps_nu, p.eps_kappa, k1, k2, b.lower, cf.sigma, b.upper, prob.n_max, res, outcome]


def cmd_eigen(cfg: RunConfig, out: str) -> int:
    e = cfg.eigen
    if e.k1_max or e.k2_max:
        pairs = [(a, b) for a in range(1, max(e.k1_max, 1) + 1) for b in range(1, max(e.k2_max, 1) + 1)]
    else:
        pairs = [(e.k1, e.k2)]
    rows = [eigen_row(a, b, cfg) for a, b in pairs]
    rows.sort(key=lambda r: (-r[5] if math.isfinite(r[5]) else math.inf, r[2], r[3]))
    path = os.path.join(out, "eigen.csv")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _csv_writer(f)
        w.writerow(EIGEN_COLUMNS)
        for r in rows:
            w.writerow([_num(x) if not isinstance(x, str) else x for x in r])
    for r in rows[:10]:
        s = f"{r[5]:.12g}" if math.isfinite(r[5]) else r[9]
        print(f"k=({r[2]},{r[3]})  lower={r[4]:.6g}  sigma*={s}  upper={r[6]:.6g}")
    print(f"eigen: {len(rows)} rows -> {path}")
    return EXIT_OK


def cmd_scan(cfg: RunConfig, out: str) -> int:
    import warnings

    from .diagnostics import write_json
    from .stability import BoxTooSmallWarning, case_params, regime_scan
    s = cfg.scan
    box = (s.k1_max, s.k2_max) if s.k1_max and s.k2_max else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", BoxTooSmallWarning)
        res = regime_scan(s.case, cfg.params, s.epsilons, box, s.alpha if s.case == "iv" else None, s.n_max)
    path = os.path.join(out, "scan.csv")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _csv_writer(f)
        w.writerow(["epsilon"] + EIGEN_COLUMNS[:8] + ["predicted_lower", "on_boundary"])
        for i, eps in enumerate(res.epsilon_values):
            p = case_params(s.case, cfg.params, float(eps), res.alpha)
            k1, k2 = res.argmax_k[i]
            w.writerow([_num(eps), _num(p.eps_nu), _num(p.eps_kappa), _num(k1), _num(k2),
                        _num(res.lower_values[i]), _num(res.sigma_star[i]), _num(res.upper_values[i]),
                        _num(s.n_max), _num(res.predicted_lower[i]), str(res.box_warnings[i]).lower()])
    write_json(os.path.join(out, "scan.json"), {**_summary_base(cfg, "scan"), "case": s.case,
                                                 "fitted_exponent": res.fitted_exponent,
                                                 "box_warnings": [str(c.message) for c in caught]})
    print(f"scan case {s.case}: fitted exponent {res.fitted_exponent:.4f} -> {path}")
    return EXIT_OK


# --- kappa sweep / mild ------------------------------------------------------------------------------

def cmd_kappa_sweep(cfg: RunConfig, out: str) -> int:
    from .diagnostics import kappa_sweep_compare, write_json
    sw = cfg.sweep
    theta0 = initial_state(cfg).theta
    table = kappa_sweep_compare(theta0, cfg.params, sw.kappas, sw.t_end, sw.sample_times, sw.dt)
    path = os.path.join(out, "sweep.csv")
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = _csv_writer(f)
        w.writerow(["eps_kappa", "t", "distance", "dissipation"])
        for r in table.rows:
            w.writerow([_num(r.eps_kappa), _num(r.t), _num(r.distance), _num(r.dissipation)])
    diss = [table.dissipation_by_kappa()[k] for k in sw.kappas]
    order = np.argsort(sw.kappas)[::-1]
    dmono = bool(np.all(np.diff(np.asarray(diss)[order]) < 0))
    write_json(os.path.join(out, "sweep.json"), {**_summary_base(cfg, "kappa-sweep"), **table.to_json(),
                                                  "dissipation": dict(zip(map(fmt, sw.kappas), diss)),
                                                  "dissipation_decreasing": dmono})
    for k, d in zip(sw.kappas, diss):
        print(f"eps_kappa={k:g}  dissipation={d:.6g}")
    for n in table.notes:
        print(f"note: {n}")
    print(f"kappa-sweep -> {path}")
    return EXIT_OK


def cmd_mild_solve(cfg: RunConfig, out: str) -> int:
    from .checkpoint import write_checkpoint
    from .diagnostics import write_json
    from .mild import MildDivergenceError, mild_residual, picard_solve
    mi = cfg.mild
    theta0 = initial_state(cfg).theta
    try:
        sol = picard_solve(theta0, mi.T, cfg.params, mi.max_iter, mi.tol, mi.p, mi.panels, mi.order)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MildDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        write_json(os.path.join(out, "mild.json"), {**_summary_base(cfg, "mild-solve"), "error": str(exc)})
        return EXIT_FAIL
    res = mild_residual(sol, theta0, cfg.params)
    word = "iteration" if sol.iterations == 1 else "iterations"
    print(f"converged in {sol.iterations} {word} (T = {fmt(sol.horizon_T)}, residual {res:.3e})")
    write_json(os.path.join(out, "mild.json"), {**_summary_base(cfg, "mild-solve"), "iterations": sol.iterations,
                                                 "horizon_T": sol.horizon_T, "halvings": sol.halvings,
                                                 "weighted_norm": sol.weighted_norm,
                                                 "theta1_weighted_norm": sol.theta1_norm, "residual": res,
                                                 "distances": sol.distances})
    write_checkpoint(os.path.join(out, "mild_final.mgsp"), sol.horizon_T, sol.final, cfg.params)
    return EXIT_OK


def cmd_check(cfg: RunConfig | None, out: str | None) -> int:
    from .checks import run_all
    print(f"backend: {kernels.BACKEND}, workers: {get_workers()}")
    t0 = time.perf_counter()
    verdicts = run_all(stream=sys.stdout)
    failed = [v for v in verdicts if not v.passed]
    print(f"{len(verdicts) - len(failed)}/{len(verdicts)} invariants passed in {time.perf_counter() - t0:.1f}s")
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "eigen": cmd_eigen, "scan": cmd_scan, "kappa-sweep": cmd_kappa_sweep,
            "mild-solve": cmd_mild_solve, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mgspectral", description="MG active scalar simulator and stability tools")
    ap.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("command", nargs="?", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="config file (sectioned key = value)")
    ap.add_argument("--out", help="output directory (overrides [output] directory)")
    ap.add_argument("--threads", type=int, help="worker threads; MGSPECTRAL_THREADS takes precedence")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(default_config_text())
        return EXIT_OK
    if args.command is None:
        ap.error("a command is required")
    cfg = None
    if args.config:
        try:
            cfg = load_config(args.config)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except OSError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    elif args.command != "check":
        ap.error(f"{args.command} needs --config")
    env = os.environ.get("MGSPECTRAL_THREADS")
    threads = int(env) if env else (args.threads or (cfg.threads if cfg else 0))
    set_workers(threads if threads > 0 else None)
    out = None
    if cfg is not None:
        out = args.out or cfg.output
        os.makedirs(out, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
