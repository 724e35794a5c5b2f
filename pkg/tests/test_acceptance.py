"""The eleven acceptance criteria at their stated tolerances.

Each test prints one ``PASS``/``FAIL`` line (visible under ``pytest -v``) before asserting.
"""
import math
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest

from mgspectral.diagnostics import decay_envelope_check, dissipation_integral, kappa_sweep_compare
from mgspectral.evolve import ForcingSpec, SimState, mg_steady, run, single_mode
from mgspectral.mild import mild_residual, picard_solve
from mgspectral.multiplier import PhysicalParams, symbol, symbol_arrays
from mgspectral.spectral import Grid, NormSpec, random_smooth, spectral_l2, to_physical
from mgspectral.stability import (StabilityProblem, growth_rate_crosscheck, regime_scan, sigma_bounds,
                                  sigma_star_cf, sigma_star_matrix)


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


def test_01_symbol(capsys):
    start = time.perf_counter()
    r = np.arange(-16, 17, dtype=float)
    k1, k2, k3 = np.meshgrid(r, r, r, indexing="ij")
    worst_div, worst_plane = 0.0, 0.0
    for enu in (0.0, 0.1, 1.0):
        for nsq in (0.1, 1.0, 10.0):
            m1, m2, m3 = symbol_arrays(k1, k2, k3, PhysicalParams(n_squared=nsq, eps_nu=enu))
            mag = np.sqrt(m1**2 + m2**2 + m3**2) * np.sqrt(k1**2 + k2**2 + k3**2)
            div = np.abs(k1 * m1 + k2 * m2 + k3 * m3)
            on = mag > 0
            worst_div = max(worst_div, float((div[on] / mag[on]).max()))
            plane = k3 == 0
            worst_plane = max(worst_plane, float(np.abs(np.stack((m1, m2, m3))[:, plane]).max()))
    v = symbol((1, 1, 1), PhysicalParams(n_squared=1.0, eps_nu=1.0))
    bench = max(abs(a - b) for a, b in zip(v, (-7 / 103, -13 / 103, 20 / 103)))
    secs = time.perf_counter() - start
    ok = worst_div <= 1e-14 and worst_plane == 0.0 and bench <= 1e-15 and secs < 1.0
    report(capsys, 1, ok, f"k.M rel {worst_div:.1e}, k3=0 max {worst_plane:.1e}, "
                          f"benchmark err {bench:.1e}, {secs:.2f} s")


def test_02_smoothing(capsys):
    parts, ok = [], True
    for enu in (0.1, 1.0):
        p = PhysicalParams(eps_nu=enu)
        ratios = [enu * K * K * symbol((K, 0, 1), p).m3 for K in range(16, 65)]
        dev = [abs(1 - x) for x in ratios]
        mono = all(b <= a for a, b in zip(dev, dev[1:]))
        ok &= dev[-1] <= 0.1 and mono
        parts.append(f"eps_nu={enu}: ratio(64)={ratios[-1]:.4f} monotone={mono}")
    p0 = PhysicalParams(eps_nu=0.0)
    growth = symbol((64, round(math.sqrt(64)), 1), p0).m3 / symbol((16, round(math.sqrt(16)), 1), p0).m3
    ok &= growth >= 1.5
    report(capsys, 2, ok, ", ".join(parts) + f", inviscid growth {growth:.2f}")


def test_03_steady_state(capsys):
    g = Grid.cube(32)
    p = PhysicalParams(eps_nu=1.0, eps_kappa=0.1, amplitude_A=10.0)
    th = mg_steady(g, p)
    ref = to_physical(th).samples
    worst = []
    run(SimState(0.0, th, p, ForcingSpec("mg_steady")), 1.0, 0.01,
        observers=[lambda t, x: worst.append(float(np.abs(to_physical(x).samples - ref).max()))],
        sample_every=10)
    err = max(worst)
    report(capsys, 3, err <= 1e-12, f"max deviation over [0, 1] {err:.1e} ({len(worst)} samples)")


def test_04_conservation_and_monotonicity(capsys):
    g = Grid.cube(32)
    th = random_smooth(g, 7, amplitude=1.0)
    out = run(SimState(0.0, th, PhysicalParams(eps_nu=1.0, eps_kappa=0.0)), 1.0, 1e-3,
              track={"L2": spectral_l2}, sample_every=50)
    v = out.get("L2").values
    drift = float(np.abs(v / v[0] - 1).max())
    out = run(SimState(0.0, th, PhysicalParams(eps_nu=1.0, eps_kappa=0.1)), 2.0, 0.01,
              track={"L2": NormSpec(0, 2), "L3": NormSpec(0, 3)}, sample_every=1)
    rises = {}
    for lab in ("L2", "L3"):
        s = out.get(lab).values
        rises[lab] = float(np.max(np.diff(s) / s[:-1]))
    ok = drift <= 1e-6 and all(r <= 0 for r in rises.values())
    report(capsys, 4, ok, f"L2 drift {drift:.1e}; largest relative step change "
                          f"L2 {rises['L2']:.1e}, L3 {rises['L3']:.1e}")


def test_05_sandwich(capsys):
    start = time.perf_counter()
    p = PhysicalParams(n_squared=1.0, eps_nu=0.0, eps_kappa=0.0, amplitude_A=10.0, forcing_m=1)
    prob = StabilityProblem(1, 1, p, 64)
    b = sigma_bounds(prob)
    cf = sigma_star_cf(prob, b)
    mat = sigma_star_matrix(prob).sigma
    doubled = sigma_star_matrix(prob.with_n_max(128)).sigma
    rel = abs(cf.sigma - mat) / abs(mat)
    trunc = abs(doubled - mat) / abs(mat)
    secs = time.perf_counter() - start
    ok = (rel <= 1e-6 and abs(b.lower - 0.4) < 1e-12 and abs(b.upper - 5.0) < 1e-12
          and b.lower < cf.sigma < b.upper and trunc <= 1e-8 and secs < 1.0)
    report(capsys, 5, ok, f"sigma* {cf.sigma:.12f} in [{b.lower:g}, {b.upper:g}], CF vs matrix {rel:.1e}, "
                          f"doubling {trunc:.1e}, {secs:.2f} s")


def test_06_regimes(capsys):
    start = time.perf_counter()
    tmpl = PhysicalParams(amplitude_A=16.0)
    ii = regime_scan("ii", tmpl, [1e-1, 1e-2, 1e-3, 1e-4])
    iii = regime_scan("iii", tmpl, [1e-2, 1e-3, 1e-4])
    iii_full = regime_scan("iii", tmpl, [1e-1, 1e-2, 1e-3, 1e-4])
    iv = regime_scan("iv", tmpl, [1e-2, 1e-3, 1e-4], alpha=2.0)
    i = regime_scan("i", tmpl.replace(amplitude_A=10.0), [1 / 4, 1 / 8, 1 / 16, 1 / 32])
    ratios = i.sigma_star[1:] / i.sigma_star[:-1]
    checks = {
        "ii": bool(np.all(ii.lower_values > 0)) and abs(ii.fitted_exponent + 1) <= 0.15,
        "iii": abs(iii.fitted_exponent + 1 / 3) <= 0.07,
        "iv": bool(np.all(iv.predicted_lower < 0)),
        "i": bool(np.all((ratios >= 1.5) & (ratios <= 2.5))),
    }
    secs = time.perf_counter() - start
    detail = (f"ii {ii.fitted_exponent:.3f}; iii {iii.fitted_exponent:.3f} over 1e-2..1e-4 "
              f"({iii_full.fitted_exponent:.3f} with 1e-1 included); iv alpha=2 bound at predicted maximiser "
              f"max {iv.predicted_lower.max():.3g} (box maximum {iv.lower_values.min():.3g}..{iv.lower_values.max():.3g} "
              f"at k2 {sorted(set(iv.argmax_k[:, 1].tolist()))}); i ratios {np.round(ratios, 2).tolist()}; {secs:.1f} s")
    report(capsys, 6, all(checks.values()) and secs < 60, detail)


def test_07_linear_vs_nonlinear(capsys):
    p = PhysicalParams(n_squared=1.0, eps_nu=0.01, eps_kappa=0.01, amplitude_A=10.0, forcing_m=1)
    r = growth_rate_crosscheck(StabilityProblem(1, 1, p, 64), Grid.cube(64), 0.02, (0.5, 3.0))
    report(capsys, 7, r.rel_error <= 0.05,
           f"fitted {r.rate:.6f} vs sigma* {r.sigma_star:.6f}, rel err {r.rel_error:.1e}, "
           f"window {r.window}, r^2 {r.r_squared:.8f}")


def test_08_mild(capsys):
    g = Grid.cube(32)
    p = PhysicalParams(eps_nu=1.0, eps_kappa=0.1)
    th = random_smooth(g, 3, amplitude=0.5)
    tol = 1e-8
    sol = picard_solve(th, 1.0, p, tol=tol)
    res = mild_residual(sol, th, p)
    out = run(SimState(0.0, th, p), sol.horizon_T, 5e-3)
    rel = spectral_l2(out.state.theta - sol.final) / spectral_l2(sol.final)
    one = single_mode(g, (0, 0, 1))
    single = picard_solve(one, 1.0, p, tol=tol)
    ok = sol.horizon_T <= 1.0 and rel <= 1e-3 and res <= 10 * tol and single.iterations == 1
    report(capsys, 8, ok, f"T={sol.horizon_T:g}, rel L2 vs stepper {rel:.1e}, residual {res:.1e} "
                          f"(tol {tol:g}), {sol.iterations} iterations; single mode {single.iterations} correction")


def test_09_decay_envelopes(capsys):
    g = Grid.cube(32)
    specs = {"Linf": (NormSpec(0, math.inf), -0.5)}
    for s, q in ((0, 4), (0.5, 4), (0.9, 6)):
        specs[f"W{s}_{q}"] = (NormSpec(s, q), -(s / 2 + 0.5 - 1.5 / q))
    out = run(SimState(0.0, random_smooth(g, 3), PhysicalParams(eps_kappa=0.1)), 60.0, 0.05,
              track={k: v[0] for k, v in specs.items()}, sample_every=4)
    parts, ok = [], True
    for lab, (_, expo) in specs.items():
        # the tail opens at the diffusive time 1 / eps_kappa
        r = decay_envelope_check(out.get(lab), expo, tail_start=10.0)
        good = math.isfinite(r.bound) and r.monotone_tail
        ok &= good
        parts.append(f"{lab} t^{-expo:.3f} bound {r.bound:.3g} tail {'non-increasing' if r.monotone_tail else 'RISES'}")
    report(capsys, 9, ok, "; ".join(parts))


def test_10_vanishing_diffusivity(capsys):
    g = Grid.cube(32)
    kappas = [1e-1, 1e-2, 1e-3, 1e-4]
    table = kappa_sweep_compare(single_mode(g, (0, 0, 1)), PhysicalParams(), kappas, 1.0, [0.5], 1 / 256)
    d = table.dissipation_by_kappa()
    closed = {k: (2 * math.pi) ** 3 / 2 * (1 - math.exp(-2 * k)) / 2 for k in kappas}
    single_err = max(abs(d[k] - closed[k]) / closed[k] for k in kappas)
    table = kappa_sweep_compare(random_smooth(g, 5), PhysicalParams(), kappas, 1.0, [0.5], 0.01)
    d = table.dissipation_by_kappa()
    vals = [d[k] for k in kappas]
    decreasing = all(a > b > 0 for a, b in zip(vals, vals[1:]))
    dist = {r.eps_kappa: r.distance for r in table.rows}
    ok = single_err <= 1e-6 and decreasing and table.monotone
    report(capsys, 10, ok, f"single-mode closed form rel err {single_err:.1e}; dissipation "
                           f"{[f'{v:.3g}' for v in vals]}; distances at t=0.5 "
                           f"{[f'{dist[k]:.3g}' for k in kappas]}")


def test_11_check_command(capsys):
    exe = shutil.which("mgspectral")
    cmd = [exe, "check"] if exe else [sys.executable, "-c", "import sys; from mgspectral.cli import main; "
                                                            "sys.exit(main(['check']))"]
    start = time.perf_counter()
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=600)
    secs = time.perf_counter() - start
    failed = [ln for ln in proc.stdout.splitlines() if ln.startswith("FAIL")]
    ok = proc.returncode == 0 and secs < 120 and not failed
    report(capsys, 11, ok, f"exit {proc.returncode} in {secs:.1f} s, {len(proc.stdout.splitlines())} lines"
                           + (f", failures {failed}" if failed else ""))
