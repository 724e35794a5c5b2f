"""Invariant suite run by ``mgspectral check``: small fixed instances, one verdict per property."""
from __future__ import annotations

import io
import math
import os
import tempfile
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .multiplier import PhysicalParams, smoothing_profile, symbol, symbol_arrays, viscous_ratio
from .spectral import (Grid, NormSpec, PhysicalScalar, SpectralScalar, norm, random_smooth, spectral_l2,
                       to_physical, to_spectral)


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str
    seconds: float


_CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = []


def check(name: str):
    def deco(fn):
        _CHECKS.append((name, fn))
        return fn
    return deco


def names() -> list[str]:
    return [n for n, _ in _CHECKS]


# --- spectral core -------------------------------------------------------------------------

@check("spectral: round trip and Parseval")
def _roundtrip():
    g = Grid.cube(16)
    f = random_smooth(g, 11)
    back = to_spectral(to_physical(f))
    err = float(np.abs(back.coeffs - f.coeffs).max())
    l2a, l2b = norm(f, NormSpec(0, 2)), spectral_l2(f)
    rel = abs(l2a - l2b) / l2b
    return err < 1e-14 and rel < 1e-13, f"coeff err {err:.1e}, Parseval rel {rel:.1e}"


@check("spectral: real transform of real data")
def _real():
    g = Grid.cube(16)
    rng = np.random.default_rng(0)
    s = rng.standard_normal(g.shape)
    s -= s.mean()
    f = to_spectral(PhysicalScalar(g, s))
    err = float(np.abs(to_physical(f).samples - s).max())
    return err < 1e-13, f"max err {err:.1e}"


# --- multiplier ----------------------------------------------------------------------------------

@check("multiplier: divergence-free and zero on k3 = 0 (|k_i| <= 16)")
def _divfree():
    r = np.arange(-16, 17, dtype=float)
    k1, k2, k3 = np.meshgrid(r, r, r, indexing="ij")
    worst = 0.0
    for p in (PhysicalParams(eps_nu=1.0), PhysicalParams(n_squared=2.5, eps_nu=0.0)):
        m = symbol_arrays(k1, k2, k3, p)
        dot = k1 * m[0] + k2 * m[1] + k3 * m[2]
        scale = np.sqrt(k1**2 + k2**2 + k3**2) * np.sqrt(m[0] ** 2 + m[1] ** 2 + m[2] ** 2)
        nz = scale > 0
        worst = max(worst, float((np.abs(dot[nz]) / scale[nz]).max()))
        plane = k3 == 0
        if any(np.any(c[plane] != 0) for c in m):
            return False, "nonzero symbol on k3 = 0"
    return worst <= 1e-14, f"max relative |k.M| {worst:.1e}"


@check("multiplier: benchmark value at (1,1,1)")
def _bench():
    v = symbol((1, 1, 1), PhysicalParams(n_squared=1.0, eps_nu=1.0))
    want = (-7 / 103, -13 / 103, 20 / 103)
    err = max(abs(a - b) for a, b in zip(v, want))
    return err <= 1e-15, f"max err {err:.1e}"


@check("multiplier: two-order smoothing and inviscid growth")
def _smoothing():
    ok, parts = True, []
    for enu in (0.1, 1.0):
        p = PhysicalParams(eps_nu=enu)
        vals = [viscous_ratio(p, K) for K in range(16, 65)]
        mono = all(abs(1 - b) <= abs(1 - a) for a, b in zip(vals, vals[1:]))
        ok &= abs(vals[-1] - 1) <= 0.1 and mono
        parts.append(f"eps_nu={enu}: ratio(64)={vals[-1]:.4f}")
    rows = smoothing_profile(PhysicalParams(eps_nu=0.0), 64)
    growth = rows[63].scaled / rows[15].scaled
    ok &= growth >= 1.5
    parts.append(f"inviscid growth 16->64 {growth:.2f}")
    return ok, ", ".join(parts)


# --- evolve --------------------------------------------------------------------------------------

@check("evolve: steady state A sin(m x3) invariant over [0, 1] (32^3)")
def _steady():
    from .evolve import ForcingSpec, SimState, mg_steady, run
    g = Grid.cube(32)
    p = PhysicalParams(eps_nu=1.0, eps_kappa=0.1, amplitude_A=10.0)
    th = mg_steady(g, p)
    out = run(SimState(0.0, th, p, ForcingSpec("mg_steady")), 1.0, 0.01)
    err = float(np.abs(to_physical(out.state.theta).samples - to_physical(th).samples).max())
    return err <= 1e-12, f"max deviation {err:.1e}"


@check("evolve: L2 conserved without diffusion (32^3, dt = 1e-3)")
def _conserve():
    from .evolve import SimState, run
    g = Grid.cube(32)
    p = PhysicalParams(eps_nu=1.0, eps_kappa=0.0)
    th = random_smooth(g, 7, amplitude=1.0)
    out = run(SimState(0.0, th, p), 1.0, 1e-3, track={"L2": spectral_l2}, sample_every=100)
    v = out.get("L2").values
    rel = float(np.abs(v / v[0] - 1).max())
    return rel <= 1e-6, f"max relative drift {rel:.1e}"


@check("evolve: L2 and L3 non-increasing with diffusion (32^3)")
def _monotone():
    from .evolve import SimState, run
    g = Grid.cube(32)
    p = PhysicalParams(eps_nu=1.0, eps_kappa=0.1)
    th = random_smooth(g, 8, amplitude=1.0)
    out = run(SimState(0.0, th, p), 1.0, 1e-2, track={"L2": NormSpec(0, 2), "L3": NormSpec(0, 3)})
    worst = max(float(np.diff(out.get(k).values).max()) for k in ("L2", "L3"))
    return worst <= 0.0, f"largest increment {worst:.1e}"


# --- stability -------------------------------------------------------------------------------------

@check("stability: benchmark sigma* inside [0.4, 5.0], CF equals matrix")
def _sandwich():
    from .stability import StabilityProblem, sigma_bounds, sigma_star_cf, sigma_star_matrix
    p = PhysicalParams(n_squared=1.0, eps_nu=0.0, eps_kappa=0.0, amplitude_A=10.0, forcing_m=1)
    prob = StabilityProblem(1, 1, p, 64)
    b = sigma_bounds(prob)
    cf = sigma_star_cf(prob)
    mat = sigma_star_matrix(prob)
    rel = abs(cf.sigma - mat.sigma) / mat.sigma
    ok = (abs(b.lower - 0.4) < 1e-12 and abs(b.upper - 5.0) < 1e-12 and b.lower < cf.sigma < b.upper
          and rel <= 1e-6 and mat.truncation_change <= 1e-8)
    return ok, f"sigma*={cf.sigma:.12g}, rel diff {rel:.1e}, truncation {mat.truncation_change:.1e}"


@check("stability: ladder satisfies the linearised equation (Galerkin residual)")
def _galerkin():
    from .stability import StabilityProblem, galerkin_residual, sigma_star_matrix
    worst = 0.0
    for m in (1, 2, 3):
        p = PhysicalParams(eps_nu=0.01, eps_kappa=0.01, amplitude_A=10.0, forcing_m=m)
        prob = StabilityProblem(2, 1, p, 16)
        mc = sigma_star_matrix(prob, check_truncation=False)
        worst = max(worst, galerkin_residual(prob, mc.sigma, mc.c) / max(1.0, abs(mc.sigma)))
    return worst <= 1e-12, f"max residual {worst:.1e}"


@check("stability: chain decouples from other residue classes")
def _classes():
    from .stability import StabilityProblem, assemble_ladder, residue_classes
    p = PhysicalParams(eps_nu=0.01, eps_kappa=0.01, amplitude_A=10.0, forcing_m=3)
    L = assemble_ladder(StabilityProblem(1, 2, p, 24))
    cls = residue_classes(24, 3)
    leak = 0.0
    for a in cls:
        rest = [j for j in range(1, 25) if j not in a]
        leak = max(leak, float(np.abs(L[np.ix_(np.array(a) - 1, np.array(rest) - 1)]).max()))
    return leak == 0.0, f"{len(cls)} classes, max cross entry {leak:.1e}"


# --- mild ------------------------------------------------------------------------------------------

@check("mild: single mode converges in one correction")
def _mild_single():
    from .evolve import single_mode
    from .mild import mild_residual, picard_solve
    g = Grid.cube(16)
    p = PhysicalParams(eps_nu=1.0, eps_kappa=1.0)
    th = single_mode(g)
    sol = picard_solve(th, 1.0, p, tol=1e-10)
    res = mild_residual(sol, th, p)
    want = math.exp(-1.0) * spectral_l2(th)
    err = abs(spectral_l2(sol.final) - want) / want
    return sol.iterations == 1 and res <= 1e-10 and err < 1e-14, \
        f"iterations {sol.iterations}, residual {res:.1e}, heat-flow err {err:.1e}"


@check("mild: Picard solution matches the time stepper (32^3)")
def _mild_match():
    from .evolve import SimState, run
    from .mild import mild_residual, picard_solve
    g = Grid.cube(32)
    p = PhysicalParams(eps_nu=1.0, eps_kappa=0.1)
    th = random_smooth(g, 3, amplitude=0.5)
    tol = 1e-8
    sol = picard_solve(th, 1.0, p, tol=tol)
    res = mild_residual(sol, th, p)
    out = run(SimState(0.0, th, p), sol.horizon_T, 5e-3)
    rel = spectral_l2(out.state.theta - sol.final) / spectral_l2(sol.final)
    return rel <= 1e-3 and res <= 10 * tol and sol.weighted_norm <= 2 * sol.theta1_norm, \
        f"T={sol.horizon_T:g}, rel L2 {rel:.1e}, residual {res:.1e}, iterations {sol.iterations}"


@check("mild: B is bilinear")
def _bilinear():
    from .mild import TimeQuadrature, bilinear_B
    g = Grid.cube(16)
    p = PhysicalParams(eps_nu=1.0, eps_kappa=0.1)
    q = TimeQuadrature(0.5, panels=4, order=4)
    n = len(q.nodes)
    f = [random_smooth(g, s) for s in (1, 2, 3)]
    phi, chi, psi = ([x] * n for x in f)
    lhs = bilinear_B([a * 2.0 + b * -0.5 for a, b in zip(phi, chi)], psi, q, p, t=0.5)
    rhs = bilinear_B(phi, psi, q, p, t=0.5) * 2.0 + bilinear_B(chi, psi, q, p, t=0.5) * -0.5
    rel = spectral_l2(lhs - rhs) / spectral_l2(lhs)
    return rel <= 1e-12, f"relative defect {rel:.1e}"


# --- diagnostics and persistence --------------------------------------------------------------------

@check("diagnostics: growth fit exact on exponentials")
def _fit():
    from .diagnostics import fit_growth_rate
    from .series import NormSeries
    t = np.linspace(0, 5, 41)
    s = fit_growth_rate(NormSeries(t, 3.0 * np.exp(0.4 * t)))
    return abs(s - 0.4) <= 1e-13, f"slope {s:.15g}"


@check("diagnostics: single-mode dissipation integral closed form")
def _dissipation():
    from .diagnostics import dissipation_integral, dissipation_series
    from .evolve import SimState, run, single_mode
    from .spectral import gradient_norm
    g = Grid.cube(16)
    k = 0.1
    p = PhysicalParams(eps_nu=1.0, eps_kappa=k)
    out = run(SimState(0.0, single_mode(g), p), 1.0, 1.0 / 256,
              track={"g2": lambda th: gradient_norm(th, 2.0) ** 2})
    s = out.get("g2")
    D = dissipation_integral(dissipation_series(s.times, s.values, k), 1.0)
    want = (2 * math.pi) ** 3 / 2 * (1 - math.exp(-2 * k)) / 2
    rel = abs(D - want) / want
    return rel <= 1e-6, f"relative error {rel:.1e}"


@check("cli: checkpoint round trip is bit-exact")
def _checkpoint():
    from .checkpoint import read_checkpoint, write_checkpoint
    g = Grid(8, 10, 12)
    f = random_smooth(g, 4)
    p = PhysicalParams(n_squared=2.0, eps_nu=0.3, eps_kappa=0.01, amplitude_A=10.0, forcing_m=2)
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "c.mgsp")
        write_checkpoint(path, 0.125, f, p)
        t, f2, p2 = read_checkpoint(path)
    same = t == 0.125 and p2 == p and f2.coeffs.tobytes() == f.coeffs.tobytes()
    return same, "identical" if same else "mismatch"


@check("cli: config parse -> serialize -> parse is identity")
def _config():
    from .config import config_to_text, default_config_text, parse_config
    c = parse_config(default_config_text())
    c2 = parse_config(config_to_text(c))
    return c == c2, "identical" if c == c2 else "mismatch"


@check("cli: series CSV round trip")
def _csv():
    from .series import NormSeries, read_series_csv, write_series_csv
    s = NormSeries(np.array([0.0, 0.1, 0.30000000000000004]), np.array([1.0, 1 / 3, 2 / 7]), label="L2")
    buf = io.StringIO()
    write_series_csv(buf, [s])
    back = read_series_csv(buf.getvalue())[0]
    ok = np.array_equal(back.times, s.times) and np.array_equal(back.values, s.values)
    return ok, "identical" if ok else "mismatch"


def run_all(selected: list[str] | None = None, stream=None) -> list[Verdict]:
    out = []
    for name, fn in _CHECKS:
        if selected and not any(s in name for s in selected):
            continue
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed invariant, reported not raised
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        v = Verdict(name, bool(ok), detail, time.perf_counter() - t0)
        out.append(v)
        if stream is not None:
            print(f"{'PASS' if v.passed else 'FAIL'}  {v.seconds:6.2f}s  {v.name}  [{v.detail}]", file=stream,
                  flush=True)
    return out
