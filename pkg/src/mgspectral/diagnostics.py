"""Rate fits, dissipation integrals, diffusivity sweeps and decay envelopes over norm series."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .evolve import ForcingSpec, SimState, run
from .multiplier import PhysicalParams
from .series import NormSeries, fmt, read_series_csv, write_series_csv
from .spectral import SpectralScalar, gradient_norm, spectral_l2

__all__ = ["fit_growth_rate", "dissipation_integral", "dissipation_series", "kappa_sweep_compare",
           "SweepRow", "SweepTable", "decay_envelope_check", "EnvelopeResult", "write_series_csv",
           "read_series_csv", "write_json"]


def fit_growth_rate(series: NormSeries, window: tuple[float, float] | None = None, return_r2: bool = False):
    """Least-squares slope of log(values) against t over the window."""
    s = series if window is None else series.window(*window)
    if len(s.times) < 8:
        raise ValueError(f"need at least 8 samples in the fit window, got {len(s.times)}")
    if np.any(s.values <= 0):
        raise ValueError("growth-rate fit needs strictly positive values")
    y = np.log(s.values)
    A = np.column_stack((s.times, np.ones_like(s.times)))
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    if not return_r2:
        return slope
    resid = y - A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss == 0 else 1.0 - float(resid @ resid) / ss
    return slope, r2


def dissipation_series(times, grad_sq, eps_kappa: float, label: str = "dissipation") -> NormSeries:
    """Pack eps_kappa ||grad theta||_2^2 samples as a series."""
    return NormSeries(times, eps_kappa * np.asarray(grad_sq, float), label=label)


def dissipation_integral(run_series: NormSeries, T: float | None = None, t0: float | None = None) -> float:
    """Trapezoidal integral of a sampled eps_kappa ||grad theta||_2^2 series over [t0, T]."""
    s = run_series
    t0 = s.times[0] if t0 is None else t0
    T = s.times[-1] if T is None else T
    w = s.window(t0, T)
    if len(w.times) < 64:
        raise ValueError("dissipation integral needs at least 64 samples in [0, T]")
    return float(np.trapezoid(w.values, w.times))


@dataclass(frozen=True)
class SweepRow:
    eps_kappa: float
    t: float
    distance: float
    dissipation: float


@dataclass
class SweepTable:
    rows: list[SweepRow]
    monotone: bool
    notes: list[str]

    def to_json(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "monotone": self.monotone, "notes": self.notes}

    def dissipation_by_kappa(self) -> dict[float, float]:
        return {r.eps_kappa: r.dissipation for r in self.rows}


def _run_sampled(theta0: SpectralScalar, params: PhysicalParams, T: float, dt: float, sample_times):
    """One run; returns fields at sample_times and the dense dissipation series."""
    want = sorted(float(t) for t in sample_times)
    snaps: dict[float, SpectralScalar] = {}
    times, gsq = [], []

    def observe(t, th):
        times.append(t)
        gsq.append(gradient_norm(th, 2.0) ** 2)
        for w in want:
            if abs(t - w) <= 1e-9 * max(1.0, T):
                snaps[w] = th

    run(SimState(0.0, theta0, params, ForcingSpec("none")), T, dt, observers=[observe])
    missing = [w for w in want if w not in snaps]
    if missing:
        raise ValueError(f"sample times {missing} are not multiples of dt")
    return snaps, dissipation_series(times, gsq, params.eps_kappa)


def kappa_sweep_compare(theta0: SpectralScalar, params_template: PhysicalParams, kappa_list, T: float,
                        sample_times, dt: float) -> SweepTable:
    """Distances ||theta^eps(t) - theta^0(t)||_2 to the eps_kappa = 0 run and the dissipation integrals.

    All runs share grid, dt and theta0. Non-monotone distances are reported in ``notes``
    rather than raised.
    """
    kappas = [float(k) for k in kappa_list]
    if any(k < 0 for k in kappas):
        raise ValueError("eps_kappa values must be >= 0")
    if any(t <= 0 or t > T for t in sample_times):
        raise ValueError("sample times must lie in (0, T]")
    ref, _ = _run_sampled(theta0, params_template.replace(eps_kappa=0.0), T, dt, sample_times)
    rows = []
    for k in kappas:
        snaps, diss = _run_sampled(theta0, params_template.replace(eps_kappa=k), T, dt, sample_times)
        D = dissipation_integral(diss, T)
        for t in sorted(snaps):
            rows.append(SweepRow(k, t, spectral_l2(snaps[t] - ref[t]), D))
    notes = []
    for t in sorted({r.t for r in rows}):
        sel = sorted((r for r in rows if r.t == t), key=lambda r: r.eps_kappa)
        for a, b in zip(sel, sel[1:]):
            if a.distance > b.distance:
                notes.append(f"t={fmt(t)}: distance at eps_kappa={fmt(a.eps_kappa)} exceeds "
                             f"that at {fmt(b.eps_kappa)}")
    return SweepTable(rows, not notes, notes)


@dataclass(frozen=True)
class EnvelopeResult:
    bound: float
    monotone_tail: bool


def decay_envelope_check(series: NormSeries, exponent: float, tail_start: float | None = None,
                         rtol: float = 1e-9) -> EnvelopeResult:
    """sup of values * t^(-exponent) over the tail, and whether it is non-increasing there.

    The tail defaults to the upper half of the series in log t. Increases smaller than
    ``rtol`` relative are treated as flat.
    """
    t, v = series.times, series.values
    if t[0] <= 0:
        t, v = t[1:], v[1:]
    if len(t) < 2 or t[-1] / t[0] < 10 * (1 - 1e-12):
        raise ValueError("envelope check needs at least one decade of t > 0")
    comp = v * t ** (-exponent)
    if tail_start is None:
        tail_start = math.sqrt(t[0] * t[-1])
    tail = comp[t >= tail_start]
    bound = float(comp.max())
    monotone = bool(np.all(np.diff(tail) <= rtol * np.abs(tail[:-1])))
    return EnvelopeResult(bound, monotone)


def write_json(path, payload: dict) -> None:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(type(o).__name__)

    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, default=default)
        f.write("\n")
