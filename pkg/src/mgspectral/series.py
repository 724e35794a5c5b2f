"""Time series of scalar diagnostics and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .spectral import NormSpec


def fmt(x: float) -> str:
    """17 significant digits: round-trips every double."""
    return f"{float(x):.17g}"


@dataclass
class NormSeries:
    times: np.ndarray
    values: np.ndarray
    spec: NormSpec | None = None
    label: str = ""

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be aligned 1-d arrays")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("norm values must be nonnegative")

    def window(self, t_a: float, t_b: float) -> NormSeries:
        sel = (self.times >= t_a) & (self.times <= t_b)
        return NormSeries(self.times[sel], self.values[sel], self.spec, self.label)


@dataclass
class SeriesRecorder:
    """Accumulates samples for several labelled diagnostics."""

    labels: list[str]
    specs: dict[str, NormSpec | None] = field(default_factory=dict)
    times: list[float] = field(default_factory=list)
    rows: list[list[float]] = field(default_factory=list)

    def add(self, t: float, values: list[float]) -> None:
        self.times.append(float(t))
        self.rows.append([float(v) for v in values])

    def series(self) -> list[NormSeries]:
        data = np.array(self.rows, dtype=float).reshape(len(self.times), len(self.labels))
        return [NormSeries(np.array(self.times), data[:, i], self.specs.get(lab), lab)
                for i, lab in enumerate(self.labels)]


def write_series_csv(path_or_buf, series: list[NormSeries]) -> None:
    if not series:
        raise ValueError("no series to write")
    times = series[0].times
    for s in series[1:]:
        if not np.array_equal(s.times, times):
            raise ValueError("series must share a time axis")
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    f = open(path_or_buf, "w", newline="", encoding="utf-8") if own else path_or_buf
    try:
        w = csv.writer(f, lineterminator="\r\n")
        w.writerow(["t"] + [f"norm_{s.label}" for s in series])
        for i, t in enumerate(times):
            w.writerow([fmt(t)] + [fmt(s.values[i]) for s in series])
    finally:
        if own:
            f.close()


def read_series_csv(path_or_text) -> list[NormSeries]:
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        f = io.StringIO(path_or_text)
    else:
        f = open(path_or_text, newline="", encoding="utf-8")
    with f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    if not header or header[0] != "t":
        raise ValueError("series CSV must start with a 't' column")
    data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(header))
    out = []
    for j, name in enumerate(header[1:], start=1):
        label = name[5:] if name.startswith("norm_") else name
        out.append(NormSeries(data[:, 0], data[:, j], None, label))
    return out
