"""Run configuration: sectioned ``key = value`` text, validated before anything runs.

Every section and key is optional; missing values take the defaults printed by
``mgspectral --print-defaults``. Unknown sections or keys are errors.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, fields, replace

from .multiplier import PhysicalParams
from .spectral import NormSpec

PRESETS = ("single_mode", "mg_steady", "mg_steady_plus_perturbation", "random_smooth", "from_checkpoint")
FORCINGS = ("auto", "none", "mg_steady")
CASES = ("i", "ii", "iii", "iv")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class InitialSpec:
    preset: str = "single_mode"
    mode: tuple[int, int, int] = (0, 0, 1)
    amplitude: float = 1.0
    seed: int = 0
    kmax: int = 4
    k1: int = 1
    k2: int = 1
    delta: float = 0.0  # 0 selects 1e-6 * A
    checkpoint: str = ""


@dataclass(frozen=True)
class RunSpec:
    dt: float = 1e-3
    t_end: float = 1.0
    sample_every: int = 10
    checkpoint_every: int = 0
    track: tuple[NormSpec, ...] = (NormSpec(0, 2), NormSpec(0, 3), NormSpec(0, math.inf))
    forcing: str = "auto"


@dataclass(frozen=True)
class EigenSpec:
    k1: int = 1
    k2: int = 1
    k1_max: int = 0
    k2_max: int = 0
    n_max: int = 64


@dataclass(frozen=True)
class ScanSpec:
    case: str = "ii"
    epsilons: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4)
    alpha: float = 2.0
    k1_max: int = 0
    k2_max: int = 0
    n_max: int = 64


@dataclass(frozen=True)
class SweepSpec:
    kappas: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4)
    t_end: float = 1.0
    sample_times: tuple[float, ...] = (0.5,)
    dt: float = 1e-2


@dataclass(frozen=True)
class MildSpec:
    T: float = 1.0
    tol: float = 1e-10
    max_iter: int = 50
    p: float = 4.0
    panels: int = 16
    order: int = 8


@dataclass(frozen=True)
class RunConfig:
    grid: tuple[int, int, int] = (32, 32, 32)
    params: PhysicalParams = PhysicalParams(eps_nu=1.0, eps_kappa=0.1)
    initial: InitialSpec = InitialSpec()
    run: RunSpec = RunSpec()
    eigen: EigenSpec = EigenSpec()
    scan: ScanSpec = ScanSpec()
    sweep: SweepSpec = SweepSpec()
    mild: MildSpec = MildSpec()
    output: str = "out"
    threads: int = 0  # 0 = all available cores

    def with_output(self, directory: str) -> RunConfig:
        return replace(self, output=directory)


# --- value codecs -------------------------------------------------------------------

_NORM_RE = re.compile(r"^(?:L(?P<lp>inf|[0-9.eE+-]+)|(?P<h>[WH])(?P<s>[0-9.eE+-]+)_(?P<p>inf|[0-9.eE+-]+))$")


def parse_norm(label: str) -> NormSpec:
    m = _NORM_RE.match(label.strip())
    if not m:
        raise ValueError(f"bad norm label {label!r}; use L<p>, W<s>_<p> or H<s>_<p>")
    if m.group("lp"):
        return NormSpec(0.0, float(m.group("lp")))
    return NormSpec(float(m.group("s")), float(m.group("p")), m.group("h") == "W")


def _norm_label(n: NormSpec) -> str:
    if n.s == 0 and not n.homogeneous:
        raise ValueError("inhomogeneous L^p has no separate label")
    return n.label


def _float(v: str) -> float:
    x = float(v)
    if not math.isfinite(x):
        raise ValueError("must be finite")
    return x


def _int(v: str) -> int:
    return int(v.strip())


def _floats(v: str) -> tuple[float, ...]:
    return tuple(_float(x) for x in v.split(",") if x.strip())


def _ints3(v: str) -> tuple[int, int, int]:
    parts = tuple(_int(x) for x in v.split(","))
    if len(parts) != 3:
        raise ValueError("need three comma-separated integers")
    return parts


def _choice(options):
    def parse(v: str) -> str:
        v = v.strip()
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return parse


_DECODE = {
    float: _float, int: _int, str: str.strip,
    tuple[float, ...]: _floats, tuple[int, int, int]: _ints3,
}


def _encode(v) -> str:
    if isinstance(v, float):
        return repr(v)  # shortest text that parses back to the same double
    if isinstance(v, tuple):
        if v and isinstance(v[0], NormSpec):
            return ", ".join(_norm_label(n) for n in v)
        return ", ".join(_encode(x) for x in v)
    return str(v)


# section name -> (dataclass, {key: parser}) ; parsers default from the annotation
_SECTIONS = {
    "initial": (InitialSpec, {"preset": _choice(PRESETS)}),
    "run": (RunSpec, {"forcing": _choice(FORCINGS),
                      "track": lambda v: tuple(parse_norm(x) for x in v.split(",") if x.strip())}),
    "eigen": (EigenSpec, {}),
    "scan": (ScanSpec, {"case": _choice(CASES)}),
    "sweep": (SweepSpec, {}),
    "mild": (MildSpec, {}),
}
_PARAM_KEYS = tuple(f.name for f in fields(PhysicalParams))
_TYPES = {"InitialSpec": {"preset": str, "mode": tuple[int, int, int], "amplitude": float, "seed": int,
                          "kmax": int, "k1": int, "k2": int, "delta": float, "checkpoint": str},
          "RunSpec": {"dt": float, "t_end": float, "sample_every": int, "checkpoint_every": int},
          "EigenSpec": {k: int for k in ("k1", "k2", "k1_max", "k2_max", "n_max")},
          "ScanSpec": {"epsilons": tuple[float, ...], "alpha": float, "k1_max": int, "k2_max": int,
                       "n_max": int},
          "SweepSpec": {"kappas": tuple[float, ...], "t_end": float, "sample_times": tuple[float, ...],
                        "dt": float},
          "MildSpec": {"T": float, "tol": float, "max_iter": int, "p": float, "panels": int, "order": int}}


def _line_of(text: str, section: str, key: str | None) -> int:
    cur = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            cur = line[1:-1].strip()
            if key is None and cur == section:
                return i
            continue
        if cur == section and key is not None and re.match(rf"^{re.escape(key)}\s*[=:]", line, re.I):
            return i
    return 0


class _Reader:
    def __init__(self, text: str, source: str):
        self.text, self.source = text, source
        self.cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        self.cp.optionxform = str
        try:
            self.cp.read_string(text, source=source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from None

    def fail(self, section: str, key: str | None, msg: str):
        line = _line_of(self.text, section, key)
        where = f"{self.source}:{line}" if line else self.source
        what = f"[{section}] {key}" if key else f"[{section}]"
        raise ConfigError(f"{where}: {what}: {msg}")

    def get(self, section: str, key: str, parse, default):
        if not self.cp.has_section(section) or not self.cp.has_option(section, key):
            return default
        raw = self.cp.get(section, key)
        try:
            return parse(raw)
        except (ValueError, TypeError) as exc:
            self.fail(section, key, f"invalid value {raw.strip()!r}: {exc}")

    def check_keys(self, section: str, allowed):
        if not self.cp.has_section(section):
            return
        for key in self.cp.options(section):
            if key not in allowed:
                self.fail(section, key, f"unknown key; expected one of {', '.join(allowed)}")


def _validate(cfg: RunConfig, r: _Reader) -> None:
    for name, n in zip(("n1", "n2", "n3"), cfg.grid):
        if n < 8 or n % 2:
            r.fail("grid", name, f"grid sizes must be even and >= 8, got {n}")
    i, run_, e, s, sw, mi = cfg.initial, cfg.run, cfg.eigen, cfg.scan, cfg.sweep, cfg.mild
    checks = [
        ("initial", "amplitude", i.amplitude != 0 or i.preset != "single_mode", "must be nonzero"),
        ("initial", "kmax", i.kmax >= 1, "must be >= 1"),
        ("initial", "seed", i.seed >= 0, "must be >= 0"),
        ("initial", "delta", i.delta >= 0, "must be >= 0"),
        ("initial", "checkpoint", i.preset != "from_checkpoint" or bool(i.checkpoint),
         "from_checkpoint needs a path"),
        ("run", "dt", run_.dt > 0, "must be > 0"),
        ("run", "t_end", run_.t_end > 0, "must be > 0"),
        ("run", "sample_every", run_.sample_every >= 1, "must be >= 1"),
        ("run", "checkpoint_every", run_.checkpoint_every >= 0, "must be >= 0"),
        ("run", "track", len(run_.track) >= 1, "track at least one norm"),
        ("eigen", "k1", e.k1 >= 0 and e.k2 >= 0 and e.k1 ** 2 + e.k2 ** 2 > 0, "need k1, k2 >= 0, not both 0"),
        ("eigen", "n_max", e.n_max >= max(16, 4 * cfg.params.forcing_m), "must be >= max(16, 4 m)"),
        ("eigen", "k1_max", e.k1_max >= 0 and e.k2_max >= 0, "must be >= 0"),
        ("scan", "epsilons", len(s.epsilons) >= 2 and all(x > 0 for x in s.epsilons)
         and all(a > b for a, b in zip(s.epsilons, s.epsilons[1:])),
         "need >= 2 positive, strictly decreasing values"),
        ("scan", "alpha", s.alpha > 0, "must be > 0"),
        ("scan", "n_max", s.n_max >= max(16, 4 * cfg.params.forcing_m), "must be >= max(16, 4 m)"),
        ("sweep", "kappas", len(sw.kappas) >= 1 and all(x > 0 for x in sw.kappas), "need positive values"),
        ("sweep", "dt", sw.dt > 0, "must be > 0"),
        ("sweep", "sample_times", all(0 < t <= sw.t_end for t in sw.sample_times) and sw.sample_times,
         "need values in (0, t_end]"),
        ("mild", "T", 0 < mi.T <= 1, "must lie in (0, 1]"),
        ("mild", "tol", mi.tol > 0, "must be > 0"),
        ("mild", "max_iter", mi.max_iter >= 1, "must be >= 1"),
        ("mild", "p", 3 < mi.p < math.inf, "must lie in (3, inf)"),
        ("mild", "panels", mi.panels >= 1 and mi.order >= 1, "must be >= 1"),
    ]
    for sec, key, ok, msg in checks:
        if not ok:
            r.fail(sec, key, msg)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    r = _Reader(text, source)
    known = {"grid", "params", "output", *_SECTIONS}
    for sec in r.cp.sections():
        if sec not in known:
            r.fail(sec, None, f"unknown section; expected one of {', '.join(sorted(known))}")
    d = RunConfig()
    r.check_keys("grid", ("n1", "n2", "n3", "n"))
    n = r.get("grid", "n", _int, None)
    base = (n, n, n) if n is not None else d.grid
    grid = tuple(r.get("grid", k, _int, base[j]) for j, k in enumerate(("n1", "n2", "n3")))

    r.check_keys("params", _PARAM_KEYS)
    pvals = {}
    for k in _PARAM_KEYS:
        pvals[k] = r.get("params", k, _int if k == "forcing_m" else _float, getattr(d.params, k))
    try:
        params = PhysicalParams(**pvals)
    except (ValueError, TypeError) as exc:
        key = next((k for k in _PARAM_KEYS if k in str(exc)), None)
        r.fail("params", key, str(exc))

    sections = {}
    for name, (cls, special) in _SECTIONS.items():
        default = getattr(d, name)
        allowed = tuple(f.name for f in fields(cls))
        r.check_keys(name, allowed)
        vals = {}
        for f in fields(cls):
            parse = special.get(f.name) or _DECODE[_TYPES[cls.__name__][f.name]]
            vals[f.name] = r.get(name, f.name, parse, getattr(default, f.name))
        sections[name] = cls(**vals)

    r.check_keys("output", ("directory", "threads"))
    out = r.get("output", "directory", str.strip, d.output)
    threads = r.get("output", "threads", _int, d.threads)
    if threads < 0:
        r.fail("output", "threads", "must be >= 0")
    cfg = RunConfig(grid, params, output=out, threads=threads, **sections)
    _validate(cfg, r)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        return parse_config(f.read(), str(path))


def config_to_text(cfg: RunConfig) -> str:
    lines = ["[grid]"]
    lines += [f"{k} = {v}" for k, v in zip(("n1", "n2", "n3"), cfg.grid)]
    lines += ["", "[params]"]
    lines += [f"{k} = {_encode(getattr(cfg.params, k))}" for k in _PARAM_KEYS]
    for name in _SECTIONS:
        sec = getattr(cfg, name)
        lines += ["", f"[{name}]"]
        lines += [f"{f.name} = {_encode(getattr(sec, f.name))}" for f in fields(sec)]
    lines += ["", "[output]", f"directory = {cfg.output}", f"threads = {cfg.threads}", ""]
    return "\n".join(lines)


def default_config_text() -> str:
    return config_to_text(RunConfig())
