"""Fields on the periodic box [0, 2*pi]^3 and their Fourier representation.

Spectral coefficients are stored in the real-FFT layout ``(n1, n2, n3 // 2 + 1)``
with the forward transform normalised by ``1 / (n1 * n2 * n3)``, so that
``coeffs[k]`` is the Fourier coefficient of the trigonometric interpolant::

    f(x) = sum_k coeffs[k] * exp(i k . x)

Only the half space ``k3 >= 0`` is stored; the negative half follows from
Hermitian symmetry.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * math.pi

_workers: int | None = None


def set_workers(n: int | None) -> None:
    """Set the worker count used by every FFT in the package (None = library default)."""
    global _workers
    if n is not None and n < 1:
        raise ValueError("worker count must be >= 1")
    _workers = n


def get_workers() -> int:
    if _workers is not None:
        return _workers
    env = os.environ.get("MGSPECTRAL_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def rfft3(a: np.ndarray) -> np.ndarray:
    """Forward transform over the last three axes, normalised by 1/N."""
    return sfft.rfftn(a, axes=(-3, -2, -1), norm="forward", workers=get_workers())


def irfft3(a: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    return sfft.irfftn(a, s=shape, axes=(-3, -2, -1), norm="forward", workers=get_workers())


class MeanExcludedWarning(UserWarning):
    """A homogeneous norm was requested for a field with nonzero mean."""


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``n1 x n2 x n3`` points on [0, 2*pi)^3."""

    n1: int
    n2: int
    n3: int

    def __post_init__(self):
        for name in ("n1", "n2", "n3"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
                raise TypeError(f"{name} must be an integer, got {n!r}")
            if n < 8 or n % 2:
                raise ValueError(f"{name} must be even and >= 8, got {n}")

    @classmethod
    def cube(cls, n: int) -> Grid:
        return cls(n, n, n)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3 // 2 + 1)

    @property
    def size(self) -> int:
        return self.n1 * self.n2 * self.n3

    @property
    def cell_volume(self) -> float:
        return TWO_PI**3 / self.size

    @property
    def spacing(self) -> tuple[float, float, float]:
        return (TWO_PI / self.n1, TWO_PI / self.n2, TWO_PI / self.n3)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer wavenumbers as broadcastable float arrays in the rfft layout."""
        k1 = np.fft.fftfreq(self.n1, 1.0 / self.n1).reshape(-1, 1, 1)
        k2 = np.fft.fftfreq(self.n2, 1.0 / self.n2).reshape(1, -1, 1)
        k3 = np.arange(self.n3 // 2 + 1, dtype=float).reshape(1, 1, -1)
        return k1, k2, k3

    @cached_property
    def ksq(self) -> np.ndarray:
        k1, k2, k3 = self.wavenumbers
        return k1**2 + k2**2 + k3**2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True where a mode survives the 2/3 rule (|k_i| <= n_i / 3 on every axis)."""
        k1, k2, k3 = self.wavenumbers
        return (
            (np.abs(k1) <= self.n1 / 3.0)
            & (np.abs(k2) <= self.n2 / 3.0)
            & (np.abs(k3) <= self.n3 / 3.0)
        )

    @cached_property
    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        h1, h2, h3 = self.spacing
        x1 = (np.arange(self.n1) * h1).reshape(-1, 1, 1)
        x2 = (np.arange(self.n2) * h2).reshape(1, -1, 1)
        x3 = (np.arange(self.n3) * h3).reshape(1, 1, -1)
        return x1, x2, x3

    def __reduce__(self):
        return (Grid, (self.n1, self.n2, self.n3))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralScalar:
    """Real scalar field held by its Fourier coefficients (rfft layout, read-only)."""

    grid: Grid
    coeffs: np.ndarray
    zero_mean: bool = True

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.shape != self.grid.spectral_shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.spectral_shape}")
        c = _frozen(c.astype(np.complex128, copy=False))
        if self.zero_mean and c[0, 0, 0] != 0:
            raise ValueError("zero_mean field has nonzero k=0 coefficient")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid) -> SpectralScalar:
        return cls(grid, np.zeros(grid.spectral_shape, complex))

    @property
    def mean(self) -> float:
        return float(self.coeffs[0, 0, 0].real)

    def __add__(self, other: SpectralScalar) -> SpectralScalar:
        return SpectralScalar(self.grid, self.coeffs + other.coeffs, self.zero_mean and other.zero_mean)

    def __sub__(self, other: SpectralScalar) -> SpectralScalar:
        return SpectralScalar(self.grid, self.coeffs - other.coeffs, self.zero_mean and other.zero_mean)

    def __mul__(self, a: float) -> SpectralScalar:
        return SpectralScalar(self.grid, self.coeffs * a, self.zero_mean)

    __rmul__ = __mul__

    def __neg__(self) -> SpectralScalar:
        return self * -1.0


@dataclass(frozen=True, eq=False)
class PhysicalScalar:
    grid: Grid
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.shape != self.grid.shape:
            raise ValueError(f"sample shape {s.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(s)):
            raise ValueError("physical samples must be finite")
        object.__setattr__(self, "samples", _frozen(s))


@dataclass(frozen=True)
class NormSpec:
    """Derivative order ``s``, integrability ``p`` and homogeneous/inhomogeneous choice."""

    s: float = 0.0
    p: float = 2.0
    homogeneous: bool = True

    def __post_init__(self):
        if self.s < 0:
            raise ValueError("derivative order s must be >= 0")
        if not self.p >= 1:
            raise ValueError("integrability p must be >= 1")

    @property
    def label(self) -> str:
        p = "inf" if math.isinf(self.p) else f"{self.p:g}"
        if self.s == 0:
            return f"L{p}"
        return f"{'W' if self.homogeneous else 'H'}{self.s:g}_{p}"


def to_spectral(f: PhysicalScalar, zero_mean: bool | None = None) -> SpectralScalar:
    """Forward transform. ``zero_mean=None`` infers it from the data (mean exactly 0 after removal)."""
    if not np.all(np.isfinite(f.samples)):
        raise ValueError("physical samples must be finite")
    c = rfft3(f.samples)
    if zero_mean is None:
        zero_mean = c[0, 0, 0] == 0
    elif zero_mean:
        c[0, 0, 0] = 0.0
    return SpectralScalar(f.grid, c, bool(zero_mean))


def to_physical(g: SpectralScalar) -> PhysicalScalar:
    return PhysicalScalar(g.grid, irfft3(g.coeffs, g.grid.shape))


def from_function(grid: Grid, fn, zero_mean: bool = True) -> SpectralScalar:
    """Sample ``fn(x1, x2, x3)`` on the grid and transform."""
    x1, x2, x3 = grid.coordinates
    samples = np.broadcast_to(fn(x1, x2, x3), grid.shape)
    return to_spectral(PhysicalScalar(grid, samples), zero_mean=zero_mean)


def enforce_hermitian(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    """Project arbitrary half-spectrum coefficients onto those of a real field."""
    return rfft3(irfft3(coeffs, grid.shape))


def dealias(g: SpectralScalar) -> SpectralScalar:
    """2/3-rule truncation; the mean coefficient is never touched."""
    return SpectralScalar(g.grid, g.coeffs * g.grid.dealias_mask, g.zero_mean)


def discrete_lp(samples: np.ndarray, p: float, cell_volume: float) -> float:
    a = np.abs(samples)
    if math.isinf(p):
        return float(a.max()) if a.size else 0.0
    if p == 2:
        return float(math.sqrt(np.sum(a * a) * cell_volume))
    return float((np.sum(a**p) * cell_volume) ** (1.0 / p))


def sobolev_multiplier(grid: Grid, s: float, homogeneous: bool) -> np.ndarray:
    if homogeneous:
        m = grid.ksq ** (s / 2.0)
        m[0, 0, 0] = 0.0
        return m
    return (1.0 + grid.ksq) ** (s / 2.0)


def norm(f: SpectralScalar, spec: NormSpec = NormSpec()) -> float:
    """Discrete W^{s,p} / homogeneous W^{s,p} / L^p norm with cell weight (2*pi)^3 / N."""
    c = f.coeffs
    if spec.homogeneous and c[0, 0, 0] != 0:
        warnings.warn("homogeneous norm of a field with nonzero mean: mean excluded", MeanExcludedWarning,
                      stacklevel=2)
    if spec.s == 0 and not (spec.homogeneous and c[0, 0, 0] != 0):
        g = c
    else:
        g = c * sobolev_multiplier(f.grid, spec.s, spec.homogeneous)
    return discrete_lp(irfft3(g, f.grid.shape), spec.p, f.grid.cell_volume)


def spectral_l2(f: SpectralScalar) -> float:
    """L^2 norm via Parseval from the coefficients directly."""
    c = f.coeffs
    w = np.full(c.shape[-1], 2.0)
    w[0] = 1.0
    if f.grid.n3 % 2 == 0:
        w[-1] = 1.0
    return math.sqrt(TWO_PI**3 * float(np.sum(w * (c.real**2 + c.imag**2))))


def gradient(f: SpectralScalar) -> np.ndarray:
    """Physical samples of grad f, shape (3, n1, n2, n3)."""
    k1, k2, k3 = f.grid.wavenumbers
    c = f.coeffs
    stacked = np.stack(np.broadcast_arrays(1j * k1 * c, 1j * k2 * c, 1j * k3 * c))
    return irfft3(stacked, f.grid.shape)


def gradient_norm(f: SpectralScalar, p: float = 2.0) -> float:
    """L^p norm of the Euclidean length |grad f|."""
    g = gradient(f)
    return discrete_lp(np.sqrt(np.sum(g * g, axis=0)), p, f.grid.cell_volume)


def _bump(r: np.ndarray) -> np.ndarray:
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ri * ri))
    return out


def mollify(f: SpectralScalar, n: float) -> SpectralScalar:
    """Smooth radial low-pass at scale n: multiplier phi(|k| / n), phi(0) = 1, phi = 0 for r >= 1."""
    if n < 1:
        raise ValueError("mollifier scale must be >= 1")
    phi = _bump(np.sqrt(f.grid.ksq) / float(n))
    return SpectralScalar(f.grid, f.coeffs * phi, f.zero_mean)


def random_smooth(grid: Grid, seed: int, amplitude: float = 1.0, kmax: int = 4,
                  slope: float = 2.0) -> SpectralScalar:
    """Mean-zero random field with modes |k_i| <= kmax and power-law amplitudes ~|k|^-slope.

    Scaled so that the L^2 norm divided by sqrt(volume) (the RMS value) equals ``amplitude``.
    """
    rng = np.random.default_rng(seed)
    shape = grid.spectral_shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    k1, k2, k3 = grid.wavenumbers
    band = (np.abs(k1) <= kmax) & (np.abs(k2) <= kmax) & (k3 <= kmax) & grid.dealias_mask
    ksq = grid.ksq.copy()
    ksq[0, 0, 0] = 1.0
    c = c * band * ksq ** (-slope / 2.0)
    c[0, 0, 0] = 0.0
    c = enforce_hermitian(c, grid)
    c[0, 0, 0] = 0.0
    f = SpectralScalar(grid, c)
    rms = spectral_l2(f) / math.sqrt(TWO_PI**3)
    return f * (amplitude / rms) if rms > 0 else f
