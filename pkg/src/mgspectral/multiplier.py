"""The magneto-geostrophic constitutive multiplier u = M[theta] and the heat semigroup symbol."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from . import kernels
from .spectral import Grid, SpectralScalar, irfft3


@dataclass(frozen=True)
class PhysicalParams:
    """Model constants.

    n_squared     inverse Elsasser number N^2 (> 0)
    eps_nu        viscosity parameter
    eps_kappa     thermal diffusivity
    damping_c     linear damping rate c in d/dt theta = ... - c theta
    amplitude_A   amplitude of the steady state A sin(m x3)
    forcing_m     vertical wavenumber m of the steady state
    """

    n_squared: float = 1.0
    eps_nu: float = 1.0
    eps_kappa: float = 0.0
    damping_c: float = 0.0
    amplitude_A: float = 0.0
    forcing_m: int = 1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float, np.integer, np.floating)):
                raise TypeError(f"{f.name} must be numeric, got {v!r}")
            if not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite")
        if not self.n_squared > 0:
            raise ValueError("n_squared must be > 0")
        for name in ("eps_nu", "eps_kappa", "damping_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if int(self.forcing_m) != self.forcing_m or self.forcing_m < 1:
            raise ValueError("forcing_m must be an integer >= 1")
        object.__setattr__(self, "forcing_m", int(self.forcing_m))
        for name in ("n_squared", "eps_nu", "eps_kappa", "damping_c", "amplitude_A"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def replace(self, **changes) -> PhysicalParams:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return PhysicalParams(**d)

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(float(getattr(self, f.name)) for f in fields(self))


class SymbolValue(NamedTuple):
    m1: float
    m2: float
    m3: float


def symbol(k, params: PhysicalParams) -> SymbolValue:
    """Components of the multiplier at one integer wavevector; zero on the plane k3 = 0."""
    k1, k2, k3 = (float(x) for x in k)
    if k3 == 0.0:
        return SymbolValue(0.0, 0.0, 0.0)
    n2 = params.n_squared
    n4 = n2 * n2
    ksq = k1 * k1 + k2 * k2 + k3 * k3
    s = k2 * k2 + params.eps_nu * (ksq * ksq)
    d = n4 * ksq * (k3 * k3) + s * s
    return SymbolValue(
        (n4 * k2 * k3 * ksq - n2 * k1 * k3 * s) / d,
        (-n4 * k1 * k3 * ksq - n2 * k2 * k3 * s) / d,
        n2 * (k1 * k1 + k2 * k2) * s / d,
    )


def symbol_arrays(k1, k2, k3, params: PhysicalParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised symbol over broadcastable wavenumber arrays."""
    return kernels.symbol_fill(k1, k2, k3, params.n_squared, params.eps_nu)


@lru_cache(maxsize=16)
def symbol_table(grid: Grid, n_squared: float, eps_nu: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cached read-only symbol arrays in the rfft layout of ``grid``."""
    k1, k2, k3 = grid.wavenumbers
    tables = kernels.symbol_fill(k1, k2, k3, n_squared, eps_nu)
    for t in tables:
        t.setflags(write=False)
    return tables


def grid_symbols(grid: Grid, params: PhysicalParams):
    return symbol_table(grid, params.n_squared, params.eps_nu)


@dataclass(frozen=True, eq=False)
class SpectralVelocity:
    grid: Grid
    coeffs: np.ndarray  # shape (3, *grid.spectral_shape)

    def to_physical(self) -> np.ndarray:
        return irfft3(self.coeffs, self.grid.shape)

    def divergence(self) -> np.ndarray:
        """Spectral divergence sum_j i k_j u_j(k)."""
        k1, k2, k3 = self.grid.wavenumbers
        c = self.coeffs
        return 1j * (k1 * c[0] + k2 * c[1] + k3 * c[2])


def apply_M(theta: SpectralScalar, params: PhysicalParams) -> SpectralVelocity:
    m1, m2, m3 = grid_symbols(theta.grid, params)
    c = theta.coeffs
    return SpectralVelocity(theta.grid, np.stack((m1 * c, m2 * c, m3 * c)))


def heat_multiplier(k, t: float, eps_kappa: float) -> float:
    """exp(-eps_kappa * t * |k|^2); the Fourier symbol of the heat semigroup."""
    if t < 0:
        raise ValueError("heat semigroup is defined for t >= 0 only")
    if eps_kappa < 0:
        raise ValueError("eps_kappa must be >= 0")
    ksq = float(sum(float(x) * float(x) for x in k))
    return math.exp(-eps_kappa * t * ksq)


class ProfileRow(NamedTuple):
    kmag: float
    max_symbol: float
    scaled: float  # max_j |M_j| * eps_nu |k|^2 (viscous) or M3 on the parabola (inviscid)


def smoothing_profile(params: PhysicalParams, kmax: int) -> list[ProfileRow]:
    """Shell scan of the multiplier size.

    Viscous case: for each integer shell |k| in [K, K+1), K = 1..kmax, the supremum of
    max_j |M_j(k)| and of max_j |M_j(k)| * eps_nu |k|^2 over wavevectors with |k_i| <= kmax.
    Inviscid case: M3 along the curve k = (j, round(sqrt j), 1), j = 1..kmax.
    """
    if kmax < 8:
        raise ValueError("kmax must be >= 8")
    if params.eps_nu > 0:
        r = np.arange(-kmax, kmax + 1, dtype=float)
        k1, k2, k3 = np.meshgrid(r, r, r, indexing="ij")
        m = np.max(np.abs(np.stack(symbol_arrays(k1, k2, k3, params))), axis=0)
        kmag = np.sqrt(k1**2 + k2**2 + k3**2)
        shell = np.floor(kmag).astype(int)
        rows = []
        for K in range(1, kmax + 1):
            sel = shell == K
            rows.append(ProfileRow(float(K), float(m[sel].max()),
                                   float((m[sel] * params.eps_nu * kmag[sel] ** 2).max())))
        return rows
    rows = []
    for j in range(1, kmax + 1):
        k = (j, int(math.floor(math.sqrt(j) + 0.5)), 1)
        v = symbol(k, params)
        rows.append(ProfileRow(math.sqrt(sum(x * x for x in k)), max(abs(x) for x in v), v.m3))
    return rows


def viscous_ratio(params: PhysicalParams, K: int) -> float:
    """eps_nu |k|^2 * M3(K, 0, 1); tends to 1 as K grows when eps_nu > 0."""
    return params.eps_nu * (K * K + 1) * symbol((K, 0, 1), params).m3


def shell_sup_scaled(params: PhysicalParams, kmax: int = 64) -> list[tuple[int, float]]:
    """sup over dyadic shells 2^n <= |k| < 2^(n+1) of max_j |M_j(k)| |k|^2 (|k_i| <= kmax)."""
    r = np.arange(-kmax, kmax + 1, dtype=float)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    sups: dict[int, float] = {}
    for k3 in r:
        if k3 == 0:
            continue
        m = np.max(np.abs(np.stack(symbol_arrays(k1, k2, k3, params))), axis=0)
        ksq = k1**2 + k2**2 + k3**2
        n = np.floor(np.log2(np.sqrt(ksq))).astype(int)
        val = m * ksq
        for level in np.unique(n):
            top = float(val[n == level].max())
            sups[int(level)] = max(sups.get(int(level), 0.0), top)
    nmax = int(math.floor(math.log2(kmax)))
    return [(lv, sups[lv]) for lv in sorted(sups) if lv < nmax]
