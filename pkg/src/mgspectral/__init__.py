"""Pseudospectral simulation and linear stability of the magneto-geostrophic active scalar equation."""
__version__ = "0.1.0"

from .kernels import BACKEND
from .multiplier import PhysicalParams, SpectralVelocity, apply_M, heat_multiplier, symbol
from .spectral import (Grid, NormSpec, PhysicalScalar, SpectralScalar, get_workers, norm, set_workers,
                       to_physical, to_spectral)

__all__ = ["BACKEND", "Grid", "NormSpec", "PhysicalParams", "PhysicalScalar", "SpectralScalar",
           "SpectralVelocity", "apply_M", "get_workers", "heat_multiplier", "norm", "set_workers", "symbol",
           "to_physical", "to_spectral", "__version__"]
