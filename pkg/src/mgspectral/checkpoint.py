"""Binary checkpoints of a spectral state.

Layout, all little-endian:

    offset  size  field
    0       4     magic b"MGSP"
    4       4     u32 format version (1)
    8       12    u32 n1, n2, n3
    20      8     f64 time
    28      48    f64 x 6: n_squared, eps_nu, eps_kappa, damping_c, amplitude_A, forcing_m
    76      ...   payload: n1 * n2 * (n3 // 2 + 1) complex coefficients as interleaved
                  (re, im) f64 pairs, C order over the rfft layout (k1 index, k2 index, k3 >= 0)

Indices follow numpy FFT ordering: index i along axis j holds wavenumber i for
i < n_j / 2 and i - n_j otherwise; the last axis holds k3 = 0 .. n3 / 2.
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .multiplier import PhysicalParams
from .spectral import Grid, SpectralScalar

MAGIC = b"MGSP"
VERSION = 1
_HEADER = struct.Struct("<4sI3Id6d")


class CheckpointError(ValueError):
    pass


def write_checkpoint(path, t: float, theta: SpectralScalar, params: PhysicalParams) -> None:
    """Write atomically (temp file then rename) so a crash never leaves a torn checkpoint."""
    g = theta.grid
    head = _HEADER.pack(MAGIC, VERSION, g.n1, g.n2, g.n3, float(t), *params.as_tuple())
    payload = np.ascontiguousarray(theta.coeffs, dtype="<c16").tobytes()
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(head)
        f.write(payload)
    os.replace(tmp, path)


def read_checkpoint(path) -> tuple[float, SpectralScalar, PhysicalParams]:
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise CheckpointError("file shorter than the checkpoint header")
    magic, version, n1, n2, n3, t, *pv = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    grid = Grid(n1, n2, n3)
    expected = n1 * n2 * (n3 // 2 + 1) * 16
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise CheckpointError(f"payload is {len(payload)} bytes, expected {expected}")
    coeffs = np.frombuffer(payload, dtype="<c16").reshape(grid.spectral_shape).astype(complex)
    names = ("n_squared", "eps_nu", "eps_kappa", "damping_c", "amplitude_A", "forcing_m")
    vals = dict(zip(names, pv))
    vals["forcing_m"] = int(vals["forcing_m"])
    return t, SpectralScalar(grid, coeffs, zero_mean=coeffs[0, 0, 0] == 0), PhysicalParams(**vals)
