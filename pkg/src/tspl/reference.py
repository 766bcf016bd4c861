"""Exponential midpoint reference integrator and snapshot files.

One step in Fourier space, with ``c = nu (2 pi / L)**2 |k|**2``::

    u_half = exp(-c tau/2) u_n - (1 - exp(-c tau/2)) / c * g(u_n)
    u_next = exp(-c tau)   u_n - (1 - exp(-c tau))   / c * g(u_half)

where ``g(u) = FFT(u**3 - u) + i (2 pi / L) k . FFT(v u)``. The weights are
evaluated as ``s * phi(c s)`` with ``phi(z) = (1 - exp(-z)) / z``, which
gives ``s`` in the ``k = 0`` limit.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np

from .operators import ModelParams
from .splitting import DivergenceError, step_count
from .spectral import TorusGrid

PHI_SERIES_CUTOFF = 1e-4
SNAPSHOT_MAGIC = b"TSPL"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIdddd")


class AlignmentError(ValueError):
    pass


def phi1(z: np.ndarray) -> np.ndarray:
    """``(1 - exp(-z)) / z`` with a series branch near zero."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < PHI_SERIES_CUTOFF
    safe = np.where(small, 1.0, z)
    direct = -np.expm1(-safe) / safe
    series = 1 - z / 2 + z * z / 6 - z**3 / 24
    return np.where(small, series, direct)


def g_term(u, params: ModelParams) -> np.ndarray:
    """Spectral (rfft layout) nonlinear and advective forcing ``g(u)``."""
    grid, flow = params.grid, params.flow
    u = np.asarray(u, dtype=float)
    out = grid.rfft(u**3 - u)
    use_x, use_y = flow.active
    if use_x:
        out = out + grid.dx_factor * grid.rfft(flow.vx * u)
    if use_y:
        out = out + grid.dy_factor * grid.rfft(flow.vy * u)
    return out


class ExpMidpoint:
    """Precomputed two-stage exponential midpoint stepper for a fixed ``tau``."""

    def __init__(self, params: ModelParams, tau: float, g: Optional[Callable] = None):
        if not tau > 0:
            raise ValueError(f"tau must be positive, got {tau!r}")
        self.params = params
        self.tau = tau
        self.grid: TorusGrid = params.grid
        c = params.nu * self.grid.k2
        self.decay_half = np.exp(-c * tau / 2)
        self.decay_full = np.exp(-c * tau)
        self.weight_half = (tau / 2) * phi1(c * tau / 2)
        self.weight_full = tau * phi1(c * tau)
        self.g = g if g is not None else (lambda u: g_term(u, params))

    def step(self, u) -> np.ndarray:
        grid = self.grid
        u = np.asarray(u, dtype=float)
        uh = grid.rfft(u)
        half = grid.irfft(self.decay_half * uh - self.weight_half * self.g(u))
        return grid.irfft(self.decay_full * uh - self.weight_full * self.g(half))

    def run(self, u0, nsteps: int) -> np.ndarray:
        u = np.array(u0, dtype=float)
        for n in range(1, nsteps + 1):
            u = self.step(u)
            if not np.all(np.isfinite(u)):
                raise DivergenceError(n)
        return u


def exp_midpoint_step(u, params: ModelParams, tau: float) -> np.ndarray:
    return ExpMidpoint(params, tau).step(u)


def _aligned_index(t: float, tau_ref: float) -> int:
    ratio = t / tau_ref
    n = round(ratio)
    if n < 0 or abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise AlignmentError(f"sample time {t!r} is not a multiple of tau_ref={tau_ref!r}")
    return n


def reference_trajectory(u0, params: ModelParams, tau_ref: float, T: float, sample_times: Iterable[float]) -> dict[float, np.ndarray]:
    """Reference solution at each requested time (all multiples of ``tau_ref``)."""
    times = sorted(set(float(t) for t in sample_times))
    if times and times[-1] > T * (1 + 1e-12):
        raise AlignmentError(f"sample time {times[-1]!r} is beyond the horizon T={T!r}")
    indices = [_aligned_index(t, tau_ref) for t in times]
    stepper = ExpMidpoint(params, tau_ref)
    out: dict[float, np.ndarray] = {}
    u = np.array(u0, dtype=float)
    n = 0
    for t, target in zip(times, indices):
        u = stepper.run(u, target - n) if target > n else u
        n = target
        out[t] = u.copy()
    return out


def coarse_times(T: float, tau: float) -> list[float]:
    return [n * tau for n in range(step_count(T, tau) + 1)]


# -- snapshot files


@dataclass(frozen=True)
class Snapshot:
    N: int
    L: float
    nu: float
    tau_ref: float
    t: float
    values: np.ndarray


def snapshot_bytes(values: np.ndarray, grid: TorusGrid, nu: float, tau_ref: float, t: float) -> bytes:
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.shape != grid.shape:
        raise ValueError(f"snapshot of shape {values.shape} does not fit {grid!r}")
    head = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, grid.N, grid.L, nu, tau_ref, t)
    return head + values.tobytes(order="C")


def write_snapshot(path, values, grid: TorusGrid, nu: float, tau_ref: float, t: float) -> str:
    """Write one snapshot; returns the sha256 of the file contents."""
    data = snapshot_bytes(values, grid, nu, tau_ref, t)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_snapshot(path) -> Snapshot:
    data = Path(path).read_bytes()
    magic, version, N, L, nu, tau_ref, t = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC or version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: not a TSPL v{SNAPSHOT_VERSION} snapshot")
    body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
    if body.size != N * N:
        raise ValueError(f"{path}: expected {N * N} samples, found {body.size}")
    return Snapshot(N, L, nu, tau_ref, t, body.reshape(N, N).astype(float))
