"""Sub-flow solvers for the three split problems.

* heat: exact exponential damping of every Fourier mode,
* advection: classical RK4 on ``d/dt u_hat = -i (2 pi / L) k . (v u)_hat``,
  sub-stepped so that the step stays inside the RK4 stability region,
* reaction: the closed-form solution of ``w' = w - w**3``.
"""
from __future__ import annotations

import enum
import math
import warnings

import numpy as np

from .operators import FlowField, ModelParams
from .spectral import TorusGrid

# RK4 covers the imaginary axis up to 2*sqrt(2) ~ 2.83; keep a margin.
RK4_SAFE_CFL = 2.5
RK4_STABILITY_LIMIT = 2 * math.sqrt(2)


class RK4StabilityWarning(RuntimeWarning):
    pass


class SemigroupId(enum.IntEnum):
    ADVECTION = 1
    HEAT = 2
    REACTION = 3

    @property
    def letter(self) -> str:
        return "ALR"[self.value - 1]

    @classmethod
    def from_letter(cls, c: str) -> SemigroupId:
        return cls("ALR".index(c.upper()) + 1)


A, L, R = SemigroupId.ADVECTION, SemigroupId.HEAT, SemigroupId.REACTION


def _check_time(t):
    if not t >= 0:
        raise ValueError(f"step duration must be non-negative, got {t!r}")


def heat_step(u, grid: TorusGrid, nu: float, t: float) -> np.ndarray:
    _check_time(t)
    u = np.asarray(u, dtype=float)
    if t == 0:
        return u.copy()
    return grid.irfft(np.exp(-nu * t * grid.k2) * grid.rfft(u))


def spectral_radius(flow: FlowField) -> float:
    """Bound on the modulus of the discrete advection spectrum."""
    g = flow.grid
    return g.scale * (g.N / 2) * flow.max_speed


def auto_substeps(flow: FlowField, t: float) -> int:
    return max(1, math.ceil(t * spectral_radius(flow) / RK4_SAFE_CFL))


def _flux_rhs(uh, flow: FlowField):
    g = flow.grid
    u = g.irfft(uh)
    use_x, use_y = flow.active
    out = np.zeros_like(uh)
    if use_x:
        out -= g.dx_factor * g.rfft(flow.vx * u)
    if use_y:
        out -= g.dy_factor * g.rfft(flow.vy * u)
    return out


def advect_step(u, flow: FlowField, t: float, substeps: int = 0) -> np.ndarray:
    """Advance ``u_t = -v . grad u`` by ``t`` with RK4.

    ``substeps=0`` picks the smallest count keeping ``dt * radius <= 2.5``.
    An explicit count beyond the RK4 stability limit only warns.
    """
    _check_time(t)
    u = np.asarray(u, dtype=float)
    if t == 0 or not any(flow.active):
        return u.copy()
    if substeps <= 0:
        substeps = auto_substeps(flow, t)
    dt = t / substeps
    if dt * spectral_radius(flow) > RK4_STABILITY_LIMIT:
        warnings.warn(
            f"RK4 advection step dt={dt:g} exceeds the stability limit "
            f"({dt * spectral_radius(flow):.2f} > {RK4_STABILITY_LIMIT:.2f})",
            RK4StabilityWarning,
            stacklevel=2,
        )
    g = flow.grid
    uh = g.rfft(u)
    for _ in range(substeps):
        k1 = _flux_rhs(uh, flow)
        k2 = _flux_rhs(uh + 0.5 * dt * k1, flow)
        k3 = _flux_rhs(uh + 0.5 * dt * k2, flow)
        k4 = _flux_rhs(uh + dt * k3, flow)
        uh = uh + (dt / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return g.irfft(uh)


def react_step(u, t: float) -> np.ndarray:
    """Exact flow of ``w' = w - w**3`` over time ``t``."""
    _check_time(t)
    w0 = np.asarray(u, dtype=float)
    if t == 0:
        return w0.copy()
    decay = math.exp(-2 * t)
    radicand = w0 * w0 * (1 - decay) + decay
    assert np.all(radicand > 0), "reaction radicand must stay positive for t >= 0"
    return w0 / np.sqrt(radicand)


def semigroup_step(which: SemigroupId, u, params: ModelParams, t: float, substeps: int = 0) -> np.ndarray:
    which = SemigroupId(which)
    if which is SemigroupId.ADVECTION:
        return advect_step(u, params.flow, t, substeps)
    if which is SemigroupId.HEAT:
        return heat_step(u, params.grid, params.nu, t)
    return react_step(u, t)
