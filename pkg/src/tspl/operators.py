"""The advection, diffusion and reaction operators and the expansion terms.

All operators act on physical sample arrays of shape ``(..., N, N)``.
Nonlinear products are formed pointwise without dealiasing unless a caller
asks for the 2/3 rule explicitly.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .spectral import ConfigurationError, Field, TorusGrid

DIVERGENCE_TOL = 1e-10


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FlowField:
    """Divergence-free velocity sampled on a grid."""

    grid: TorusGrid
    vx: np.ndarray
    vy: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        vx = np.array(np.broadcast_to(self.vx, self.grid.shape), dtype=float)
        vy = np.array(np.broadcast_to(self.vy, self.grid.shape), dtype=float)
        for v in (vx, vy):
            v.setflags(write=False)
        object.__setattr__(self, "vx", vx)
        object.__setattr__(self, "vy", vy)
        div = np.max(np.abs(self.grid.divergence(vx, vy)))
        if div > DIVERGENCE_TOL * max(1.0, self.max_speed):
            raise ConfigurationError(f"flow {self.name!r} is not divergence free (max |div v| = {div:.3e})")

    @cached_property
    def max_speed(self) -> float:
        return float(np.max(np.hypot(self.vx, self.vy)))

    @cached_property
    def active(self) -> tuple[bool, bool]:
        """Which velocity components are not identically zero."""
        return bool(np.any(self.vx)), bool(np.any(self.vy))

    @classmethod
    def zero(cls, grid: TorusGrid) -> FlowField:
        return cls(grid, np.zeros(grid.shape), np.zeros(grid.shape), "zero")

    @classmethod
    def shear(cls, grid: TorusGrid, amplitude: float = 0.75) -> FlowField:
        """``v = (-amplitude * sin y, 0)``."""
        _, Y = grid.coords
        return cls(grid, -amplitude * np.sin(Y), np.zeros(grid.shape), f"shear({amplitude:g})")

    @classmethod
    def cellular(cls, grid: TorusGrid, amplitude: float = 1.0) -> FlowField:
        """``v = amplitude * (cos y, sin x)``."""
        X, Y = grid.coords
        return cls(grid, amplitude * np.cos(Y), amplitude * np.sin(X), f"cellular({amplitude:g})")


def divergence(flow: FlowField) -> Field:
    return Field(flow.grid, flow.grid.divergence(flow.vx, flow.vy))


@dataclass(frozen=True)
class ModelParams:
    """Diffusivity and background flow; the nonlinearity is ``f(u) = u**3 - u``."""

    nu: float
    flow: FlowField

    def __post_init__(self):
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise ConfigurationError(f"diffusivity must be positive, got nu={self.nu!r}")

    @property
    def grid(self) -> TorusGrid:
        return self.flow.grid


def _check(u, grid: TorusGrid):
    u = np.asarray(u, dtype=float)
    if u.shape[-2:] != grid.shape:
        raise GridMismatchError(f"field of shape {u.shape[-2:]} does not match {grid!r}")
    return u


def dealias(u: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """2/3-rule truncation; not used on the default paths."""
    uh = grid.rfft(u)
    cut = grid.N // 3
    kx = np.abs(grid.wavenumbers)[:, None]
    ky = np.arange(grid.N // 2 + 1)[None, :]
    return grid.irfft(np.where((kx <= cut) & (ky <= cut), uh, 0))


def apply_A(u, flow: FlowField, dealiased: bool = False) -> np.ndarray:
    """Advection ``-v . grad u`` with spectral derivatives."""
    g = flow.grid
    u = _check(u, g)
    ux, uy = g.gradient(u)
    out = -(flow.vx * ux + flow.vy * uy)
    return dealias(out, g) if dealiased else out


def advection_flux(u, flow: FlowField) -> np.ndarray:
    """Conservative form ``-div(v u)``, equal to :func:`apply_A` up to aliasing."""
    g = flow.grid
    return -g.divergence(flow.vx * u, flow.vy * u)


def apply_L(u, grid: TorusGrid, nu: float) -> np.ndarray:
    return grid.laplacian(_check(u, grid), nu)


def apply_R(u) -> np.ndarray:
    """Reaction ``-f(u) = u - u**3``, pointwise."""
    u = np.asarray(u, dtype=float)
    return u - u**3


class ExpansionTerm(enum.Enum):
    """Closed catalog of the terms in the second-order semigroup expansions.

    Names read as operator products applied right to left to ``a``;
    ``R`` stands for the map ``a - a**3`` and ``dR`` for multiplication by
    its derivative ``1 - 3 a**2``.
    """

    a = "a"
    La = "La"
    Aa = "Aa"
    Ra = "Ra"
    LLa = "LLa"
    AAa = "AAa"
    ALa = "ALa"
    LAa = "LAa"
    LRa = "LRa"
    ARa = "ARa"
    dR_Ra = "dR_Ra"
    dR_La = "dR_La"
    dR_Aa = "dR_Aa"
    first_order = "La+Aa+Ra"


def apply_poly(a, term: ExpansionTerm | str, params: ModelParams) -> np.ndarray:
    """Evaluate one catalog term at the field ``a``."""
    term = ExpansionTerm(term)
    g, nu, flow = params.grid, params.nu, params.flow
    a = _check(a, g)
    L = lambda w: apply_L(w, g, nu)  # noqa: E731
    A = lambda w: apply_A(w, flow)  # noqa: E731
    dR = 1 - 3 * a**2
    table = {
        ExpansionTerm.a: lambda: a.copy(),
        ExpansionTerm.La: lambda: L(a),
        ExpansionTerm.Aa: lambda: A(a),
        ExpansionTerm.Ra: lambda: apply_R(a),
        ExpansionTerm.LLa: lambda: L(L(a)),
        ExpansionTerm.AAa: lambda: A(A(a)),
        ExpansionTerm.ALa: lambda: A(L(a)),
        ExpansionTerm.LAa: lambda: L(A(a)),
        ExpansionTerm.LRa: lambda: L(apply_R(a)),
        ExpansionTerm.ARa: lambda: A(apply_R(a)),
        ExpansionTerm.dR_Ra: lambda: dR * apply_R(a),
        ExpansionTerm.dR_La: lambda: dR * L(a),
        ExpansionTerm.dR_Aa: lambda: dR * A(a),
        ExpansionTerm.first_order: lambda: L(a) + A(a) + apply_R(a),
    }
    return table[term]()
