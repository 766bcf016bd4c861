"""Periodic grid, Fourier transforms, spectral derivatives and discrete norms.

Physical samples are stored as ``values[i, j] = u(x_i, y_j)`` with
``x_i = i*h`` and ``y_j = j*h``, so axis ``-2`` is x and axis ``-1`` is y.
Every array routine accepts leading batch axes.

The forward transform is unnormalized and the inverse carries ``1/N**2``.
Wavenumbers run over ``-N/2+1 .. N/2``; the first-derivative factor is zero
on the Nyquist mode while the Laplacian keeps the full ``|k|**2``.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "ConfigurationError",
    "SymmetryError",
    "UnsupportedNormError",
    "TorusGrid",
    "Field",
    "to_spectral",
    "to_physical",
    "spectral_derivative",
    "laplacian_apply",
    "norm_wkp",
    "set_workers",
]

SYMMETRY_RTOL = 1e-12

_workers = int(os.environ.get("TSPL_THREADS", "1") or 1)


class ConfigurationError(ValueError):
    """Invalid grid or model configuration."""


class SymmetryError(ValueError):
    """Spectral data does not describe a real field."""


class UnsupportedNormError(ValueError):
    pass


def set_workers(n: int) -> None:
    """Set the number of threads the FFT backend may use."""
    global _workers
    _workers = max(1, int(n))


def _rfft2(u):
    return sfft.rfft2(u, workers=_workers)


def _irfft2(uh, n):
    return sfft.irfft2(uh, s=(n, n), workers=_workers)


@dataclass(frozen=True, eq=False)
class TorusGrid:
    """Uniform ``N x N`` grid on the torus ``[0, L)^2``."""

    N: int
    L: float = 2 * math.pi
    d: int = field(default=2, init=False)

    def __post_init__(self):
        n = self.N
        if int(n) != n or n < 4 or n & (n - 1):
            raise ConfigurationError(f"N must be a power of two >= 4, got {n!r}")
        if not self.L > 0:
            raise ConfigurationError(f"L must be positive, got {self.L!r}")
        object.__setattr__(self, "N", int(n))
        object.__setattr__(self, "L", float(self.L))

    def __eq__(self, other):
        return isinstance(other, TorusGrid) and (self.N, self.L) == (other.N, other.L)

    def __hash__(self):
        return hash((self.N, self.L))

    def __repr__(self):
        return f"TorusGrid(N={self.N}, L={self.L!r})"

    @property
    def h(self) -> float:
        return self.L / self.N

    @property
    def shape(self) -> tuple[int, int]:
        return (self.N, self.N)

    @cached_property
    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(X, Y)`` of node coordinates, ``indexing='ij'``."""
        x = np.arange(self.N) * self.h
        return tuple(np.meshgrid(x, x, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers in FFT order, Nyquist mapped to ``+N/2``."""
        k = np.fft.fftfreq(self.N, d=1.0 / self.N).round().astype(np.int64)
        k[self.N // 2] = self.N // 2
        return k

    @cached_property
    def _half_wavenumbers(self) -> np.ndarray:
        return np.arange(self.N // 2 + 1, dtype=np.int64)

    @property
    def scale(self) -> float:
        """Angular factor ``2*pi/L``."""
        return 2 * math.pi / self.L

    # -- multipliers in rfft layout, shape (N, N//2 + 1)

    @cached_property
    def dx_factor(self) -> np.ndarray:
        k = self.wavenumbers.astype(float)
        k[self.N // 2] = 0.0
        f = 1j * self.scale * k[:, None] * np.ones((1, self.N // 2 + 1))
        f.setflags(write=False)
        return f

    @cached_property
    def dy_factor(self) -> np.ndarray:
        k = self._half_wavenumbers.astype(float)
        k[self.N // 2] = 0.0
        f = 1j * self.scale * np.ones((self.N, 1)) * k[None, :]
        f.setflags(write=False)
        return f

    @cached_property
    def k2(self) -> np.ndarray:
        """``(2*pi/L)**2 * |k|**2`` in rfft layout."""
        kx = self.wavenumbers.astype(float)[:, None]
        ky = self._half_wavenumbers.astype(float)[None, :]
        out = self.scale**2 * (kx**2 + ky**2)
        out.setflags(write=False)
        return out

    # -- array level transforms (physical arrays, leading batch axes allowed)

    def rfft(self, u: np.ndarray) -> np.ndarray:
        return _rfft2(u)

    def irfft(self, uh: np.ndarray) -> np.ndarray:
        return _irfft2(uh, self.N)

    def check(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape[-2:] != self.shape:
            raise ConfigurationError(f"array of shape {u.shape} does not live on {self!r}")
        return u

    def derivative(self, u: np.ndarray, axis: str) -> np.ndarray:
        """Spectral first derivative of physical samples along ``'x'`` or ``'y'``."""
        factor = {"x": self.dx_factor, "y": self.dy_factor}[axis]
        return self.irfft(factor * self.rfft(u))

    def gradient(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        uh = self.rfft(u)
        return self.irfft(self.dx_factor * uh), self.irfft(self.dy_factor * uh)

    def divergence(self, vx: np.ndarray, vy: np.ndarray) -> np.ndarray:
        return self.irfft(self.dx_factor * self.rfft(vx) + self.dy_factor * self.rfft(vy))

    def laplacian(self, u: np.ndarray, nu: float = 1.0) -> np.ndarray:
        return self.irfft(-nu * self.k2 * self.rfft(u))

    def norm(self, u: np.ndarray, k: int = 0, p: float = 2) -> np.ndarray:
        """Discrete ``W^{k,p}`` norm over the last two axes.

        ``p=2`` uses the rectangle rule with weight ``h**2``; ``p=inf`` is the
        grid maximum. For ``k=1`` both first derivatives enter.
        """
        if k not in (0, 1) or p not in (2, math.inf):
            raise UnsupportedNormError(f"W^{{{k},{p}}} is not supported")
        u = np.asarray(u, dtype=float)
        parts = [u]
        if k == 1:
            parts.extend(self.gradient(u))
        if p == 2:
            s = sum(np.sum(q * q, axis=(-2, -1)) for q in parts)
            return np.sqrt(s * self.h**2)
        return np.max([np.max(np.abs(q), axis=(-2, -1)) for q in parts], axis=0)

    def sup_interpolant(self, u: np.ndarray, candidates: int = 4, iterations: int = 30) -> float:
        """Sup of ``|u|`` over the torus for the trigonometric interpolant of ``u``.

        Starts from the largest grid samples and refines each with Newton
        steps on the exact Fourier series. Nyquist modes are split evenly
        between ``+N/2`` and ``-N/2`` so the series is real between nodes.
        """
        u = np.asarray(u, dtype=float)
        c = sfft.fft2(u) / self.N**2
        k = self.wavenumbers.astype(float) * self.scale
        KX, KY = np.meshgrid(k, k, indexing="ij")
        ny = self.N // 2
        coefs, kxs, kys = [], [], []
        for flip_x in (False, True):
            for flip_y in (False, True):
                mask = np.ones(self.shape, bool)
                kx, ky = KX.copy(), KY.copy()
                if flip_x:
                    mask[np.arange(self.N) != ny, :] = False
                    kx[ny, :] *= -1
                if flip_y:
                    mask[:, np.arange(self.N) != ny] = False
                    ky[:, ny] *= -1
                weight = np.where(KX == ny * self.scale, 0.5, 1.0) * np.where(KY == ny * self.scale, 0.5, 1.0)
                coefs.append((c * weight)[mask])
                kxs.append(kx[mask])
                kys.append(ky[mask])
        C, KXf, KYf = np.concatenate(coefs), np.concatenate(kxs), np.concatenate(kys)

        def series(x, y):
            e = C * np.exp(1j * (KXf * x + KYf * y))
            grad = np.array([np.sum(1j * KXf * e).real, np.sum(1j * KYf * e).real])
            hxy = -np.sum(KXf * KYf * e).real
            hess = np.array([[-np.sum(KXf**2 * e).real, hxy], [hxy, -np.sum(KYf**2 * e).real]])
            return np.sum(e).real, grad, hess

        best = 0.0
        X, Y = self.coords
        for idx in np.argsort(np.abs(u), axis=None)[::-1][:candidates]:
            i, j = np.unravel_index(idx, self.shape)
            x, y = X[i, j], Y[i, j]
            sign = 1.0 if u[i, j] >= 0 else -1.0
            val = abs(u[i, j])
            for _ in range(iterations):
                _, grad, hess = series(x, y)
                try:
                    step = np.linalg.solve(hess, grad)
                except np.linalg.LinAlgError:
                    break
                if not np.hypot(*step) <= self.h:
                    break
                x, y = x - step[0], y - step[1]
                val = max(val, sign * series(x, y)[0])
                if np.hypot(*step) < 1e-13:
                    break
            best = max(best, val)
        return float(best)

    def norm_spectral(self, u: np.ndarray, k: int = 0) -> np.ndarray:
        """``W^{k,2}`` norm evaluated from Fourier coefficients (Parseval)."""
        uh = sfft.fft2(np.asarray(u, dtype=float), workers=_workers)
        kk = self.wavenumbers.astype(float)
        kk[self.N // 2] = 0.0  # odd derivative vanishes on Nyquist
        w = np.ones(self.shape)
        if k == 1:
            w = w + self.scale**2 * (kk[:, None] ** 2 + kk[None, :] ** 2)
        elif k != 0:
            raise UnsupportedNormError(f"W^{{{k},2}} is not supported")
        s = np.sum(w * np.abs(uh) ** 2, axis=(-2, -1))
        return np.sqrt(s * self.h**2 / self.N**2)


@dataclass(frozen=True, eq=False)
class Field:
    """Real scalar field on a torus grid, in physical or spectral form.

    Spectral values are full complex ``fft2`` coefficients (unnormalized).
    """

    grid: TorusGrid
    values: np.ndarray
    representation: str = "physical"

    def __post_init__(self):
        if self.representation not in ("physical", "spectral"):
            raise ValueError(f"unknown representation {self.representation!r}")
        dtype = float if self.representation == "physical" else complex
        v = np.array(self.values, dtype=dtype)
        if v.shape != self.grid.shape:
            raise ConfigurationError(f"values of shape {v.shape} do not fit {self.grid!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> Field:
        X, Y = grid.coords
        return cls(grid, np.broadcast_to(fn(X, Y), grid.shape))

    @property
    def is_physical(self) -> bool:
        return self.representation == "physical"

    def physical(self) -> np.ndarray:
        return self.values if self.is_physical else to_physical(self).values

    def __repr__(self):
        return f"Field({self.grid!r}, {self.representation})"


def to_spectral(f: Field) -> Field:
    if not f.is_physical:
        raise ValueError("field is already spectral")
    return Field(f.grid, sfft.fft2(f.values, workers=_workers), "spectral")


def to_physical(f: Field) -> Field:
    """Inverse transform; rejects spectra that are not conjugate symmetric."""
    if f.is_physical:
        raise ValueError("field is already physical")
    u = sfft.ifft2(f.values, workers=_workers)
    scale = max(np.max(np.abs(u.real)), np.finfo(float).tiny)
    residue = np.max(np.abs(u.imag))
    if residue > SYMMETRY_RTOL * scale and residue > 1e-300:
        raise SymmetryError(
            f"imaginary residue {residue:.3e} exceeds {SYMMETRY_RTOL:g} relative"
        )
    return Field(f.grid, u.real, "physical")


def spectral_derivative(f: Field, axis: str) -> Field:
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    return Field(f.grid, f.grid.derivative(f.physical(), axis))


def laplacian_apply(f: Field, nu: float = 1.0) -> Field:
    return Field(f.grid, f.grid.laplacian(f.physical(), nu))


def norm_wkp(f: Field, k: int = 0, p: float = 2) -> float:
    return float(f.grid.norm(f.physical(), k, p))
