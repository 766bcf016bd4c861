import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tspl.operators import FlowField, divergence
from tspl.spectral import (
    ConfigurationError,
    Field,
    SymmetryError,
    TorusGrid,
    UnsupportedNormError,
    laplacian_apply,
    norm_wkp,
    spectral_derivative,
    to_physical,
    to_spectral,
)


def direct_idft(coeffs):
    """O(N^4) inverse DFT by explicit summation."""
    N = coeffs.shape[0]
    idx = np.arange(N)
    out = np.zeros((N, N), complex)
    for i in range(N):
        for j in range(N):
            phase = np.exp(2j * np.pi * (np.outer(idx, np.ones(N)) * i + np.outer(np.ones(N), idx) * j) / N)
            out[i, j] = np.sum(coeffs * phase) / N**2
    return out


def test_grid_invariants():
    g = TorusGrid(16)
    assert g.h * g.N == pytest.approx(g.L, rel=0, abs=1e-15)
    assert g.d == 2
    k = g.wavenumbers
    assert k.min() == -7 and k.max() == 8


@pytest.mark.parametrize("N", [0, 2, 6, 12, 100])
def test_grid_rejects_bad_resolution(N):
    with pytest.raises(ConfigurationError):
        TorusGrid(N)


def test_grid_rejects_bad_length():
    with pytest.raises(ConfigurationError):
        TorusGrid(8, -1.0)


def test_dc_component_of_constant():
    g = TorusGrid(8)
    uh = to_spectral(Field(g, np.ones(g.shape))).values.copy()
    assert uh[0, 0] == pytest.approx(64)
    uh[0, 0] = 0
    assert np.max(np.abs(uh)) < 1e-12


def test_sin_x_has_two_modes():
    g = TorusGrid(16)
    uh = to_spectral(Field.from_function(g, lambda X, Y: np.sin(X))).values
    mask = np.abs(uh) > 1e-10
    assert sorted(zip(*np.nonzero(mask))) == [(1, 0), (15, 0)]


def test_zero_spectrum_gives_zero_field():
    g = TorusGrid(8)
    out = to_physical(Field(g, np.zeros(g.shape), "spectral")).values
    assert np.all(out == 0)


def test_cos_x_from_two_coefficients():
    g = TorusGrid(8)
    uh = np.zeros(g.shape, complex)
    uh[1, 0] = uh[-1, 0] = g.N**2 / 2
    X, _ = g.coords
    assert np.max(np.abs(to_physical(Field(g, uh, "spectral")).values - np.cos(X))) < 1e-14


def test_inverse_matches_direct_summation(rng):
    g = TorusGrid(8)
    real = rng.standard_normal(g.shape)
    uh = np.fft.fft2(real)  # conjugate-symmetric by construction
    want = direct_idft(uh)
    assert np.max(np.abs(want.imag)) < 1e-12
    got = to_physical(Field(g, uh, "spectral")).values
    assert np.max(np.abs(got - want.real)) < 1e-12


def test_broken_symmetry_is_rejected():
    g = TorusGrid(8)
    uh = np.zeros(g.shape, complex)
    uh[1, 0] = 1.0
    with pytest.raises(SymmetryError):
        to_physical(Field(g, uh, "spectral"))


@pytest.mark.parametrize("N", [8, 16, 32, 64, 128])
def test_round_trip(N, rng):
    g = TorusGrid(N)
    f = Field(g, rng.standard_normal(g.shape))
    back = to_physical(to_spectral(f)).values
    assert np.max(np.abs(back - f.values)) <= 1e-12 * np.max(np.abs(f.values))


def test_field_is_immutable():
    g = TorusGrid(8)
    f = Field(g, np.zeros(g.shape))
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0


def test_derivative_of_sin_and_constant():
    g = TorusGrid(32)
    X, _ = g.coords
    assert np.max(np.abs(spectral_derivative(Field(g, np.sin(X)), "x").values - np.cos(X))) < 1e-13
    assert np.max(np.abs(spectral_derivative(Field(g, np.full(g.shape, 3.0)), "y").values)) < 1e-13


def test_derivative_closed_form_oracle():
    g = TorusGrid(128)
    _, Y = g.coords
    u = np.exp(0.7 * np.sin(Y))
    got = spectral_derivative(Field(g, u), "y").values
    assert np.max(np.abs(got - 0.7 * np.cos(Y) * u)) <= 1e-10


def test_zero_mode_and_nyquist_factors():
    g = TorusGrid(16)
    assert g.dx_factor[0, 0] == 0 and g.dy_factor[0, 0] == 0
    assert np.all(g.dx_factor[g.N // 2, :] == 0)
    assert np.all(g.dy_factor[:, -1] == 0)
    assert g.k2[g.N // 2, 0] == (g.N // 2) ** 2


def test_nyquist_mode_derivative_is_zero():
    g = TorusGrid(8)
    X, _ = g.coords
    saw = np.cos(4 * X)  # (-1)^i
    assert np.max(np.abs(g.derivative(saw, "x"))) < 1e-13
    assert np.max(np.abs(g.laplacian(saw) + 16 * saw)) < 1e-12


def test_laplacian_examples():
    g = TorusGrid(32)
    X, Y = g.coords
    assert np.max(np.abs(laplacian_apply(Field(g, np.sin(X))).values + np.sin(X))) < 1e-13
    assert np.max(np.abs(laplacian_apply(Field(g, np.ones(g.shape))).values)) < 1e-13
    got = laplacian_apply(Field(g, np.sin(X) + np.sin(2 * Y))).values
    assert np.max(np.abs(got + np.sin(X) + 4 * np.sin(2 * Y))) < 1e-12


def test_laplacian_equals_repeated_derivatives(rng):
    g = TorusGrid(64)
    X, Y = g.coords
    u = np.sin(X) * np.exp(0.5 * np.cos(Y)) + np.cos(3 * X + Y)
    dd = g.derivative(g.derivative(u, "x"), "x") + g.derivative(g.derivative(u, "y"), "y")
    assert np.max(np.abs(g.laplacian(u, 0.7) - 0.7 * dd)) <= 1e-10


def test_norm_examples():
    g = TorusGrid(32)
    X, _ = g.coords
    assert norm_wkp(Field(g, np.ones(g.shape))) == pytest.approx(2 * math.pi, abs=1e-12)
    assert norm_wkp(Field(g, np.sin(X))) == pytest.approx(math.pi * math.sqrt(2), abs=1e-12)
    # ||sin||^2 + ||cos||^2 = 2 * 2 pi^2
    assert norm_wkp(Field(g, np.sin(X)), 1, 2) == pytest.approx(math.sqrt(4 * math.pi**2), abs=1e-12)
    assert norm_wkp(Field(g, np.sin(X)), 1, math.inf) == pytest.approx(1.0, abs=1e-12)


def test_norm_refinement_converges_to_integral():
    # W^{1,2} norm of exp(sin x): the integral does not depend on N once resolved
    vals = []
    for N in (16, 32, 64):
        g = TorusGrid(N)
        X, _ = g.coords
        vals.append(g.norm(np.exp(np.sin(X)), 1, 2))
    assert abs(vals[-1] - vals[-2]) < 1e-12


def test_unsupported_norm():
    g = TorusGrid(8)
    with pytest.raises(UnsupportedNormError):
        g.norm(np.ones(g.shape), 2, 2)
    with pytest.raises(UnsupportedNormError):
        g.norm(np.ones(g.shape), 0, 3)


def test_plancherel():
    g = TorusGrid(64)
    X, Y = g.coords
    u = np.sin(X) + np.exp(0.5 * np.cos(X + Y))
    for k in (0, 1):
        assert abs(g.norm(u, k) - g.norm_spectral(u, k)) <= 1e-10 * g.norm(u, k)


def test_sup_interpolant_finds_off_grid_max():
    g = TorusGrid(16)
    X, Y = g.coords
    shift = 0.37 * g.h
    u = np.cos(X - shift) * np.cos(Y + 2 * shift)
    assert np.max(np.abs(u)) < 1 - 1e-3
    assert g.sup_interpolant(u) == pytest.approx(1.0, abs=1e-13)


def test_divergence_examples():
    g = TorusGrid(64)
    X, Y = g.coords
    assert np.max(np.abs(divergence(FlowField.shear(g)).values)) <= 1e-12
    assert np.max(np.abs(g.divergence(np.cos(Y), np.sin(X)))) <= 1e-12


def test_non_divergence_free_flow_rejected():
    g = TorusGrid(16)
    X, _ = g.coords
    with pytest.raises(ConfigurationError):
        FlowField(g, np.sin(X), np.zeros(g.shape))


@settings(max_examples=40, deadline=None)
@given(
    alpha=st.floats(-10, 10),
    beta=st.floats(-10, 10),
    seed=st.integers(0, 2**32 - 1),
    axis=st.sampled_from(["x", "y"]),
)
def test_derivative_is_linear(alpha, beta, seed, axis):
    g = TorusGrid(16)
    r = np.random.default_rng(seed)
    f, h = r.standard_normal(g.shape), r.standard_normal(g.shape)
    lhs = g.derivative(alpha * f + beta * h, axis)
    rhs = alpha * g.derivative(f, axis) + beta * g.derivative(h, axis)
    assert np.max(np.abs(lhs - rhs)) <= 1e-11 * (1 + abs(alpha) + abs(beta))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), N=st.sampled_from([8, 16, 32]))
def test_round_trip_property(seed, N):
    g = TorusGrid(N)
    u = np.random.default_rng(seed).uniform(-5, 5, g.shape)
    uh = to_spectral(Field(g, u)).values
    k = (-np.arange(N)) % N
    assert np.max(np.abs(uh - np.conj(uh[np.ix_(k, k)]))) <= 1e-12 * np.max(np.abs(uh))
    assert np.max(np.abs(to_physical(Field(g, uh, "spectral")).values - u)) <= 1e-12 * np.max(np.abs(u))
