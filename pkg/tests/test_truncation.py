"""Truncation lab. The symbolic oracle below derives every second-order
expansion independently by composing truncated Taylor series of the
sub-flows in sympy, without using the coefficient tables of the package."""
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from tspl.operators import ExpansionTerm, FlowField, ModelParams, apply_poly
from tspl.spectral import TorusGrid
from tspl.truncation import (
    PERMUTATION_IDS,
    DegenerateFitError,
    ExpansionId,
    band_limited_field,
    composition,
    expansion_predict,
    expansion_remainder,
    fit_order,
    local_error,
    truncation_study,
    write_truncation_csv,
)

x, y = sp.symbols("x y", real=True)
NU = 1
AMP = sp.Rational(3, 4)


def L_(f):
    return NU * (sp.diff(f, x, 2) + sp.diff(f, y, 2))


def A_(f):
    # -v . grad f with v = (-AMP sin y, 0)
    return AMP * sp.sin(y) * sp.diff(f, x)


def lin(op):
    # S(t) w = w + t Op w + t^2/2 Op^2 w on a truncated series [w0, w1, w2]
    def flow(w):
        w0, w1, w2 = w
        return [w0, w1 + op(w0), w2 + op(w1) + op(op(w0)) / 2]

    return flow


def react(w):
    # S_R(t) w = w + t R(w) + t^2/2 R'(w) R(w), R(w) = w - w^3, expanded to t^2
    w0, w1, w2 = w
    R0 = w0 - w0**3
    dR0 = 1 - 3 * w0**2
    # R(w) = R0 + t dR0 w1 + O(t^2)
    return [w0, w1 + R0, w2 + dR0 * w1 + dR0 * R0 / 2]


FLOWS = {"A": lin(A_), "L": lin(L_), "R": react}


def series_of(label, a):
    w = [a, sp.Integer(0), sp.Integer(0)]
    for c in reversed(label):  # product notation: rightmost factor acts first
        w = FLOWS[c](w)
    return w


def exact_series(a):
    F = L_(a) + A_(a) + a - a**3
    dF = L_(F) + A_(F) + (1 - 3 * a**2) * F
    return [a, F, dF / 2]


def oracle(which, a, grid, tau):
    if which is ExpansionId.ExactT:
        s = exact_series(a)
    elif which is ExpansionId.AveragedS:
        parts = [series_of(i.value, a) for i in PERMUTATION_IDS]
        s = [sum(p[j] for p in parts) / 6 for j in range(3)]
    else:
        s = series_of(which.value, a)
    expr = s[0] + tau * s[1] + tau**2 * s[2]
    X, Y = grid.coords
    return np.broadcast_to(sp.lambdify((x, y), sp.expand(expr), "numpy")(X, Y), grid.shape)


@pytest.fixture(scope="module")
def setup64():
    g = TorusGrid(64)
    return g, ModelParams(1.0, FlowField.shear(g))


@pytest.mark.parametrize("which", list(ExpansionId), ids=lambda i: i.value)
def test_expansion_matches_symbolic_oracle(which, setup64):
    g, params = setup64
    a_sym = sp.Rational(3, 10) + sp.Rational(1, 5) * sp.sin(x) + sp.Rational(1, 10) * sp.cos(y)
    X, Y = g.coords
    a = 0.3 + 0.2 * np.sin(X) + 0.1 * np.cos(Y)
    tau = 2.0**-6
    got = expansion_predict(which, a, params, tau)
    assert np.max(np.abs(got - oracle(which, a_sym, g, sp.Rational(1, 64)))) <= 1e-12


def test_arl_oracle_matches_printed_formula(setup64):
    # the oracle's ARL series reproduces the printed ARL bracket term by term
    a = sp.Rational(3, 10) + sp.Rational(1, 5) * sp.sin(x)
    s = series_of("ARL", a)
    R = a - a**3
    printed = (L_(L_(a)) + A_(A_(a)) + (1 - 3 * a**2) * R + 2 * (1 - 3 * a**2) * L_(a) + 2 * A_(R) + 2 * A_(L_(a))) / 2
    assert sp.simplify(sp.expand(s[2] - printed)) == 0
    assert sp.simplify(sp.expand(s[1] - (L_(a) + A_(a) + R))) == 0


@pytest.mark.parametrize("which", list(ExpansionId), ids=lambda i: i.value)
def test_zero_and_one(which, setup64):
    g, params = setup64
    zeros, ones = np.zeros(g.shape), np.ones(g.shape)
    assert np.max(np.abs(expansion_predict(which, zeros, params, 0.1))) == 0
    assert np.max(np.abs(expansion_predict(which, ones, params, 0.1) - 1)) <= 1e-12
    if which is not ExpansionId.ExactT:
        for tau in (2.0**-3, 2.0**-6):
            assert expansion_remainder(which, ones, params, tau) <= 1e-11


def test_local_error_on_constants():
    g = TorusGrid(16)
    params = ModelParams(1.0, FlowField.zero(g))
    for c in (-1.0, 0.0, 1.0):
        a = np.full(g.shape, c)
        for which in PERMUTATION_IDS + (ExpansionId.AveragedS,):
            assert local_error(which, a, params, 2.0**-4) <= 1e-12


def test_local_error_rejects_exact():
    g = TorusGrid(8)
    with pytest.raises(ValueError):
        local_error(ExpansionId.ExactT, np.zeros(g.shape), ModelParams(1.0, FlowField.zero(g)), 0.1)


def test_catalog():
    assert len(ExpansionId) == 8
    assert [i.value for i in PERMUTATION_IDS] == ["ARL", "LRA", "ALR", "LAR", "RAL", "RLA"]


def test_identity_at_zero_step(setup64):
    g, params = setup64
    a = band_limited_field(g)
    for which in ExpansionId:
        assert np.array_equal(expansion_predict(which, a, params, 0.0), a)
        if which is not ExpansionId.ExactT:
            assert np.max(np.abs(composition(which, a, params, 0.0) - a)) <= 1e-15


def test_first_order_part_shared(setup64):
    g, params = setup64
    a = band_limited_field(g)
    F = apply_poly(a, ExpansionTerm.first_order, params)
    taus = [2.0**-m for m in range(5, 9)]
    for which in PERMUTATION_IDS:
        errs = [g.norm(composition(which, a, params, tau) - (a + tau * F)) for tau in taus]
        assert 1.8 <= fit_order(taus, errs).slope <= 2.3


def test_band_limited_field_modes():
    g = TorusGrid(32)
    uh = np.fft.fft2(band_limited_field(g))
    k = np.fft.fftfreq(32, 1 / 32)
    KX, KY = np.meshgrid(k, k, indexing="ij")
    assert np.max(np.abs(uh[np.maximum(abs(KX), abs(KY)) > 4])) < 1e-10


def test_fit_order_synthetic():
    taus = [2.0**-m for m in range(3, 9)]
    assert fit_order(taus, [3.0 * t**2 for t in taus]).slope == pytest.approx(2.0, abs=1e-10)
    assert fit_order(taus, [0.2 * t**1.5 for t in taus]).slope == pytest.approx(1.5, abs=1e-10)
    with pytest.raises(DegenerateFitError):
        fit_order(taus, [0.0] + [t for t in taus[1:]])
    with pytest.raises(DegenerateFitError):
        fit_order(taus[:3], taus[:3])


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1e-6, 1e6), noise=st.lists(st.floats(-0.2, 0.2), min_size=5, max_size=5))
def test_fit_order_scale_invariant(c, noise):
    taus = [2.0**-m for m in range(4, 9)]
    errs = [t**2 * math.exp(n) for t, n in zip(taus, noise)]
    a, b = fit_order(taus, errs), fit_order(taus, [c * e for e in errs])
    assert abs(a.slope - b.slope) <= 1e-9
    assert abs(a.residual - b.residual) <= 1e-9


def test_truncation_csv(tmp_path):
    g = TorusGrid(16)
    params = ModelParams(1.0, FlowField.shear(g))
    taus = [2.0**-m for m in range(4, 8)]
    rows = truncation_study(band_limited_field(g), params, taus, [ExpansionId.ARL], kind="remainder")
    write_truncation_csv(tmp_path / "t.csv", rows)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "id,k,p,tau,remainder,slope,fit_residual"
    assert len(lines) == 1 + len(taus)
