import hashlib

import numpy as np
import pytest

from conftest import paper_u0
from tspl.operators import FlowField, ModelParams, apply_A
from tspl.reference import (
    AlignmentError,
    ExpMidpoint,
    coarse_times,
    exp_midpoint_step,
    g_term,
    phi1,
    read_snapshot,
    reference_trajectory,
    snapshot_bytes,
    write_snapshot,
)
from tspl.semigroups import heat_step
from tspl.spectral import TorusGrid
from tspl.splitting import DivergenceError, SchemeSpec, evolve
from tspl.truncation import fit_order
from tspl.verify import k0_limit_deviation

# sha256 of u(T=1) at N=64, tau_ref=2^-12 for the paper configuration,
# recorded when the solver was first built.
GOLDEN_REFERENCE = "e165270244598854defa66df454597d763783398e080ebbb1901e7621ae6b6db"


def test_phi1_series_branch():
    z = np.array([0.0, 1e-8, 9.9e-5, 1.01e-4, 0.5, 30.0])
    want = np.array([1.0] + [float(-np.expm1(-x) / x) for x in z[1:]])
    assert np.max(np.abs(phi1(z) - want)) <= 1e-15


def test_g_term_zero():
    g = TorusGrid(16)
    assert np.all(g_term(np.zeros(g.shape), ModelParams(1.0, FlowField.shear(g))) == 0)


def test_g_term_constant_one_matches_advection_sign(paper64):
    g = paper64.grid
    got = g_term(np.ones(g.shape), paper64)
    # (v u) for u = 1 is v itself; its divergence vanishes
    want = g.dx_factor * g.rfft(paper64.flow.vx)
    assert np.max(np.abs(got - want)) <= 1e-10
    assert np.max(np.abs(got)) <= 1e-10


def test_g_term_advective_part_is_minus_A(paper64):
    g = paper64.grid
    u = paper_u0(g)
    adv = g_term(u, paper64) - g.rfft(u**3 - u)
    assert np.max(np.abs(g.irfft(adv) + apply_A(u, paper64.flow))) <= 1e-10


def test_g_term_sin_x_without_flow():
    g = TorusGrid(16)
    X, _ = g.coords
    got = g_term(np.sin(X), ModelParams(1.0, FlowField.zero(g)))
    # sin^3 x - sin x = -(sin x + sin 3x) / 4 ; sin(m x) -> -i N^2/2 at +m, +i N^2/2 at -m
    want = np.zeros_like(got)
    for m in (1, 3):
        want[m, 0] = 1j * g.N**2 / 8
        want[-m, 0] = -1j * g.N**2 / 8
    assert np.max(np.abs(got - want)) <= 1e-11


def test_exact_on_pure_heat(paper32):
    g = paper32.grid
    u0 = paper_u0(g)
    zero_g = lambda u: np.zeros((g.N, g.N // 2 + 1), complex)  # noqa: E731
    got = ExpMidpoint(paper32, 0.01, g=zero_g).run(u0, 10)
    assert np.max(np.abs(got - heat_step(u0, g, 1.0, 0.1))) <= 1e-12


def test_k0_limit_branch(paper64):
    assert k0_limit_deviation(paper64, paper_u0(paper64.grid), 2.0**-6) <= 1e-12


def test_self_convergence_second_order(paper32):
    g = paper32.grid
    u0 = paper_u0(g)
    T = 0.25
    ref = ExpMidpoint(paper32, 2.0**-13).run(u0, round(T * 2**13))
    taus = [2.0**-m for m in range(6, 11)]
    errs = [g.norm(ExpMidpoint(paper32, t).run(u0, round(T / t)) - ref) for t in taus]
    assert 1.8 <= fit_order(taus, errs).slope <= 2.2


def test_constant_one_is_stationary(paper32):
    u = np.ones(paper32.grid.shape)
    assert np.max(np.abs(exp_midpoint_step(u, paper32, 0.1) - 1)) <= 1e-12


def test_one_step_local_error_third_order(paper32):
    g = paper32.grid
    u0 = paper_u0(g)
    taus = [2.0**-m for m in range(6, 10)]
    errs = []
    for tau in taus:
        fine = evolve(u0, SchemeSpec("symmetric", 2.0**-14), paper32, tau)
        errs.append(g.norm(exp_midpoint_step(u0, paper32, tau) - fine))
    assert 2.7 <= fit_order(taus, errs).slope <= 3.3


def test_trajectory_samples(paper32):
    u0 = paper_u0(paper32.grid)
    out = reference_trajectory(u0, paper32, 2.0**-8, 0.25, [0.0])
    assert np.array_equal(out[0.0], u0)
    tau_ref = 2.0**-10
    out = reference_trajectory(u0, paper32, tau_ref, 0.125, coarse_times(0.125, 2.0**-4))
    stepper = ExpMidpoint(paper32, tau_ref)
    assert np.array_equal(out[2.0**-4], stepper.run(u0, 64))
    assert np.array_equal(out[0.125], stepper.run(stepper.run(u0, 64), 64))


def test_trajectory_alignment_error(paper32):
    with pytest.raises(AlignmentError):
        reference_trajectory(paper_u0(paper32.grid), paper32, 2.0**-8, 1.0, [0.001])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reported():
    g = TorusGrid(16)
    params = ModelParams(1.0, FlowField.zero(g))
    with pytest.raises(DivergenceError):
        ExpMidpoint(params, 1.0).run(np.full(g.shape, 50.0), 5)


def test_golden_reference_hash(paper64):
    u = ExpMidpoint(paper64, 2.0**-12).run(paper_u0(paper64.grid), 4096)
    assert hashlib.sha256(np.ascontiguousarray(u, "<f8").tobytes()).hexdigest() == GOLDEN_REFERENCE


def test_snapshot_round_trip(tmp_path, rng):
    g = TorusGrid(8)
    u = rng.standard_normal(g.shape)
    sha = write_snapshot(tmp_path / "a.tspl", u, g, 1.0, 2.0**-12, 0.5)
    data = (tmp_path / "a.tspl").read_bytes()
    assert data[:4] == b"TSPL"
    assert len(data) == 4 + 4 + 4 + 4 * 8 + 64 * 8
    assert hashlib.sha256(data).hexdigest() == sha
    assert data == snapshot_bytes(u, g, 1.0, 2.0**-12, 0.5)
    snap = read_snapshot(tmp_path / "a.tspl")
    assert (snap.N, snap.L, snap.nu, snap.tau_ref, snap.t) == (8, g.L, 1.0, 2.0**-12, 0.5)
    assert np.array_equal(snap.values, u)


def test_snapshot_rejects_garbage(tmp_path):
    p = tmp_path / "bad.tspl"
    p.write_bytes(b"NOPE" + bytes(60))
    with pytest.raises(ValueError):
        read_snapshot(p)
