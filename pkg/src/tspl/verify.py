"""Property suites run by ``tspl verify``.

Each suite returns a list of :class:`Check`. Sizes are kept small so the
whole set finishes in about a minute; the acceptance tests run the
full-size versions.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import chisquare

from . import semigroups
from .ensemble import boundedness_monitor, stability_probe
from .operators import FlowField, ModelParams, apply_A, apply_R
from .reference import ExpMidpoint, g_term
from .spectral import Field, TorusGrid, to_physical, to_spectral
from .splitting import PERMUTATIONS, PermutationStream, SchemeSpec, averaged_step, compose, evolve, mean_of
from .truncation import (
    PERMUTATION_IDS,
    ExpansionId,
    band_limited_field,
    expansion_remainder,
    fit_order,
    local_error,
)


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float
    threshold: float

    def as_dict(self) -> dict:
        d = asdict(self)
        d["value"] = float(d["value"])
        d["threshold"] = float(d["threshold"])
        return d


def paper_setup(N: int = 64):
    grid = TorusGrid(N)
    X, Y = grid.coords
    u0 = 1 + 0.5 * np.sin(X) + np.exp(0.7 * np.sin(Y))
    return grid, ModelParams(1.0, FlowField.shear(grid)), u0


def _le(suite, name, value, threshold):
    return Check(suite, name, bool(value <= threshold), float(value), float(threshold))


def _ge(suite, name, value, threshold):
    return Check(suite, name, bool(value >= threshold), float(value), float(threshold))


def _within(suite, name, value, lo, hi):
    c = Check(suite, name, bool(lo <= value <= hi), float(value), float(hi))
    return c


def suite_spectral() -> list[Check]:
    s = "spectral"
    out = []
    rng = np.random.default_rng(0)
    worst = 0.0
    for N in (8, 16, 32, 64, 128):
        g = TorusGrid(N)
        f = Field(g, rng.standard_normal(g.shape))
        back = to_physical(to_spectral(f)).values
        worst = max(worst, np.max(np.abs(back - f.values)) / np.max(np.abs(f.values)))
    out.append(_le(s, "round-trip relative error", worst, 1e-12))
    g = TorusGrid(128)
    X, Y = g.coords
    u = np.exp(0.7 * np.sin(Y))
    err = np.max(np.abs(g.derivative(u, "y") - 0.7 * np.cos(Y) * u))
    out.append(_le(s, "d/dy exp(0.7 sin y)", err, 1e-10))
    u = np.sin(X) + np.exp(0.5 * np.cos(X + Y))
    rel = abs(g.norm(u, 1, 2) - g.norm_spectral(u, 1)) / g.norm(u, 1, 2)
    out.append(_le(s, "Plancherel W1,2", rel, 1e-10))
    lap = g.laplacian(u, 0.3)
    dd = 0.3 * (g.derivative(g.derivative(u, "x"), "x") + g.derivative(g.derivative(u, "y"), "y"))
    out.append(_le(s, "Laplacian vs repeated derivatives", np.max(np.abs(lap - dd)), 1e-10))
    return out


def suite_operators() -> list[Check]:
    s = "operators"
    g, params, u0 = paper_setup(64)
    out = []
    for flow in (params.flow, FlowField.cellular(g)):
        a = apply_A(u0, flow)
        inner = abs(np.sum(a * u0) * g.h**2)
        out.append(_le(s, f"<A f, f> = 0 ({flow.name})", inner / g.norm(u0) ** 2, 1e-9))
        out.append(_le(s, f"mean of A f ({flow.name})", abs(g.rfft(a)[0, 0]) * g.h**2, 1e-10))
    out.append(_le(s, "R(0.5) = 0.375", np.max(np.abs(apply_R(np.full(g.shape, 0.5)) - 0.375)), 1e-15))
    return out


def _ode_reaction(w0: float, t: float) -> float:
    sol = solve_ivp(lambda _, w: w - w**3, (0, t), [w0], method="DOP853", rtol=1e-13, atol=1e-15)
    return float(sol.y[0, -1])


def suite_semigroups() -> list[Check]:
    s = "semigroups"
    g, params, u0 = paper_setup(64)
    X, Y = g.coords
    out = []
    got = semigroups.heat_step(np.sin(X), g, 1.0, 0.5)
    out.append(_le(s, "heat eigenfunction decay", np.max(np.abs(got - math.exp(-0.5) * np.sin(X))), 1e-12))
    ab = semigroups.heat_step(semigroups.heat_step(u0, g, 1.0, 0.1), g, 1.0, 0.2)
    out.append(_le(s, "heat semigroup property", np.max(np.abs(ab - semigroups.heat_step(u0, g, 1.0, 0.3))), 1e-12))
    adv = semigroups.advect_step(u0, params.flow, 2.0**-8)
    rel = abs(g.norm(adv) - g.norm(u0)) / g.norm(u0)
    out.append(_le(s, "advection preserves L2", rel, 1e-7))
    rel = abs(g.sup_interpolant(adv) - g.sup_interpolant(u0)) / g.sup_interpolant(u0)
    out.append(_le(s, "advection preserves Linf (interpolant sup)", rel, 1e-7))
    fixed = max(np.max(np.abs(semigroups.react_step(np.full(g.shape, c), 0.7) - c)) for c in (-1.0, 0.0, 1.0))
    out.append(_le(s, "reaction fixed points", fixed, 0.0))
    rng = np.random.default_rng(1)
    worst = -np.inf
    for _ in range(20):
        w0 = rng.uniform(-3, 3, g.shape)
        t = rng.uniform(0, 1)
        for p in (2, math.inf):
            worst = max(worst, g.norm(semigroups.react_step(w0, t), 0, p) / (math.exp(t) * g.norm(w0, 0, p)))
    out.append(_le(s, "reaction growth <= e^t", worst, 1.0))
    err = max(abs(float(semigroups.react_step(np.array(w), t)) - _ode_reaction(w, t)) for w, t in ((0.5, 0.5), (2.0, 1.0), (-0.3, 2.0)))
    out.append(_le(s, "reaction vs ODE integrator", err, 1e-10))
    return out


def suite_splitting() -> list[Check]:
    s = "splitting"
    out = []
    stream = PermutationStream(2024)
    counts = np.zeros(6)
    index = {p: i for i, p in enumerate(PERMUTATIONS)}
    for _ in range(60000):
        counts[index[stream.next_permutation()]] += 1
    out.append(_ge(s, "chi-square uniformity p-value", chisquare(counts).pvalue, 0.001))
    a, b = PermutationStream(7).take(1000), PermutationStream(7).take(1000)
    out.append(_le(s, "same seed, same stream", float(a != b), 0))
    g, params, _ = paper_setup(32)
    a0 = band_limited_field(g)
    avg = averaged_step(a0, params, 2.0**-5)
    manual = mean_of([compose(a0, order, params, 2.0**-5) for order in PERMUTATIONS])
    out.append(_le(s, "averaged step equals mean of orderings", float(np.max(np.abs(avg - manual))), 0.0))
    return out


def k0_limit_deviation(params: ModelParams, u0, tau: float) -> float:
    """Change in one reference step when the weights use ``(1 - e^{-c s})/c`` at ``c = 1e-30`` on ``k = 0``."""
    exact = ExpMidpoint(params, tau)
    direct = ExpMidpoint(params, tau)
    c = np.where(params.grid.k2 == 0, 1e-30, params.nu * params.grid.k2)
    direct.weight_half = -np.expm1(-c * tau / 2) / c
    direct.weight_full = -np.expm1(-c * tau) / c
    return float(np.max(np.abs(exact.step(u0) - direct.step(u0))))


def cross_integrator_gap(params: ModelParams, u0, T: float = 0.1, tau_ref: float = 2.0**-14, tau_split: float = 2.0**-14) -> tuple[float, float]:
    """L2 distance at ``T`` between the reference solver and a fine symmetric splitting run.

    ``T`` is rounded to the nearest multiple of ``tau_ref`` and both
    integrators stop there. Returns ``(gap, T_used)``.
    """
    n = max(1, round(T / tau_ref))
    T_used = n * tau_ref
    ref = ExpMidpoint(params, tau_ref).run(u0, n)
    split = evolve(u0, SchemeSpec("symmetric", tau_split), params, T_used)
    return float(params.grid.norm(ref - split)), T_used


def suite_reference() -> list[Check]:
    s = "reference"
    g, params, u0 = paper_setup(32)
    out = []
    heat = ExpMidpoint(params, 0.01, g=lambda u: np.zeros((g.N, g.N // 2 + 1), complex)).run(u0, 10)
    exact = semigroups.heat_step(u0, g, 1.0, 0.1)
    out.append(_le(s, "exact on pure heat", np.max(np.abs(heat - exact)), 1e-12))
    out.append(_le(s, "k=0 limit vs c=1e-30 evaluation", k0_limit_deviation(params, u0, 0.01), 1e-12))
    ref = ExpMidpoint(params, 2.0**-12).run(u0, 2**12 // 4)
    taus = [2.0**-m for m in range(6, 10)]
    errs = [float(g.norm(ExpMidpoint(params, t).run(u0, round(0.25 / t)) - ref)) for t in taus]
    out.append(_within(s, "self-convergence slope in [1.8, 2.2]", fit_order(taus, errs).slope, 1.8, 2.2))
    g64, params64, u64 = paper_setup(64)
    out.append(_le(s, "agrees with symmetric splitting at T=0.1", cross_integrator_gap(params64, u64)[0], 5e-6))
    gt = g_term(np.ones(g.shape), params)
    out.append(_le(s, "g(1) = 0 for divergence-free flow", float(np.max(np.abs(gt))), 1e-10))
    return out


def suite_expansions() -> list[Check]:
    s = "expansions"
    g, params, _ = paper_setup(64)
    a = band_limited_field(g)
    taus = [2.0**-m for m in range(5, 10)]
    out = []
    for which in PERMUTATION_IDS:
        sl = fit_order(taus, [local_error(which, a, params, t) for t in taus]).slope
        out.append(_within(s, f"local error slope {which.value} in [1.8, 2.3]", sl, 1.8, 2.3))
    sl = fit_order(taus, [local_error(ExpansionId.AveragedS, a, params, t) for t in taus]).slope
    out.append(_within(s, "local error slope AveragedS in [2.7, 3.3]", sl, 2.7, 3.3))
    for which in PERMUTATION_IDS + (ExpansionId.ExactT,):
        sl = fit_order(taus, [expansion_remainder(which, a, params, t) for t in taus]).slope
        out.append(_within(s, f"remainder slope {which.value} in [2.7, 3.3]", sl, 2.7, 3.3))
    return out


def suite_stability() -> list[Check]:
    s = "stability"
    g, params, u0 = paper_setup(32)
    X, Y = g.coords
    bump = np.cos(X) * np.sin(2 * Y)
    r1 = stability_probe(u0, u0 + 1e-4 * bump, params, 0.5, tau_ref=2.0**-9)
    r2 = stability_probe(u0, u0 + 0.5e-4 * bump, params, 0.5, tau_ref=2.0**-9)
    rel = abs(r1.growth_rate - r2.growth_rate) / abs(r1.growth_rate)
    return [
        _le(s, "growth rate stable under halving", rel, 0.2),
        _le(s, "ratio <= exp(C t)", float(not r1.holds()), 0),
    ]


def suite_boundedness() -> list[Check]:
    s = "boundedness"
    g, params, u0 = paper_setup(32)
    rep = boundedness_monitor(u0, params, [2.0**-m for m in range(3, 7)], 0.5, range(10))
    return [
        _le(s, "norms finite", float(not rep.finite), 0),
        _le(s, "sup W1,2 variation across tau", rep.variation, 0.10),
    ]


SUITES: dict[str, Callable[[], list[Check]]] = {
    "spectral": suite_spectral,
    "operators": suite_operators,
    "semigroups": suite_semigroups,
    "splitting": suite_splitting,
    "reference": suite_reference,
    "expansions": suite_expansions,
    "stability": suite_stability,
    "boundedness": suite_boundedness,
}


def run_suites(names=None) -> list[Check]:
    names = list(SUITES) if not names else names
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s) {unknown}; available: {', '.join(SUITES)}")
    checks = []
    for n in names:
        checks.extend(SUITES[n]())
    return checks
