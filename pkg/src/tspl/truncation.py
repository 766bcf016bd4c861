"""Local truncation errors and second-order expansions of the split flows.

Expansion ids are operator products as written, so ``ARL`` stands for
``S_A(tau) S_R(tau) S_L(tau)[a]``: ``L`` acts first and ``A`` last.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .operators import ExpansionTerm as T_
from .operators import ModelParams, apply_poly
from .reference import ExpMidpoint
from .semigroups import SemigroupId
from .spectral import TorusGrid
from .splitting import PERMUTATIONS, compose, mean_of

REFERENCE_SUBSTEPS = 256


class DegenerateFitError(ValueError):
    pass


class ExpansionId(enum.Enum):
    ARL = "ARL"
    LRA = "LRA"
    ALR = "ALR"
    LAR = "LAR"
    RAL = "RAL"
    RLA = "RLA"
    AveragedS = "AveragedS"
    ExactT = "ExactT"

    @property
    def is_permutation(self) -> bool:
        return len(self.value) == 3

    @property
    def application_order(self) -> tuple[SemigroupId, ...]:
        if not self.is_permutation:
            raise ValueError(f"{self.value} is not a single ordering")
        return tuple(SemigroupId.from_letter(c) for c in reversed(self.value))


PERMUTATION_IDS = tuple(i for i in ExpansionId if i.is_permutation)

_COMMON = {T_.LLa: 1, T_.AAa: 1, T_.dR_Ra: 1}

# Coefficients of the bracket multiplying tau**2 / 2.
SECOND_ORDER: dict[ExpansionId, dict[T_, int]] = {
    ExpansionId.ARL: {**_COMMON, T_.dR_La: 2, T_.ARa: 2, T_.ALa: 2},
    ExpansionId.LRA: {**_COMMON, T_.dR_Aa: 2, T_.LRa: 2, T_.LAa: 2},
    ExpansionId.ALR: {**_COMMON, T_.LRa: 2, T_.ARa: 2, T_.ALa: 2},
    ExpansionId.LAR: {**_COMMON, T_.LRa: 2, T_.ARa: 2, T_.LAa: 2},
    ExpansionId.RAL: {**_COMMON, T_.ALa: 2, T_.dR_La: 2, T_.dR_Aa: 2},
    ExpansionId.RLA: {**_COMMON, T_.LAa: 2, T_.dR_La: 2, T_.dR_Aa: 2},
}
# (L+A)^2 a + (1-3a^2)(a-a^3) + (L+A)(a-a^3) + (1-3a^2)(L+A)a
SECOND_ORDER[ExpansionId.AveragedS] = {
    **_COMMON, T_.LAa: 1, T_.ALa: 1, T_.LRa: 1, T_.ARa: 1, T_.dR_La: 1, T_.dR_Aa: 1,
}
# (L+A)^2 a + (1-3a^2)(La + Aa + a - a^3) + (L+A)(a-a^3): the same bracket.
SECOND_ORDER[ExpansionId.ExactT] = {
    **_COMMON, T_.LAa: 1, T_.ALa: 1, T_.dR_La: 1, T_.dR_Aa: 1, T_.LRa: 1, T_.ARa: 1,
}


def band_limited_field(grid: TorusGrid) -> np.ndarray:
    """Smooth trigonometric polynomial with modes ``|k| <= 4``."""
    X, Y = grid.coords
    return 0.4 + 0.3 * np.sin(X) + 0.2 * np.cos(2 * Y) + 0.1 * np.sin(X + 3 * Y) - 0.15 * np.cos(4 * X - Y)


def exact_flow(a, params: ModelParams, tau: float, substeps: int = REFERENCE_SUBSTEPS) -> np.ndarray:
    """``T(tau)[a]`` from the reference integrator with ``tau/substeps`` steps."""
    return ExpMidpoint(params, tau / substeps).run(a, substeps)


def composition(which: ExpansionId, a, params: ModelParams, tau: float) -> np.ndarray:
    which = ExpansionId(which)
    if which.is_permutation:
        return compose(a, which.application_order, params, tau)
    if which is ExpansionId.AveragedS:
        return mean_of([compose(a, order, params, tau) for order in PERMUTATIONS])
    return exact_flow(a, params, tau)


def expansion_predict(which: ExpansionId, a, params: ModelParams, tau: float) -> np.ndarray:
    """Second-order Taylor polynomial in ``tau`` of the composition ``which``."""
    which = ExpansionId(which)
    a = np.asarray(a, dtype=float)
    bracket = np.zeros_like(a)
    for term, coeff in SECOND_ORDER[which].items():
        bracket += coeff * apply_poly(a, term, params)
    first = apply_poly(a, T_.first_order, params)
    return a + tau * first + 0.5 * tau**2 * bracket


def local_error(which: ExpansionId, a, params: ModelParams, tau: float, k: int = 0, p: float = 2) -> float:
    """``|| composition(tau)[a] - T(tau)[a] ||_{k,p}``."""
    which = ExpansionId(which)
    if which is ExpansionId.ExactT:
        raise ValueError("local error is defined for the orderings and AveragedS only")
    diff = composition(which, a, params, tau) - exact_flow(a, params, tau)
    return float(params.grid.norm(diff, k, p))


def expansion_remainder(which: ExpansionId, a, params: ModelParams, tau: float, k: int = 0, p: float = 2) -> float:
    diff = composition(which, a, params, tau) - expansion_predict(which, a, params, tau)
    return float(params.grid.norm(diff, k, p))


@dataclass
class SlopeReport:
    taus: list[float]
    errors: list[float]
    slope: float
    intercept: float
    residual: float

    def prefactor(self) -> float:
        return 2.0**self.intercept


def fit_order(taus: Sequence[float], errors: Sequence[float]) -> SlopeReport:
    """Least-squares slope of ``log2(error)`` against ``log2(tau)``.

    ``residual`` is the RMS deviation of the data from the fitted line in
    log2 units.
    """
    taus = [float(t) for t in taus]
    errors = [float(e) for e in errors]
    if len(taus) != len(errors):
        raise ValueError("taus and errors differ in length")
    if len(taus) < 4:
        raise DegenerateFitError(f"need at least 4 samples, got {len(taus)}")
    if any(not (e > 0 and math.isfinite(e)) for e in errors) or any(t <= 0 for t in taus):
        raise DegenerateFitError("errors and taus must be positive and finite")
    x = np.log2(taus)
    y = np.log2(errors)
    slope, intercept = np.polyfit(x, y, 1)
    res = y - (slope * x + intercept)
    return SlopeReport(taus, errors, float(slope), float(intercept), float(np.sqrt(np.mean(res**2))))


@dataclass
class TruncationRow:
    id: str
    k: int
    p: float
    kind: str
    report: SlopeReport


def truncation_study(
    a,
    params: ModelParams,
    taus: Sequence[float],
    ids: Sequence[ExpansionId] = tuple(ExpansionId),
    kind: str = "remainder",
    k: int = 0,
    p: float = 2,
) -> list[TruncationRow]:
    """Fit orders of ``local_error`` (``kind='local'``) or ``expansion_remainder``."""
    fn = {"local": local_error, "remainder": expansion_remainder}[kind]
    rows = []
    for which in ids:
        which = ExpansionId(which)
        if kind == "local" and which is ExpansionId.ExactT:
            continue
        errs = [fn(which, a, params, tau, k, p) for tau in taus]
        rows.append(TruncationRow(which.value, k, p, kind, fit_order(taus, errs)))
    return rows


def write_truncation_csv(path, rows: Sequence[TruncationRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "k", "p", "tau", "remainder", "slope", "fit_residual"])
        for row in rows:
            for tau, err in zip(row.report.taus, row.report.errors):
                w.writerow([row.id, row.k, row.p, repr(tau), repr(err), f"{row.report.slope:.6f}", f"{row.report.residual:.6f}"])
