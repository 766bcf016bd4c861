"""Monte Carlo ensembles, error statistics and stability/boundedness monitors.

For sample times ``t_0 .. t_N`` and member errors ``e[l, n]`` against the
reference solution::

    E_{k,2} = max_n  mean_l ||e[l, n]||_{k,2}
    B_{k,2} = max_n  ||mean_l e[l, n]||_{k,2}

Members are advanced in batches. Scalar sums use ``math.fsum`` and the mean
error fields a Neumaier-compensated accumulator, so the statistics do not
depend on member order beyond round-off.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .operators import ModelParams
from .reference import ExpMidpoint, coarse_times
from .splitting import (
    DivergenceError,
    PermutationStream,
    SchemeSpec,
    evolve,
    random_split_step_batch,
    step_sizes,
)

Norm = tuple[int, float]
DEFAULT_NORMS: tuple[Norm, ...] = ((0, 2), (1, 2))


def norm_id(norm: Norm) -> str:
    k, p = norm
    return f"W{k},{'inf' if p == math.inf else int(p)}"


def parse_norm_id(text: str) -> Norm:
    k, p = text.lstrip("W").split(",")
    return int(k), math.inf if p == "inf" else float(p)


class EnsembleFailure(RuntimeError):
    def __init__(self, failed: Sequence[int], step: int):
        self.failed = list(failed)
        super().__init__(f"{len(self.failed)} member(s) diverged (first at step {step}): {self.failed[:10]}")


class DegenerateProbeError(ValueError):
    pass


class NeumaierSum:
    """Compensated running sum of equally shaped arrays."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.comp = np.zeros(shape)
        self.count = 0

    def add(self, x: np.ndarray) -> None:
        t = self.total + x
        big = np.abs(self.total) >= np.abs(x)
        self.comp += np.where(big, (self.total - t) + x, (x - t) + self.total)
        self.total = t
        self.count += 1

    def merge(self, other: NeumaierSum) -> None:
        self.add(other.total)
        self.comp += other.comp
        self.count += other.count - 1

    def value(self) -> np.ndarray:
        return self.total + self.comp

    def mean(self) -> np.ndarray:
        return self.value() / self.count


def bias_mean_field(members: Sequence[np.ndarray]) -> np.ndarray:
    acc = NeumaierSum(np.shape(members[0]))
    for m in members:
        acc.add(np.asarray(m, dtype=float))
    return acc.mean()


@dataclass
class EnsembleConfig:
    n_members: int
    master_seed: int
    scheme: SchemeSpec
    params: ModelParams
    u0: np.ndarray
    T: float
    norms: tuple[Norm, ...] = DEFAULT_NORMS
    batch_size: int = 250
    threads: int = 1
    first_member: int = 0

    def __post_init__(self):
        if self.n_members < 1:
            raise ValueError("an ensemble needs at least one member")

    @property
    def sample_times(self) -> list[float]:
        return coarse_times(self.T, self.scheme.tau)


@dataclass
class EnsembleResult:
    """Statistics for one scheme and one time step."""

    scheme: str
    tau: float
    n_members: int
    times: list[float]
    E: dict[str, float]
    B: dict[str, float]
    E_series: dict[str, list[float]]
    B_series: dict[str, list[float]]
    noise: dict[str, float]
    member_errors: dict[str, np.ndarray] = field(repr=False)
    wallclock: float = 0.0


@dataclass
class _Partial:
    member_norms: dict[str, np.ndarray]  # (members, times)
    sq_norms: np.ndarray  # (members, times): ||e||_{0,2}^2
    sums: list[NeumaierSum]


def _run_batch(cfg: EnsembleConfig, members: Sequence[int], reference: Mapping[float, np.ndarray], times: list[float]) -> _Partial:
    grid = cfg.params.grid
    M = len(members)
    streams = [PermutationStream(cfg.master_seed, m) for m in members]
    U = np.repeat(np.asarray(cfg.u0, dtype=float)[None], M, axis=0)
    norms = {norm_id(nm): np.zeros((M, len(times))) for nm in cfg.norms}
    sq = np.zeros((M, len(times)))
    sums = [NeumaierSum(grid.shape) for _ in times]

    def record(n):
        err = U - reference[times[n]]
        for nm in cfg.norms:
            norms[norm_id(nm)][:, n] = grid.norm(err, *nm)
        sq[:, n] = np.sum(err * err, axis=(-2, -1)) * grid.h**2
        for e in err:
            sums[n].add(e)

    record(0)
    for n, dt in enumerate(step_sizes(cfg.T, cfg.scheme.tau), start=1):
        orders = [s.next_permutation() for s in streams]
        U = random_split_step_batch(U, orders, cfg.params, dt)
        bad = ~np.all(np.isfinite(U), axis=(-2, -1))
        if np.any(bad):
            raise EnsembleFailure([members[i] for i in np.flatnonzero(bad)], n)
        record(n)
    return _Partial(norms, sq, sums)


def _deterministic_partial(cfg: EnsembleConfig, reference, times) -> _Partial:
    grid = cfg.params.grid
    errs = []
    try:
        evolve(cfg.u0, cfg.scheme, cfg.params, cfg.T, observer=lambda n, t, u: errs.append(u - reference[times[n]]))
    except DivergenceError as exc:
        raise EnsembleFailure([0], exc.step) from exc
    E = np.array(errs)
    norms = {norm_id(nm): grid.norm(E, *nm)[None, :] for nm in cfg.norms}
    sums = []
    for e in E:
        s = NeumaierSum(grid.shape)
        s.add(e)
        sums.append(s)
    return _Partial(norms, (np.sum(E * E, axis=(-2, -1)) * grid.h**2)[None, :], sums)


def run_ensemble(cfg: EnsembleConfig, reference: Mapping[float, np.ndarray]) -> EnsembleResult:
    """Run the ensemble for one scheme and reduce it to ``E`` and ``B`` statistics.

    Deterministic schemes are integrated once; their ``E`` and ``B``
    coincide exactly.
    """
    start = time.perf_counter()
    grid = cfg.params.grid
    times = cfg.sample_times
    missing = [t for t in times if t not in reference]
    if missing:
        raise KeyError(f"reference lacks sample times {missing[:5]}")

    if cfg.scheme.deterministic:
        partials = [_deterministic_partial(cfg, reference, times)]
    else:
        ids = list(range(cfg.first_member, cfg.first_member + cfg.n_members))
        chunks = [ids[i:i + cfg.batch_size] for i in range(0, len(ids), cfg.batch_size)]
        if cfg.threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(cfg.threads) as pool:
                partials = list(pool.map(lambda c: _run_batch(cfg, c, reference, times), chunks))
        else:
            partials = [_run_batch(cfg, c, reference, times) for c in chunks]

    member_errors = {k: np.concatenate([p.member_norms[k] for p in partials]) for k in partials[0].member_norms}
    sq = np.concatenate([p.sq_norms for p in partials])
    sums = partials[0].sums
    for p in partials[1:]:
        for s, o in zip(sums, p.sums):
            s.merge(o)
    mean_fields = np.array([s.mean() for s in sums])
    n_eff = sq.shape[0]

    E_series, B_series, E, B, noise = {}, {}, {}, {}, {}
    for nm in cfg.norms:
        key = norm_id(nm)
        E_series[key] = [math.fsum(col) / n_eff for col in member_errors[key].T]
        B_series[key] = [float(v) for v in grid.norm(mean_fields, *nm)]
        E[key] = max(E_series[key])
        B[key] = max(B_series[key])
        n_star = int(np.argmax(B_series[key]))
        noise[key] = _noise(sq[:, n_star], float(grid.norm(mean_fields[n_star], 0, 2)), n_eff)
    return EnsembleResult(
        scheme=cfg.scheme.label,
        tau=cfg.scheme.tau,
        n_members=cfg.n_members,
        times=times,
        E=E,
        B=B,
        E_series=E_series,
        B_series=B_series,
        noise=noise,
        member_errors=member_errors,
        wallclock=time.perf_counter() - start,
    )


def _noise(sq_col: np.ndarray, mean_norm: float, n: int) -> float:
    """Standard error of the mean error field in discrete L2 at one time."""
    if n < 2:
        return 0.0
    spread = max(math.fsum(sq_col) - n * mean_norm**2, 0.0) / (n - 1)
    return math.sqrt(spread / n)


# -- stability


@dataclass
class StabilityReport:
    times: list[float]
    ratios: list[float]
    growth_rate: float
    norm: Norm

    def bound(self, t: float) -> float:
        return math.exp(self.growth_rate * t)

    def holds(self, rtol: float = 1e-12) -> bool:
        return all(r <= self.bound(t) * (1 + rtol) for t, r in zip(self.times, self.ratios))


def stability_probe(u0_a, u0_b, params: ModelParams, T: float, tau_ref: float = 2.0**-10, k: int = 0, p: float = 2, sample_every: int = 16) -> StabilityReport:
    """Amplification of the difference between two reference solutions.

    ``growth_rate`` is the smallest ``C`` with ``ratio(t) <= exp(C t)`` at
    every sampled ``t > 0``.
    """
    grid = params.grid
    d0 = float(grid.norm(np.asarray(u0_a) - np.asarray(u0_b), k, p))
    if d0 == 0:
        raise DegenerateProbeError("initial data coincide; the probe needs a nonzero perturbation")
    stepper = ExpMidpoint(params, tau_ref)
    ua, ub = np.asarray(u0_a, float), np.asarray(u0_b, float)
    times, ratios = [], []
    nsteps = round(T / tau_ref)
    for n in range(1, nsteps + 1):
        ua, ub = stepper.step(ua), stepper.step(ub)
        if n % sample_every == 0 or n == nsteps:
            times.append(n * tau_ref)
            ratios.append(float(grid.norm(ua - ub, k, p)) / d0)
    rate = max(math.log(r) / t for t, r in zip(times, ratios))
    return StabilityReport(times, ratios, rate, (k, p))


# -- boundedness


@dataclass
class NormSeries:
    """Per-step norms of ``u_n`` and of the intermediate sub-compositions."""

    tau: float
    norm: Norm
    steps: np.ndarray  # (members, N+1)
    stages: np.ndarray  # (members, N, n_stages)

    @property
    def sup(self) -> float:
        return float(max(np.max(self.steps), np.max(self.stages) if self.stages.size else -np.inf))

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.steps)) and np.all(np.isfinite(self.stages)))


def monitor_norms(u0, params: ModelParams, tau: float, T: float, seeds: Sequence[int], norm: Norm = (1, 2), master_seed: Optional[int] = None) -> NormSeries:
    """Norm series of random-splitting runs, one member per seed.

    With ``master_seed`` given, ``seeds`` are member indices of that master
    seed; otherwise each seed keys its own stream.
    """
    grid = params.grid
    if master_seed is None:
        streams = [PermutationStream(s) for s in seeds]
    else:
        streams = [PermutationStream(master_seed, s) for s in seeds]
    U = np.repeat(np.asarray(u0, dtype=float)[None], len(streams), axis=0)
    steps = [grid.norm(U, *norm)]
    stages = []
    for dt in step_sizes(T, tau):
        inter = []
        U = random_split_step_batch(U, [s.next_permutation() for s in streams], params, dt, stages=inter)
        steps.append(grid.norm(U, *norm))
        stages.append(np.stack([grid.norm(w, *norm) for w in inter], axis=-1))
    return NormSeries(tau, norm, np.stack(steps, axis=-1), np.stack(stages, axis=1))


@dataclass
class BoundednessReport:
    norm: Norm
    sup_by_tau: dict[float, float]
    finite: bool

    @property
    def variation(self) -> float:
        vals = list(self.sup_by_tau.values())
        return (max(vals) - min(vals)) / min(vals)

    def passes(self, slack: float = 0.10) -> bool:
        return self.finite and self.variation <= slack


def boundedness_monitor(u0, params: ModelParams, taus: Sequence[float], T: float, seeds: Sequence[int], norm: Norm = (1, 2)) -> BoundednessReport:
    """Sup over steps and sub-compositions, across seeds, for each ``tau``."""
    sups, finite = {}, True
    for tau in taus:
        series = monitor_norms(u0, params, tau, T, seeds, norm)
        finite &= series.finite
        sups[tau] = series.sup
    return BoundednessReport(norm, sups, finite)
