"""Random, fixed-order and symmetric Trotter splitting integrators.

Orders are tuples of :class:`SemigroupId` in application order: the first
entry acts on the field first.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .operators import ModelParams
from .semigroups import SemigroupId, semigroup_step

PERMUTATIONS: tuple[tuple[SemigroupId, ...], ...] = tuple(
    itertools.permutations((SemigroupId.ADVECTION, SemigroupId.HEAT, SemigroupId.REACTION))
)

PRNG_IDENTITY = "numpy.random.Philox(4x64-10) keyed by SeedSequence(seed, spawn_key=(member,)); Fisher-Yates with 64-bit rejection"

_TWO64 = 1 << 64


class DivergenceError(FloatingPointError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite values at step {step}")


def order_label(order: Sequence[SemigroupId]) -> str:
    return "".join(SemigroupId(s).letter for s in order)


def parse_order(label: str) -> tuple[SemigroupId, ...]:
    order = tuple(SemigroupId.from_letter(c) for c in label)
    if sorted(order) != sorted(SemigroupId):
        raise ValueError(f"{label!r} is not a permutation of A, L, R")
    return order


class PermutationStream:
    """Seeded source of independent uniform orderings of (A, L, R).

    The sequence depends only on ``(seed, member)`` through numpy's
    SeedSequence hash and the Philox counter-based generator, both of which
    are platform independent.
    """

    def __init__(self, seed: int, member: Optional[int] = None):
        self.seed = int(seed)
        self.member = member
        spawn_key = () if member is None else (int(member),)
        ss = np.random.SeedSequence(self.seed, spawn_key=spawn_key)
        self._bitgen = np.random.Philox(ss)
        self.counter = 0

    def _below(self, n: int) -> int:
        limit = _TWO64 - _TWO64 % n
        while True:
            r = int(self._bitgen.random_raw())
            if r < limit:
                return r % n

    def next_permutation(self) -> tuple[SemigroupId, ...]:
        items = [SemigroupId.ADVECTION, SemigroupId.HEAT, SemigroupId.REACTION]
        for i in range(len(items) - 1, 0, -1):
            j = self._below(i + 1)
            items[i], items[j] = items[j], items[i]
        self.counter += 1
        return tuple(items)

    def take(self, n: int) -> list[tuple[SemigroupId, ...]]:
        return [self.next_permutation() for _ in range(n)]

    def __iter__(self):
        while True:
            yield self.next_permutation()


def next_permutation(stream: PermutationStream) -> tuple[SemigroupId, ...]:
    return stream.next_permutation()


def compose(u, order: Sequence[SemigroupId], params: ModelParams, tau: float, stages: Optional[list] = None) -> np.ndarray:
    """Apply the sub-flows of ``order`` in sequence, each over ``tau``.

    If ``stages`` is a list the intermediate results (all but the last) are
    appended to it.
    """
    w = np.asarray(u, dtype=float)
    for i, which in enumerate(order):
        w = semigroup_step(which, w, params, tau)
        if stages is not None and i < len(order) - 1:
            stages.append(w)
    return w


def random_split_step(u, params: ModelParams, tau: float, stream: PermutationStream, stages=None) -> np.ndarray:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    return compose(u, stream.next_permutation(), params, tau, stages)


def fixed_split_step(u, params: ModelParams, tau: float, order: Sequence[SemigroupId], stages=None) -> np.ndarray:
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    return compose(u, order, params, tau, stages)


def symmetric_split_step(u, params: ModelParams, tau: float, stages=None) -> np.ndarray:
    """``A(tau/2) L(tau/2) R(tau) L(tau/2) A(tau/2)``."""
    A, L, R = SemigroupId.ADVECTION, SemigroupId.HEAT, SemigroupId.REACTION
    w = np.asarray(u, dtype=float)
    plan = ((A, tau / 2), (L, tau / 2), (R, tau), (L, tau / 2), (A, tau / 2))
    for i, (which, dt) in enumerate(plan):
        w = semigroup_step(which, w, params, dt)
        if stages is not None and i < len(plan) - 1:
            stages.append(w)
    return w


def averaged_step(u, params: ModelParams, tau: float) -> np.ndarray:
    """Exact mean over all six orderings of one random step."""
    results = [compose(u, order, params, tau) for order in PERMUTATIONS]
    return mean_of(results)


def mean_of(fields) -> np.ndarray:
    """Fixed-order arithmetic mean: sum left to right, then divide."""
    total = np.zeros_like(fields[0])
    for f in fields:
        total = total + f
    return total / len(fields)


@dataclass(frozen=True)
class SchemeSpec:
    """``kind`` is ``"random"``, ``"fixed"`` or ``"symmetric"``."""

    kind: str
    tau: float
    order: Optional[tuple[SemigroupId, ...]] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in ("random", "fixed", "symmetric"):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau!r}")
        if self.kind == "fixed":
            if self.order is None:
                raise ValueError("a fixed scheme needs an order")
            order = parse_order(self.order) if isinstance(self.order, str) else tuple(self.order)
            object.__setattr__(self, "order", order)

    @property
    def label(self) -> str:
        if self.kind == "fixed":
            return f"fixed-{order_label(self.order)}"
        return self.kind

    @property
    def deterministic(self) -> bool:
        return self.kind != "random"


def step_count(T: float, tau: float) -> int:
    """``ceil(T/tau)`` robust to round-off in the ratio."""
    ratio = T / tau
    n = round(ratio)
    return n if abs(ratio - n) <= 1e-9 * max(1.0, ratio) else math.ceil(ratio)


def step_sizes(T: float, tau: float) -> list[float]:
    """Step durations; the last one is shortened when ``tau`` does not divide ``T``."""
    n = step_count(T, tau)
    sizes = [tau] * n
    sizes[-1] = T - (n - 1) * tau if abs(T / tau - n) > 1e-9 * max(1.0, T / tau) else tau
    return sizes


def evolve(
    u0,
    scheme: SchemeSpec,
    params: ModelParams,
    T: float,
    observer: Optional[Callable[[int, float, np.ndarray], None]] = None,
    stream: Optional[PermutationStream] = None,
    on_stages: Optional[Callable[[int, list], None]] = None,
) -> np.ndarray:
    """Run ``ceil(T/tau)`` steps and return the final field.

    ``observer(n, t_n, u_n)`` is called for ``n = 0 .. N``. ``on_stages(n,
    stages)`` receives the intermediate sub-compositions of the step that
    produced ``u_n``.
    """
    if not T >= scheme.tau * (1 - 1e-12):
        raise ValueError(f"horizon T={T!r} is shorter than one step tau={scheme.tau!r}")
    if scheme.kind == "random" and stream is None:
        stream = PermutationStream(0 if scheme.seed is None else scheme.seed)
    u = np.array(u0, dtype=float)
    t = 0.0
    if observer is not None:
        observer(0, t, u)
    for n, dt in enumerate(step_sizes(T, scheme.tau), start=1):
        stages = [] if on_stages is not None else None
        if scheme.kind == "random":
            u = random_split_step(u, params, dt, stream, stages)
        elif scheme.kind == "fixed":
            u = fixed_split_step(u, params, dt, scheme.order, stages)
        else:
            u = symmetric_split_step(u, params, dt, stages)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(n)
        t = t + dt
        if on_stages is not None:
            on_stages(n, stages)
        if observer is not None:
            observer(n, t, u)
    return u


def random_split_step_batch(U: np.ndarray, orders: Sequence[Sequence[SemigroupId]], params: ModelParams, tau: float, stages=None) -> np.ndarray:
    """One random step for a batch ``U[m]`` with per-member orderings.

    Members that share a sub-flow at a given position are advanced together.
    """
    U = np.array(U, dtype=float)
    codes = np.array([[int(s) for s in o] for o in orders])
    for pos in range(codes.shape[1]):
        for which in SemigroupId:
            idx = np.flatnonzero(codes[:, pos] == int(which))
            if idx.size:
                U[idx] = semigroup_step(which, U[idx], params, tau)
        if stages is not None and pos < codes.shape[1] - 1:
            stages.append(U.copy())
    return U
