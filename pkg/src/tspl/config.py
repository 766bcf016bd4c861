"""Experiment configuration: YAML schema, presets and validation."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .ensemble import parse_norm_id
from .operators import FlowField, ModelParams
from .spectral import ConfigurationError, TorusGrid
from .splitting import SchemeSpec, parse_order


def _check_keys(section: str, data: dict, allowed) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key(s) in [{section}]: {', '.join(unknown)}; allowed: {', '.join(sorted(allowed))}")


@dataclass
class GridSpec:
    N: int = 64
    L: float = 2 * math.pi


@dataclass
class ModelSpec:
    nu: float = 1.0
    flow: dict = field(default_factory=lambda: {"kind": "shear", "amplitude": 0.75})
    u0: dict = field(default_factory=lambda: {"kind": "paper"})


@dataclass
class LadderSpec:
    """Time steps ``tau = 2**-m`` for each exponent ``m``."""

    tau_exponents: list = field(default_factory=lambda: [4, 5, 6, 7, 8])
    n_members: int = 400

    @property
    def taus(self) -> list[float]:
        return [2.0 ** -m for m in self.tau_exponents]


@dataclass
class ReferenceSpec:
    tau_exponent: int = 12

    @property
    def tau_ref(self) -> float:
        return 2.0 ** -self.tau_exponent


@dataclass
class ExperimentConfig:
    preset: str = "custom"
    grid: GridSpec = field(default_factory=GridSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    schemes: list = field(default_factory=lambda: ["random", "fixed-ALR", "symmetric"])
    T: float = 1.0
    error: LadderSpec = field(default_factory=LadderSpec)
    bias: LadderSpec = field(default_factory=lambda: LadderSpec([3, 4, 5, 6], 2000))
    master_seed: int = 1
    norms: list = field(default_factory=lambda: ["W0,2", "W1,2"])
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    output_dir: str = "runs/out"
    batch_size: int = 250

    _SECTIONS = {"grid": GridSpec, "model": ModelSpec, "error": LadderSpec, "bias": LadderSpec, "reference": ReferenceSpec}

    # -- serialization

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ExperimentConfig:
        data = copy.deepcopy(data)
        top = {f.name for f in fields(cls)}
        _check_keys("top level", data, top)
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            sub = cls._SECTIONS.get(key)
            if sub is not None:
                if not isinstance(value, dict):
                    raise ConfigurationError(f"[{key}] must be a mapping")
                _check_keys(key, value, {f.name for f in fields(sub)})
                kwargs[key] = sub(**value)
            else:
                kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str) -> ExperimentConfig:
        data = yaml.safe_load(text) or {}
        if not isinstance(data, dict):
            raise ConfigurationError("configuration must be a mapping")
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        return cls.loads(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    def digest(self) -> str:
        """Hash of the physics-relevant settings (output location excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    # -- validation

    def validate(self) -> None:
        TorusGrid(self.grid.N, self.grid.L)
        if not (isinstance(self.model.nu, (int, float)) and self.model.nu > 0):
            raise ConfigurationError(f"model.nu must be positive (got {self.model.nu!r})")
        if not self.T > 0:
            raise ConfigurationError(f"T must be positive (got {self.T!r})")
        for name in self.schemes:
            scheme_spec(name, 1.0)
        for ladder_name in ("error", "bias"):
            ladder = getattr(self, ladder_name)
            ms = ladder.tau_exponents
            if not ms or any(int(m) != m for m in ms):
                raise ConfigurationError(f"{ladder_name}.tau_exponents must be integers (tau = 2**-m), got {ms!r}")
            if len(set(ms)) != len(ms):
                raise ConfigurationError(f"{ladder_name}.tau_exponents has duplicates: {ms!r}")
            if ladder.n_members < 1:
                raise ConfigurationError(f"{ladder_name}.n_members must be >= 1")
            if self.reference.tau_exponent < max(ms):
                raise ConfigurationError(
                    f"reference tau 2**-{self.reference.tau_exponent} must divide the smallest "
                    f"{ladder_name} step 2**-{max(ms)}; raise reference.tau_exponent to >= {max(ms)}"
                )
            tau_max = 2.0 ** -min(ms)
            if abs(self.T / tau_max - round(self.T / tau_max)) > 1e-12 * self.T / tau_max or self.T < tau_max:
                raise ConfigurationError(f"T={self.T} must be a multiple of the largest {ladder_name} step {tau_max}")
        for n in self.norms:
            try:
                k, p = parse_norm_id(n)
            except ValueError as exc:
                raise ConfigurationError(f"bad norm id {n!r}; use e.g. 'W0,2', 'W1,2', 'W0,inf'") from exc
            if k not in (0, 1) or p not in (2, math.inf):
                raise ConfigurationError(f"unsupported norm {n!r}")
        build_flow(self.model.flow, self.make_grid())
        build_u0(self.model.u0, self.make_grid())

    # -- builders

    def make_grid(self) -> TorusGrid:
        return TorusGrid(self.grid.N, self.grid.L)

    def make_params(self) -> ModelParams:
        grid = self.make_grid()
        return ModelParams(float(self.model.nu), build_flow(self.model.flow, grid))

    def make_u0(self) -> np.ndarray:
        return build_u0(self.model.u0, self.make_grid())

    @property
    def norm_tuples(self) -> tuple:
        return tuple(parse_norm_id(n) for n in self.norms)


def scheme_spec(name: str, tau: float, seed: int | None = None) -> SchemeSpec:
    """``random``, ``symmetric`` or ``fixed-XYZ`` (letters in application order)."""
    if name == "random":
        return SchemeSpec("random", tau, seed=seed)
    if name == "symmetric":
        return SchemeSpec("symmetric", tau)
    if name.startswith("fixed-"):
        try:
            return SchemeSpec("fixed", tau, order=parse_order(name[6:]))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc
    raise ConfigurationError(f"unknown scheme {name!r}; use random, symmetric or fixed-ALR style names")


def build_flow(spec: dict, grid: TorusGrid) -> FlowField:
    spec = dict(spec)
    kind = spec.pop("kind", None)
    makers = {"shear": FlowField.shear, "cellular": FlowField.cellular, "zero": FlowField.zero}
    if kind not in makers:
        raise ConfigurationError(f"unknown flow kind {kind!r}; choose from {sorted(makers)}")
    allowed = {"zero": set()}.get(kind, {"amplitude"})
    _check_keys("model.flow", spec, allowed)
    return makers[kind](grid, **spec)


def build_u0(spec: dict, grid: TorusGrid) -> np.ndarray:
    """Named initial data.

    * ``paper``: ``offset + sin_amp * sin x + exp(exp_amp * sin y)``,
    * ``band_limited``: the smooth test field of the truncation lab,
    * ``constant``: ``value`` everywhere.
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    X, Y = grid.coords
    if kind == "paper":
        _check_keys("model.u0", spec, {"offset", "sin_amp", "exp_amp"})
        p = {"offset": 1.0, "sin_amp": 0.5, "exp_amp": 0.7, **spec}
        return p["offset"] + p["sin_amp"] * np.sin(X) + np.exp(p["exp_amp"] * np.sin(Y))
    if kind == "band_limited":
        _check_keys("model.u0", spec, set())
        from .truncation import band_limited_field

        return band_limited_field(grid)
    if kind == "constant":
        _check_keys("model.u0", spec, {"value"})
        return np.full(grid.shape, float(spec.get("value", 0.0)))
    raise ConfigurationError(f"unknown u0 kind {kind!r}; choose from constant, band_limited, paper")


PRESETS: dict[str, dict] = {
    "paper-desk": {
        "preset": "paper-desk",
        "grid": {"N": 64, "L": 2 * math.pi},
        "error": {"tau_exponents": [4, 5, 6, 7, 8], "n_members": 400},
        "bias": {"tau_exponents": [3, 4, 5, 6], "n_members": 2000},
        "reference": {"tau_exponent": 12},
        "output_dir": "runs/paper-desk",
    },
    "paper-full": {
        "preset": "paper-full",
        "grid": {"N": 256, "L": 2 * math.pi},
        "error": {"tau_exponents": [4, 5, 6, 7, 8], "n_members": 10000},
        "bias": {"tau_exponents": [4, 5, 6, 7, 8], "n_members": 10000},
        "reference": {"tau_exponent": 14},
        "output_dir": "runs/paper-full",
    },
    "smoke": {
        "preset": "smoke",
        "grid": {"N": 16, "L": 2 * math.pi},
        "T": 0.25,
        "error": {"tau_exponents": [3, 4, 5, 6], "n_members": 8},
        "bias": {"tau_exponents": [3, 4, 5, 6], "n_members": 16},
        "reference": {"tau_exponent": 9},
        "output_dir": "runs/smoke",
    },
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; available: {', '.join(PRESETS)}")
    return ExperimentConfig.from_dict(PRESETS[name])
