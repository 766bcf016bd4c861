"""Orchestration behind the ``simulate`` and ``converge`` commands.

A run directory holds a ``manifest.json`` listing every file written with
its size and sha256. Re-running ``converge`` into the same directory skips
each (scheme, ladder, tau) entry already recorded for the same config
digest.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ExperimentConfig, scheme_spec
from .ensemble import EnsembleConfig, norm_id, run_ensemble
from .plotting import plot_convergence_csv
from .semigroups import RK4StabilityWarning
from .reference import coarse_times, read_snapshot, reference_trajectory, write_snapshot
from .splitting import PRNG_IDENTITY, PermutationStream, evolve
from .truncation import DegenerateFitError, fit_order

log = logging.getLogger(__name__)

CONVERGE_COLUMNS = ["tau", "norm_id", "E_stat", "B_stat", "n_members", "noise_estimate", "wallclock_s"]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    config_digest: str
    config: dict
    prng: str = PRNG_IDENTITY
    code_version: str = __version__
    entries: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    wallclock_s: float = 0.0

    @classmethod
    def load(cls, path) -> Optional[RunManifest]:
        path = Path(path)
        if not path.exists():
            return None
        return cls(**json.loads(path.read_text()))

    def save(self, path) -> None:
        path = Path(path)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True))
        os.replace(tmp, path)

    def record_file(self, root: Path, path: Path) -> None:
        rel = str(path.relative_to(root))
        self.files[rel] = {"size": path.stat().st_size, "sha256": sha256_file(path)}

    def is_intact(self, root, rel: str) -> bool:
        meta = self.files.get(rel)
        p = Path(root) / rel
        return meta is not None and p.exists() and p.stat().st_size == meta["size"] and sha256_file(p) == meta["sha256"]

    def problems(self, root) -> list[str]:
        """Files that are missing or differ from their recorded size/hash."""
        root = Path(root)
        out = []
        for rel, meta in self.files.items():
            p = root / rel
            if not p.exists():
                out.append(f"missing: {rel}")
            elif p.stat().st_size != meta["size"] or sha256_file(p) != meta["sha256"]:
                out.append(f"modified: {rel}")
        return out


@contextmanager
def _record_rk4_warnings(manifest: RunManifest):
    """Copy RK4 stability warnings into the manifest (they still reach the log)."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RK4StabilityWarning)
        try:
            yield
        finally:
            for w in caught:
                if issubclass(w.category, RK4StabilityWarning):
                    msg = str(w.message)
                    log.warning(msg)
                    if msg not in manifest.warnings:
                        manifest.warnings.append(msg)
                else:
                    warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)


# -- reference


def load_or_build_reference(cfg: ExperimentConfig, out: Path, times: list[float]) -> dict[float, np.ndarray]:
    """Reference snapshots at ``times``, cached as snapshot files under ``out/reference``."""
    ref_dir = out / "reference"
    tau_ref = cfg.reference.tau_ref
    cached: dict[float, np.ndarray] = {}
    if ref_dir.exists():
        for f in sorted(ref_dir.glob("*.tspl")):
            snap = read_snapshot(f)
            if (snap.N, snap.L, snap.nu, snap.tau_ref) == (cfg.grid.N, float(cfg.grid.L), float(cfg.model.nu), tau_ref):
                cached[snap.t] = snap.values
    if all(t in cached for t in times):
        return cached
    log.info("building reference with tau_ref=2^-%d up to T=%g", cfg.reference.tau_exponent, cfg.T)
    grid = cfg.make_grid()
    ref = reference_trajectory(cfg.make_u0(), cfg.make_params(), tau_ref, cfg.T, times)
    ref_dir.mkdir(parents=True, exist_ok=True)
    for i, t in enumerate(sorted(ref)):
        write_snapshot(ref_dir / f"ref_{round(t / tau_ref):08d}.tspl", ref[t], grid, cfg.model.nu, tau_ref, t)
    return ref


# -- converge


def _entry_key(scheme: str, role: str, m: int) -> str:
    return f"{scheme}/{role}/m{m}"


def ladders_for(cfg: ExperimentConfig, scheme: str) -> dict:
    if scheme == "random":
        return {"error": cfg.error, "bias": cfg.bias}
    return {"error": cfg.error}


def run_converge(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> RunManifest:
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    man_path = out / "manifest.json"
    manifest = RunManifest.load(man_path)
    if manifest is None or manifest.config_digest != cfg.digest():
        if manifest is not None:
            log.warning("config changed; discarding previous results in %s", out)
        manifest = RunManifest(cfg.digest(), cfg.to_dict())
    start = time.perf_counter()
    (out / "config.yaml").write_text(cfg.dumps())
    manifest.record_file(out, out / "config.yaml")

    all_ms = [m for s in cfg.schemes for ladder in ladders_for(cfg, s).values() for m in ladder.tau_exponents]
    times = coarse_times(cfg.T, 2.0 ** -max(all_ms))
    reference = None
    params = cfg.make_params()
    u0 = cfg.make_u0()
    entry_dir = out / "entries"
    entry_dir.mkdir(exist_ok=True)

    for scheme in cfg.schemes:
        for role, ladder in ladders_for(cfg, scheme).items():
            rows = []
            for m in ladder.tau_exponents:
                key = _entry_key(scheme, role, m)
                path = entry_dir / (key.replace("/", "_") + ".json")
                rel = str(path.relative_to(out))
                if key in manifest.entries and manifest.is_intact(out, rel):
                    log.info("skip %s (already complete)", key)
                else:
                    if reference is None:
                        reference = load_or_build_reference(cfg, out, times)
                    tau = 2.0 ** -m
                    ecfg = EnsembleConfig(
                        n_members=ladder.n_members,
                        master_seed=cfg.master_seed,
                        scheme=scheme_spec(scheme, tau),
                        params=params,
                        u0=u0,
                        T=cfg.T,
                        norms=cfg.norm_tuples,
                        batch_size=cfg.batch_size,
                        threads=threads,
                    )
                    with _record_rk4_warnings(manifest):
                        res = run_ensemble(ecfg, reference)
                    payload = {
                        "key": key,
                        "tau": tau,
                        "n_members": res.n_members,
                        "E": res.E,
                        "B": res.B,
                        "noise": res.noise,
                        "wallclock_s": res.wallclock,
                    }
                    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
                    manifest.entries[key] = rel
                    manifest.record_file(out, path)
                    manifest.save(man_path)
                    log.info("%s: E=%s B=%s (%.1fs)", key, res.E, res.B, res.wallclock)
                rows.append(json.loads(path.read_text()))
            csv_path = out / f"converge_{scheme}_{role}.csv"
            write_converge_csv(csv_path, rows)
            manifest.record_file(out, csv_path)
            manifest.slopes.update(fit_slopes(scheme, role, rows))
            for svg in plot_convergence_csv(csv_path, out / "plots"):
                manifest.record_file(out, svg)
            manifest.save(man_path)
    manifest.wallclock_s += time.perf_counter() - start
    manifest.save(man_path)
    return manifest


def write_converge_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CONVERGE_COLUMNS)
        for r in sorted(rows, key=lambda r: -r["tau"]):
            for norm in r["E"]:
                w.writerow([repr(r["tau"]), norm, repr(r["E"][norm]), repr(r["B"][norm]), r["n_members"], repr(r["noise"][norm]), f"{r['wallclock_s']:.3f}"])


def fit_slopes(scheme: str, role: str, rows: list[dict]) -> dict:
    out = {}
    taus = [r["tau"] for r in rows]
    for norm in rows[0]["E"]:
        for stat in ("E", "B"):
            try:
                rep = fit_order(taus, [r[stat][norm] for r in rows])
            except DegenerateFitError:
                continue
            out[f"{scheme}/{role}/{stat}/{norm}"] = {"slope": rep.slope, "residual": rep.residual}
    return out


# -- simulate


def run_simulate(cfg: ExperimentConfig, scheme: str, seed: int, tau: Optional[float] = None, out_dir=None) -> RunManifest:
    """One trajectory: snapshot per step plus a CSV of norms."""
    tau = tau if tau is not None else cfg.error.taus[0]
    spec = scheme_spec(scheme, tau, seed)
    out = Path(out_dir or cfg.output_dir) / f"simulate_{spec.label}_tau{tau!r}_seed{seed}"
    snaps = out / "snapshots"
    snaps.mkdir(parents=True, exist_ok=True)
    grid = cfg.make_grid()
    params = cfg.make_params()
    manifest = RunManifest(cfg.digest(), cfg.to_dict())
    norms = [(0, 2), (1, 2), (0, math.inf)]
    rows = []

    def observer(n, t, u):
        path = snaps / f"u_{n:06d}.tspl"
        write_snapshot(path, u, grid, cfg.model.nu, tau, t)
        manifest.record_file(out, path)
        rows.append([n, repr(t)] + [repr(float(grid.norm(u, *nm))) for nm in norms])

    start = time.perf_counter()
    stream = PermutationStream(seed) if spec.kind == "random" else None
    with _record_rk4_warnings(manifest):
        evolve(cfg.make_u0(), spec, params, cfg.T, observer=observer, stream=stream)
    csv_path = out / "norms.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "t"] + [norm_id(nm) for nm in norms])
        w.writerows(rows)
    manifest.record_file(out, csv_path)
    manifest.wallclock_s = time.perf_counter() - start
    manifest.save(out / "manifest.json")
    return manifest
