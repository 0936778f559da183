"""Experiment configuration: parsing, validation and hashing.

A config is one YAML (or JSON) mapping::

    schema_version: 1
    seed: 20240101
    case_id: 1
    process:
      beta: 1.0
      levy: {kind: brownian}            # or {kind: stable, alpha: 1.5, scale: 1.0}
      # diffusion: {preset: ou, theta: 1.0, domain: [-10, 10]}
      # diffusion: {table: coeffs.csv}  # columns x, a, c
    rebirth: {mode: full, atoms: [[0.0, 1.0]]}
    sim: {dt: 1.0e-3, t_max: 15.0}     # defaults for every Monte Carlo check
    thresholds: {z_max: 3.0}
    checks:
      - kernel_golden
      - {id: laplace_normalization, n: 20000}
    output_dir: results
    format: both                        # json | csv | both

Parameter precedence for a check is built-in default, then ``sim``, then
the per-check entry.  Every problem found is reported at once.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .. import diffusion_kernels as dk
from .. import levy_kernels as lk
from .. import verify as vf
from ..errors import ConfigError, RebirthLabError
from ..rebirth_kernels import BaseProcess, Measure, RebirthSpec
from .checks import DEFAULTS

SCHEMA_VERSION = 1

_TOP = {"schema_version", "seed", "case_id", "process", "rebirth", "sim", "thresholds", "checks",
        "output_dir", "format", "workers"}
_SIM = {"dt", "t_max", "epsilon", "n", "hitting_mode", "max_cycles", "method"}
_FORMATS = ("json", "csv", "both")

__all__ = ["ExperimentConfig", "load_config", "parse_config", "SCHEMA_VERSION"]


@dataclass
class ExperimentConfig:
    seed: int
    base: BaseProcess
    rebirth: RebirthSpec | None
    checks: list                      # [(check_id, overrides)]
    thresholds: vf.Thresholds
    output_dir: str = "results"
    format: str = "both"
    workers: int | None = None
    config_hash: str = ""
    raw: dict = field(default_factory=dict)


def _hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True, default=str).encode()).hexdigest()


def _positive(errors, where, key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
        errors.append(f"{where}.{key}: must be a positive number, got {value!r}")


def _levy(block, errors):
    kind = block.get("kind", "brownian")
    if kind == "brownian":
        return lk.LevyExponentSpec.brownian()
    if kind == "stable":
        try:
            return lk.LevyExponentSpec.stable(block["alpha"], block.get("scale", 1.0))
        except KeyError:
            errors.append("process.levy.alpha: required for a stable exponent")
            return None
    errors.append(f"process.levy.kind: unknown exponent {kind!r} (brownian, stable)")
    return None


def _diffusion(block, base_dir, errors):
    dom = tuple(block.get("domain", (-10.0, 10.0)))
    if "table" in block:
        path = os.path.join(base_dir, block["table"])
        try:
            with open(path, newline="") as fh:
                rows = [r for r in csv.DictReader(fh)]
            cols = [np.array([float(r[k]) for r in rows]) for k in ("x", "a", "c")]
        except (OSError, KeyError, ValueError) as exc:
            errors.append(f"process.diffusion.table: cannot read (x, a, c) from {path}: {exc}")
            return None
        return dk.DiffusionSpec.from_table(*cols)
    preset = block.get("preset")
    if preset == "bm":
        return dk.DiffusionSpec.bm(dom)
    if preset == "bm_drift":
        return dk.DiffusionSpec.bm_drift(block.get("drift", 0.0), dom)
    if preset == "ou":
        return dk.DiffusionSpec.ou(block.get("theta", 1.0), dom)
    errors.append(f"process.diffusion.preset: unknown preset {preset!r} (bm, bm_drift, ou)")
    return None


def _measure(block, errors, where):
    if "atoms" in block:
        try:
            locs, ws = zip(*block["atoms"])
            return Measure.from_atoms(locs, ws)
        except (TypeError, ValueError) as exc:
            errors.append(f"{where}.atoms: expected [[x, w], ...]: {exc}")
            return None
    dens = block.get("density")
    if isinstance(dens, dict) and dens.get("preset") == "uniform":
        return Measure.uniform(dens["lo"], dens["hi"], dens.get("n", 2001), dens.get("mass", 1.0))
    errors.append(f"{where}: needs atoms or density {{preset: uniform, lo, hi}}")
    return None


def parse_config(raw: dict, base_dir: str = ".") -> ExperimentConfig:
    """Validate a config mapping; raises :class:`ConfigError` listing every offending key."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    errors: list[str] = []
    for k in sorted(set(raw) - _TOP):
        errors.append(f"{k}: unknown top-level key")
    if raw.get("schema_version") != SCHEMA_VERSION:
        errors.append(f"schema_version: expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    seed = raw.get("seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        errors.append(f"seed: explicit nonnegative integer master seed required, got {seed!r}")
    fmt = raw.get("format", "both")
    if fmt not in _FORMATS:
        errors.append(f"format: must be one of {_FORMATS}, got {fmt!r}")
    workers = raw.get("workers")
    if workers is not None and (not isinstance(workers, int) or workers < 1):
        errors.append(f"workers: must be a positive integer, got {workers!r}")

    # process
    case_id = raw.get("case_id", 1)
    proc = raw.get("process") or {}
    levy = diff = None
    if "levy" in proc:
        levy = _levy(proc["levy"] or {}, errors)
    if "diffusion" in proc:
        diff = _diffusion(proc["diffusion"] or {}, base_dir, errors)
    if levy is None and diff is None and not any("process" in e for e in errors):
        if case_id in (1, 2, 3):
            levy = lk.LevyExponentSpec.brownian()
        else:
            errors.append("process: diffusion cases need a diffusion block")
    base = None
    try:
        base = BaseProcess(case_id, proc.get("beta", 1.0), levy=levy, diffusion=diff)
    except RebirthLabError as exc:
        errors.append(f"case_id/process: {exc}")

    rebirth = None
    rb = raw.get("rebirth")
    if rb:
        m = _measure(rb, errors, "rebirth")
        if m is not None:
            try:
                rebirth = RebirthSpec(rb.get("mode", "full"), m, rb.get("exile_label", "exile"))
            except RebirthLabError as exc:
                errors.append(f"rebirth: {exc}")

    sim = raw.get("sim") or {}
    for k in sorted(set(sim) - _SIM):
        errors.append(f"sim.{k}: unknown key")
    for k in ("dt", "t_max", "epsilon", "n"):
        if sim.get(k) is not None:
            _positive(errors, "sim", k, sim[k])

    thr_raw = raw.get("thresholds") or {}
    thresholds = vf.Thresholds()
    known = set(vf.Thresholds.__dataclass_fields__)
    for k in sorted(set(thr_raw) - known):
        errors.append(f"thresholds.{k}: unknown threshold")
    for k, v in thr_raw.items():
        if k in known:
            _positive(errors, "thresholds", k, v)
    try:
        thresholds = vf.Thresholds(**{k: v for k, v in thr_raw.items() if k in known})
    except (ConfigError, TypeError) as exc:
        errors.append(f"thresholds: {exc}")

    checks = []
    entries = raw.get("checks")
    if not entries:
        errors.append("checks: at least one check id is required")
    for i, entry in enumerate(entries or []):
        over = {}
        if isinstance(entry, str):
            cid = entry
        elif isinstance(entry, dict) and "id" in entry:
            over = {k: v for k, v in entry.items() if k != "id"}
            cid = entry["id"]
        else:
            errors.append(f"checks[{i}]: expected an id or a mapping with 'id'")
            continue
        if cid not in DEFAULTS:
            errors.append(f"checks[{i}]: unknown check id {cid!r}")
            continue
        allowed = set(DEFAULTS[cid]) | {"promote", "seed"}
        for k in sorted(set(over) - allowed):
            errors.append(f"checks[{i}].{k}: unknown parameter for {cid}")
        for k in ("n", "n_replicas", "n_bundles", "n_control", "rel_tol", "tolerance"):
            if k in over:
                _positive(errors, f"checks[{i}]", k, over[k])
        params = {k: v for k, v in sim.items() if k in DEFAULTS[cid]}
        params.update(over)
        checks.append((cid, params))
    if errors:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    return ExperimentConfig(seed, base, rebirth, checks, thresholds, raw.get("output_dir", "results"),
                            fmt, workers, _hash(raw), raw)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
    cfg = parse_config(raw, os.path.dirname(os.path.abspath(path)))
    if not os.path.isabs(cfg.output_dir):
        cfg.output_dir = os.path.join(os.path.dirname(os.path.abspath(path)), cfg.output_dir)
    return cfg
