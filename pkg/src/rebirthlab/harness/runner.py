"""Run a configured campaign and write verdicts, data tables and the manifest."""
from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import metadata

from .checks import RunContext, Verdict, run_check
from .config import ExperimentConfig

log = logging.getLogger(__name__)

__all__ = ["RunManifest", "run_experiment", "tool_version", "write_json_atomic"]


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0+unknown"


def write_json_atomic(obj, path) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    with os.fdopen(fd, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _write_csv(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["empty"])
        w.writeheader()
        w.writerows(rows)


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    started: str
    finished: str
    verdicts: list
    artifacts: list
    timing: dict

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.verdicts if v["hard"])

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "tool_version": self.tool_version,
                "started": self.started, "finished": self.finished, "passed": self.passed,
                "verdicts": self.verdicts, "artifacts": self.artifacts,
                "runtime_s": self.timing}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _emit_tables(v: Verdict, out: str, artifacts: list) -> None:
    data_dir = os.path.join(out, "data")
    os.makedirs(data_dir, exist_ok=True)
    for name, rows in v.tables.items():
        path = os.path.join(data_dir, f"{v.check}_{name}.csv")
        _write_csv(rows, path)
        artifacts.append(os.path.relpath(path, out))
    if "scales" in v.tables:
        # data-only plot descriptor; rendering is left to the reader
        desc = {"title": v.check, "kind": "line", "data": f"{v.check}_scales.csv",
                "x": {"column": "level", "label": "-log2 h"},
                "y": [{"column": "median"}, {"column": "q25", "style": "dashed"},
                      {"column": "q75", "style": "dashed"}],
                "reference_lines": [{"y": 1.0}] + [{"y": float(b), "style": "dotted"}
                                                   for b in v.params.get("band", [])]}
        path = os.path.join(data_dir, f"{v.check}_plot.json")
        write_json_atomic(desc, path)
        artifacts.append(os.path.relpath(path, out))


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> RunManifest:
    """Execute every configured check in order and persist the results.

    The manifest is written last, atomically.  Statistic fields depend only
    on the config and master seed; wall-clock data lives under
    ``started``, ``finished`` and ``runtime_s``.
    """
    out = cfg.output_dir
    os.makedirs(os.path.join(out, "verdicts"), exist_ok=True)
    workers = workers if workers is not None else cfg.workers
    started = _now()
    verdicts, artifacts, timing = [], [], {}
    for cid, params in cfg.checks:
        params = dict(params)
        seed = int(params.pop("seed", cfg.seed))
        ctx = RunContext(seed, cfg.base, cfg.rebirth, cfg.thresholds, workers)
        log.info("running %s", cid)
        v = run_check(cid, ctx, params)
        rec = v.record()
        verdicts.append(rec)
        timing[cid] = round(v.runtime_s, 3)
        path = os.path.join(out, "verdicts", f"{cid}.json")
        write_json_atomic(rec, path)
        artifacts.append(os.path.relpath(path, out))
        if cfg.format in ("csv", "both") and v.tables:
            _emit_tables(v, out, artifacts)
        log.info("%s: %s (%.1f s)", cid, v.status, v.runtime_s)
    man = RunManifest(cfg.config_hash, tool_version(), started, _now(), verdicts, artifacts, timing)
    write_json_atomic(man.to_dict(), os.path.join(out, "manifest.json"))
    return man
