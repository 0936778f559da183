"""Command line: ``run``, ``list-checks``, ``dump-kernel``, ``simulate``, ``replay``.

Exit codes: 0 pass, 1 a hard check failed, 2 invalid config or input.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys

import numpy as np

from .. import bundle_io
from .. import diffusion_kernels as dk
from .. import levy_kernels as lk
from .. import path_engine as pe
from ..errors import BundleFormatError, ConfigError, RebirthLabError
from ..rebirth_kernels import (BaseProcess, Measure, RebirthKernel, RebirthSpec, f_of,
                               u_tilde0_partial, w_p)
from .checks import DEFAULTS, check_ids
from .config import load_config
from .runner import run_experiment

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

DESCRIPTIONS = {
    "kernel_golden": "Brownian kernels vs closed forms; C_2 = 1",
    "covariance_positive_definite": "min/max eigenvalue of every covariance family",
    "scalar_identities": "row integral of w^p, f <= u^p(y,y), killing transform",
    "spectral_precondition": "finiteness of the spectral integral for the base exponent",
    "local_time_normalization": "MC mean of one-cycle local time vs u^0(x,y)",
    "laplace_normalization": "MC Laplace functional of rebirthed local time vs w^p(x,y)",
    "partial_rebirth_normalization": "MC total local time under partial rebirth vs u~0(x,y)",
    "decomposition_exactness": "total vs per-cycle local time and the time-shift identity",
    "eisenbaum_isomorphism": "local time + shifted squared field vs weighted field",
    "conditional_independence": "cycles independent given an Exp(p) time in cycle r",
    "combined_identity": "rebirthed local time at an Exp(p) time vs weighted fields",
    "brownian_uniform_modulus": "uniform modulus ratio of a Brownian-type field",
    "chi_square_uniform_modulus": "uniform modulus ratio of a chi-square field",
    "chi_square_local_modulus": "local modulus ratio of a chi-square field",
    "local_time_uniform_modulus": "uniform modulus ratio of rebirthed local time",
    "joint_direction_modulus": "uniform modulus of a₀η₀ + a_pη_p over 8 directions",
}

_LEVY_KERNELS = ("u_beta", "v_beta", "frak_u0", "sigma2", "phi")
_DIFF_KERNELS = ("u_bar", "v_bar", "h_bar", "s_min")
_REBIRTH_KERNELS = ("w_p", "f_margin", "u_tilde0")


def _parse_grid(text: str) -> np.ndarray:
    """``lo:hi:step``, a comma list, or an empty string."""
    text = text.strip()
    if not text:
        return np.empty(0)
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            if not step > 0 or hi < lo:
                raise ValueError
            return np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"grid must be lo:hi:step or a comma list, got {text!r}") from None


def _parse_atoms(text: str) -> Measure:
    """``x:w,x:w,...``"""
    try:
        pairs = [tuple(float(v) for v in a.split(":")) for a in text.split(",") if a.strip()]
        locs, ws = zip(*pairs)
    except ValueError:
        raise ConfigError(f"atoms must be x:w,x:w,..., got {text!r}") from None
    return Measure.from_atoms(locs, ws)


def _add_model_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("base process")
    g.add_argument("--case", type=int, default=1, help="case id 1..6")
    g.add_argument("--beta", type=float, default=1.0, help="killing rate")
    g.add_argument("--levy", choices=("brownian", "stable"), default="brownian")
    g.add_argument("--alpha", type=float, default=1.5, help="stable index")
    g.add_argument("--scale", type=float, default=1.0, help="stable scale")
    g.add_argument("--diffusion", choices=("bm", "bm_drift", "ou"), default=None)
    g.add_argument("--theta", type=float, default=1.0, help="OU mean reversion")
    g.add_argument("--drift", type=float, default=0.0, help="constant drift")


def _base_from_args(a) -> BaseProcess:
    if a.case in (1, 2, 3):
        spec = lk.LevyExponentSpec.brownian() if a.levy == "brownian" else \
            lk.LevyExponentSpec.stable(a.alpha, a.scale)
        return BaseProcess(a.case, a.beta, levy=spec)
    name = a.diffusion or "bm"
    spec = {"bm": lambda: dk.DiffusionSpec.bm(),
            "bm_drift": lambda: dk.DiffusionSpec.bm_drift(a.drift),
            "ou": lambda: dk.DiffusionSpec.ou(a.theta)}[name]()
    return BaseProcess(a.case, a.beta, diffusion=spec)


# subcommands ------------------------------------------------------------------

def cmd_run(a) -> int:
    cfg = load_config(a.config)
    if a.output_dir:
        cfg.output_dir = a.output_dir
    man = run_experiment(cfg, workers=a.workers)
    for v in man.verdicts:
        tag = v["status"].upper()
        if not v["hard"]:
            tag += " (in band)" if v["pass"] else " (out of band)"
        print(f"{v['check']:<32} {tag}")
    print(f"manifest: {cfg.output_dir}/manifest.json")
    return EXIT_PASS if man.passed else EXIT_FAIL


def cmd_list(a) -> int:
    for cid in check_ids():
        kind = "informational" if "promote" in DEFAULTS[cid] else "hard"
        print(f"{cid:<32} {kind:<14} {DESCRIPTIONS[cid]}")
    return EXIT_PASS


def _kernel_rows(a, base: BaseProcess, grid: np.ndarray):
    """Yield ``(columns, evaluate(x) -> dict)`` for the requested kernel."""
    k, y0 = a.kernel, a.y
    if k in _LEVY_KERNELS:
        if base.levy is None:
            raise ConfigError(f"{k} needs a Lévy base (case 1..3)")
        s, b = base.levy, a.beta
        fn = {"u_beta": lambda x: lk.u_beta(s, b, x),
              "v_beta": lambda x: lk.v_beta(s, b, x, y0),
              "frak_u0": lambda x: lk.frak_u0(s, x, y0),
              "sigma2": lambda x: lk.sigma2(s, b, x),
              "phi": lambda x: lk.phi0(s, x)}[k]
        if k == "sigma2":
            return ["x", "value", "asymptotic"], \
                lambda x: {"value": fn(x), "asymptotic": lk.sigma2_asymptotic(s, x)}
        return ["x", "value"], lambda x: {"value": fn(x)}
    if k in _DIFF_KERNELS:
        if base.diffusion is None:
            raise ConfigError(f"{k} needs a diffusion base (case 4..6)")
        f = dk.solve_factors(base.diffusion, a.beta if k != "h_bar" else a.p)
        fn = {"u_bar": lambda x: dk.u_bar_beta(f, x, y0),
              "v_bar": lambda x: dk.v_bar_beta(f, x, y0),
              "h_bar": lambda x: dk.h_bar(f, x, y0),
              "s_min": lambda x: dk.frak_u0_diffusion(base.diffusion, x, y0)}[k]
        return ["x", "value"], lambda x: {"value": fn(x)}
    mu = _parse_atoms(a.mu)
    if k == "w_p":
        kern = RebirthKernel(base, mu, a.p)
        return ["x", "value", "value_swapped"], \
            lambda x: {"value": w_p(kern, x, y0), "value_swapped": w_p(kern, y0, x)}
    if k == "f_margin":
        def margin(x):
            f, u = float(f_of(base, mu, x, a.p)), float(base.potential(a.p, x, x))
            return {"f": f, "u_p_diag": u, "margin": u - f}
        return ["x", "f", "u_p_diag", "margin"], margin
    return ["x", "value"], lambda x: {"value": u_tilde0_partial(base, mu, x, y0)}


def cmd_dump(a) -> int:
    base = _base_from_args(a)
    grid = _parse_grid(a.grid)
    cols, ev = _kernel_rows(a, base, grid)
    n_err, asym = 0, 0.0
    with open(a.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ["status"])
        for x in grid:
            try:
                vals = {c: float(v) for c, v in ev(float(x)).items()}
                status = "ok"
            except RebirthLabError as exc:
                # keep going; the failing row is marked and its values left empty
                vals, status = {}, f"error: {type(exc).__name__}: {exc}"
                n_err += 1
            w.writerow([repr(float(x))] + [repr(vals[c]) if c in vals else "" for c in cols[1:]]
                       + [status])
            if "value_swapped" in vals:
                asym = max(asym, abs(vals["value"] - vals["value_swapped"]))
    report = {"kernel": a.kernel, "rows": int(grid.size), "errors": n_err, "output": a.output}
    if a.kernel == "w_p":
        report["max_asymmetry"] = asym
    print(json.dumps(report))
    return EXIT_FAIL if n_err else EXIT_PASS


def cmd_simulate(a) -> int:
    base = _base_from_args(a)
    cfg = pe.SimConfig(dt=a.dt, t_max=a.t_max, seed=a.seed,
                       hitting_mode=a.hitting_mode)
    if a.rebirth == "none":
        cyc = pe.simulate_base_path(base, a.x, cfg)
        zeta = np.array([] if cyc.death_cause == "horizon" else [cyc.end_time])
        bundle = pe.PathBundle([cyc], zeta, None, a.seed, (), False,
                               pe.model_of(base), cfg.t_max, cfg.dt)
    else:
        mu = _parse_atoms(a.mu)
        spec = RebirthSpec.full(mu) if a.rebirth == "full" else RebirthSpec.partial(mu)
        bundle = pe.simulate_rebirth(base, spec, a.x, cfg, stream=("cli",))
    bundle_io.save_bundle(bundle, a.output)
    if a.csv:
        bundle_io.export_csv(bundle, a.csv)
    print(json.dumps({"output": a.output, "cycles": len(bundle.cycles),
                      "end_time": bundle.end_time, "truncated": bundle.truncated}))
    return EXIT_PASS


def cmd_replay(a) -> int:
    bundle = bundle_io.load_bundle(a.bundle)
    levels = _parse_grid(a.levels)
    marks = _parse_grid(a.marks) if a.marks else None
    est = pe.estimate_local_time(bundle, levels, marks, epsilon=a.epsilon, method=a.method,
                                 per_cycle=a.check == "decomposition")
    out = {"check": a.check, "bundle": a.bundle, "method": a.method, "epsilon": est.epsilon,
           "levels": levels.tolist()}
    passed = True
    if a.check == "local_time":
        out["t_marks"] = est.t_marks.tolist()
        out["values"] = est.values.tolist()
    elif a.check == "decomposition":
        res = est.decomposition_residual
        passed = bool(res <= a.tolerance)
        out.update({"residual": res, "tolerance": a.tolerance})
    else:
        out["p"] = a.p
        out["values"] = [pe.laplace_functional(est, a.p, float(y)) for y in levels]
    out["pass"] = passed
    print(json.dumps(out, indent=2))
    return EXIT_PASS if passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rebirthlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the checks of a config file")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $REBIRTHLAB_WORKERS or 1)")
    p.add_argument("--output-dir", default=None)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("list-checks", help="list available check ids")
    p.set_defaults(fn=cmd_list)

    p = sub.add_parser("dump-kernel", help="evaluate a kernel on a grid and write CSV")
    p.add_argument("kernel", choices=_LEVY_KERNELS + _DIFF_KERNELS + _REBIRTH_KERNELS)
    p.add_argument("--grid", required=True, help="lo:hi:step, comma list, or '' for none")
    p.add_argument("--y", type=float, default=0.0, help="second argument of two-point kernels")
    p.add_argument("--p", type=float, default=1.0, help="rebirth / difference-kernel rate")
    p.add_argument("--mu", default="0:1", help="rebirth measure atoms x:w,...")
    p.add_argument("--output", "-o", required=True)
    _add_model_args(p)
    p.set_defaults(fn=cmd_dump)

    p = sub.add_parser("simulate", help="simulate a path bundle and save it")
    _add_model_args(p)
    p.add_argument("--rebirth", choices=("none", "full", "partial"), default="full")
    p.add_argument("--mu", default="0:1", help="rebirth measure atoms x:w,...")
    p.add_argument("--x", type=float, default=0.0, help="start point")
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hitting-mode", choices=("naive", "bridge_corrected"), default="naive")
    p.add_argument("--output", "-o", required=True)
    p.add_argument("--csv", default=None, help="also export cycle,time,state CSV")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("replay", help="re-run an estimator on a stored bundle")
    p.add_argument("bundle")
    p.add_argument("--check", choices=("local_time", "decomposition", "laplace"),
                   default="local_time")
    p.add_argument("--levels", default="-1:1:0.25", help="local-time levels")
    p.add_argument("--marks", default=None, help="time marks (death times always included)")
    p.add_argument("--method", choices=("occupation", "tanaka", "bridge"), default="occupation")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--tolerance", type=float, default=1e-12)
    p.set_defaults(fn=cmd_replay)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return a.fn(a)
    except (ConfigError, BundleFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RebirthLabError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
