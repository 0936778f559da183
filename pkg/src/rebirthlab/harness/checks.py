"""Registry of verification checks runnable from a config file.

Each check takes a :class:`RunContext` and a parameter dict (defaults are
filled in from :data:`DEFAULTS`) and returns a :class:`Verdict`.  Hard
checks decide the exit status; modulus checks are band/trend reports and
stay informational unless ``promote`` is set.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .. import diffusion_kernels as dk
from .. import levy_kernels as lk
from .. import path_engine as pe
from .. import verify as vf
from ..errors import ConfigError
from ..rebirth_kernels import (BaseProcess, Measure, RebirthKernel, RebirthSpec, f_of,
                               killing_laplace, w_p)
from ..rng import derive_rng

__all__ = ["Verdict", "RunContext", "CHECKS", "DEFAULTS", "run_check", "check_ids"]


@dataclass
class Verdict:
    check: str
    passed: bool
    statistic: float
    threshold: float
    params: dict
    seed: int
    hard: bool = True
    status: str = ""
    details: dict = field(default_factory=dict)
    sub_tests: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def __post_init__(self):
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    def record(self) -> dict:
        """JSON-safe verdict; ``runtime_s`` is kept apart from the statistics."""
        return vf._clean({"check": self.check, "status": self.status, "pass": self.passed,
                          "hard": self.hard, "statistic": self.statistic,
                          "threshold": self.threshold, "params": self.params, "seed": self.seed,
                          "details": self.details, "sub_tests": self.sub_tests})


@dataclass
class RunContext:
    seed: int
    base: BaseProcess
    rebirth: RebirthSpec | None
    thresholds: vf.Thresholds = vf.Thresholds()
    workers: int | None = None


def _from_test(cid, t: vf.DistributionalTest, params, seed, controls=()) -> Verdict:
    """Verdict of a distributional test plus negative controls that must fail."""
    subs = [t.to_record()]
    ok = t.passed
    for c in controls:
        rec = c.to_record()
        rec["expected"] = "fail"
        rec["control_ok"] = not c.passed and c.status != "infeasible"
        ok = ok and rec["control_ok"]
        subs.append(rec)
    status = t.status if t.status in ("infeasible", "degenerate") else ("pass" if ok else "fail")
    return Verdict(cid, ok, t.statistic, t.threshold, params, seed, status=status,
                   details=t.details, sub_tests=subs)


def _sim(params, **over) -> pe.SimConfig:
    keys = ("dt", "t_max", "epsilon", "max_cycles", "hitting_mode")
    kw = {k: params[k] for k in keys if k in params and params[k] is not None}
    kw.update(over)
    return pe.SimConfig(**kw)


# kernel suites -------------------------------------------------------------

def kernel_golden(ctx: RunContext, prm: dict) -> Verdict:
    """Brownian kernels against closed forms, and ``C_2 = 1``."""
    spec = lk.LevyExponentSpec.brownian()
    rng = derive_rng(ctx.seed, "kernel_golden")
    n = int(prm["n_points"])
    x = rng.uniform(-4.0, 4.0, n)
    # v^β vanishes across 0 for continuous paths, so its pairs share a sign
    sgn = rng.choice([-1.0, 1.0], n)
    xa, ya = sgn * rng.uniform(0.05, 4.0, n), sgn * rng.uniform(0.05, 4.0, n)
    y = rng.uniform(-4.0, 4.0, n)
    worst = {}
    for beta in prm["betas"]:
        k = math.sqrt(2.0 * beta)
        u = lambda z: np.exp(-k * np.abs(z)) / k
        pairs = {
            "u_beta": (lk.u_beta(spec, beta, x), u(x)),
            "v_beta": (lk.v_beta(spec, beta, xa, ya), u(xa - ya) - u(xa) * u(ya) / u(0.0)),
            "sigma2_beta": (lk.sigma2(spec, beta, x), 2.0 * (u(0.0) - u(x))),
        }
        for name, (num, ref) in pairs.items():
            rel = float(np.max(np.abs(num - ref) / np.abs(ref)))
            worst[f"{name}[beta={beta}]"] = rel
    worst["phi"] = float(np.max(np.abs(lk.phi0(spec, x) - np.abs(x)) / np.abs(x)))
    worst["sigma2_0"] = float(np.max(np.abs(lk.sigma2(spec, 0.0, x) - 2.0 * np.abs(x))
                                     / (2.0 * np.abs(x))))
    ref = np.abs(x) + np.abs(y) - np.abs(x - y)
    nz = np.abs(ref) > 1e-12
    worst["frak_u0"] = float(np.max(np.abs(lk.frak_u0(spec, x, y) - ref)[nz] / np.abs(ref[nz])))
    worst["c_2"] = abs(lk.c_r(2.0) - 1.0)
    stat = max(worst.values())
    return Verdict("kernel_golden", stat <= prm["rel_tol"], stat, prm["rel_tol"], prm, ctx.seed,
                   details={"max_rel_error": worst, "n_points": n})


def _random_grids(rng, n_grids, n, lo, hi):
    return [np.sort(rng.uniform(lo, hi, n)) for _ in range(n_grids)]


def positive_definiteness(ctx: RunContext, prm: dict) -> Verdict:
    """Smallest eigenvalue relative to the largest for every covariance family."""
    rng = derive_rng(ctx.seed, "covariance_positive_definite")
    ng, n = int(prm["n_grids"]), int(prm["n_points"])
    beta, p = float(prm["beta"]), float(prm["p"])
    full = _random_grids(rng, ng, n, -3.0, 3.0)
    pos = _random_grids(rng, ng, n, 0.01, 3.0)
    mats: dict[str, Callable] = {}
    for label, spec in (("brownian", lk.LevyExponentSpec.brownian()),
                        ("stable1.5", lk.LevyExponentSpec.stable(1.5, 1.0))):
        mats[f"{label}.u_beta"] = (lambda g, s=spec: lk.kernel_matrix(s, "u", g, beta), full)
        mats[f"{label}.v_beta"] = (lambda g, s=spec: lk.kernel_matrix(s, "v", g, beta), full)
        mats[f"{label}.frak_u0"] = (lambda g, s=spec: lk.kernel_matrix(s, "frak_u0", g), full)
    for label, spec in (("ou", dk.DiffusionSpec.ou(1.0)), ("bm_drift", dk.DiffusionSpec.bm_drift(-0.5))):
        fb, fp = dk.solve_factors(spec, beta), dk.solve_factors(spec, p)
        mats[f"{label}.u_bar"] = (lambda g, f=fb: dk.kernel_matrix("u_bar", g, factors=f), full)
        mats[f"{label}.v_bar"] = (lambda g, f=fb: dk.kernel_matrix("v_bar", g, factors=f), pos)
        mats[f"{label}.s_min"] = (lambda g, s=spec: dk.kernel_matrix("s_min", g, spec=s), pos)
        mats[f"{label}.h_bar"] = (lambda g, f=fp: dk.kernel_matrix("h_bar", g, factors=f), pos)
    ratios = {}
    for name, (make, grids) in mats.items():
        worst = math.inf
        for g in grids:
            w = np.linalg.eigvalsh(make(g))
            worst = min(worst, float(w[0] / w[-1]))
        ratios[name] = worst
    stat = min(ratios.values())
    thr = -float(prm["tolerance"])
    return Verdict("covariance_positive_definite", stat >= thr, stat, thr, prm, ctx.seed,
                   details={"min_eig_over_max": ratios})


def scalar_identities(ctx: RunContext, prm: dict) -> Verdict:
    """Row integral of ``w^p``, ``f ≤ u^p(y,y)`` and the killing transform."""
    spec = lk.LevyExponentSpec.brownian()
    mu = Measure.dirac(0.0)
    x0 = float(prm["x"])
    rows, laps = {}, {}
    for beta, p in prm["beta_p_pairs"]:
        base = BaseProcess(1, beta, levy=spec)
        kern = RebirthKernel(base, mu, p)
        g = lambda y: float(w_p(kern, x0, y))
        a, b = sorted((0.0, x0))
        total = sum(integrate.quad(g, lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)[0]
                    for lo, hi in ((-np.inf, a), (a, b), (b, np.inf)) if lo < hi)
        rows[f"{beta},{p}"] = abs(total * p - 1.0)
        xs = np.linspace(-2.0, 2.0, 9)
        laps[f"{beta},{p}"] = float(np.max(np.abs(killing_laplace(base, p, xs) - beta / (beta + p))))
    rng = derive_rng(ctx.seed, "scalar_identities")
    base = BaseProcess(1, float(prm["beta"]), levy=spec)
    p = float(prm["p"])
    ygrid = np.linspace(-3.0, 3.0, 41)
    margins = []
    for _ in range(int(prm["n_measures"])):
        k = int(rng.integers(1, 5))
        m = Measure.from_atoms(rng.uniform(-2.0, 2.0, k), rng.dirichlet(np.ones(k)))
        margins.append(float(np.min(base.potential(p, ygrid, ygrid) - f_of(base, m, ygrid, p))))
    row_err, lap_err, margin = max(rows.values()), max(laps.values()), min(margins)
    ok = row_err <= prm["row_tol"] and lap_err <= prm["laplace_tol"] and margin >= -1e-12
    return Verdict("scalar_identities", ok, row_err, prm["row_tol"], prm, ctx.seed,
                   details={"row_integral_rel_error": rows, "killing_laplace_error": laps,
                            "f_margin_min": margins})


def spectral_precondition(ctx: RunContext, prm: dict) -> Verdict:
    if ctx.base.levy is None:
        return Verdict("spectral_precondition", True, 0.0, math.inf, prm, ctx.seed,
                       status="not_applicable")
    res = vf.spectral_precondition(ctx.base.levy, float(prm["beta"]))
    return Verdict("spectral_precondition", res["finite"], res["value"], math.inf, prm, ctx.seed,
                   details=res)


# Monte Carlo ------------------------------------------------------------------

def local_time_normalization(ctx: RunContext, prm: dict) -> Verdict:
    cfg = _sim(prm, seed=ctx.seed)
    t = vf.check_normalizations(ctx.base, None, prm["x"], prm["y"], None, int(prm["n"]), cfg,
                                method=prm["method"], epsilon=prm["epsilon"],
                                thresholds=ctx.thresholds, workers=ctx.workers,
                                check_id="local_time_normalization")
    return _from_test("local_time_normalization", t, prm, ctx.seed)


def _measure(prm, key, default):
    atoms = prm.get(key) or default
    locs, ws = zip(*atoms)
    return Measure.from_atoms(locs, ws)


def laplace_normalization(ctx: RunContext, prm: dict) -> Verdict:
    cfg = _sim(prm, seed=ctx.seed)
    rebirth = ctx.rebirth if (ctx.rebirth is not None and ctx.rebirth.mode == "full") else \
        RebirthSpec.full(_measure(prm, "mu_atoms", [[0.0, 1.0]]))
    t = vf.check_normalizations(ctx.base, rebirth, prm["x"], prm["y"], prm["p"], int(prm["n"]),
                                cfg, method=prm["method"], epsilon=prm["epsilon"],
                                thresholds=ctx.thresholds, workers=ctx.workers,
                                check_id="laplace_normalization")
    return _from_test("laplace_normalization", t, prm, ctx.seed)


def partial_rebirth_normalization(ctx: RunContext, prm: dict) -> Verdict:
    cfg = _sim(prm, seed=ctx.seed)
    rebirth = ctx.rebirth if (ctx.rebirth is not None and ctx.rebirth.mode == "partial") else \
        RebirthSpec.partial(_measure(prm, "nu_atoms", [[1.0, 0.5]]))
    t = vf.check_normalizations(ctx.base, rebirth, prm["x"], prm["y"], None, int(prm["n"]), cfg,
                                method=prm["method"], epsilon=prm["epsilon"],
                                thresholds=ctx.thresholds, workers=ctx.workers,
                                check_id="partial_rebirth_normalization")
    return _from_test("partial_rebirth_normalization", t, prm, ctx.seed)


def decomposition_exactness(ctx: RunContext, prm: dict) -> Verdict:
    """Total minus per-cycle local time, and the time-shift identity."""
    cfg = _sim(prm, seed=ctx.seed)
    rebirth = RebirthSpec.full(_measure(prm, "mu_atoms", [[0.0, 1.0]]))
    y = np.linspace(*prm["y_range"], int(prm["n_levels"]))
    marks = np.asarray(prm["t_marks"], dtype=float)
    decomp, shift, monotone = 0.0, 0.0, True
    for j in range(int(prm["n_bundles"])):
        b = pe.simulate_rebirth(ctx.base, rebirth, prm["x"], cfg,
                                stream=("decomposition_exactness", j))
        for method in prm["methods"]:
            est = pe.estimate_local_time(b, y, marks, epsilon=prm["epsilon"], method=method,
                                         base=ctx.base)
            decomp = max(decomp, est.decomposition_residual)
            monotone &= bool(np.all(np.diff(est.values, axis=1) >= -1e-15))
            if j >= int(prm["n_shift_bundles"]):
                continue
            rng = derive_rng(ctx.seed, "decomposition_exactness", "split", j)
            steps = np.concatenate([c.times[:-1] for c in b.cycles])
            for s in rng.choice(steps, int(prm["n_splits"])):
                sb = pe.shift_bundle(b, float(s))
                es = pe.estimate_local_time(sb, y, epsilon=prm["epsilon"], method=method,
                                            base=ctx.base, per_cycle=False)
                for t in marks:
                    gap = est.at(s + t) - est.at(s) - es.at(t)
                    shift = max(shift, float(np.max(np.abs(gap))))
    tol = float(prm["tolerance"])
    stat = max(decomp, shift)
    return Verdict("decomposition_exactness", stat <= tol and monotone, stat, tol, prm, ctx.seed,
                   details={"decomposition_residual": decomp, "shift_residual": shift,
                            "monotone_in_t": monotone})


def eisenbaum_isomorphism(ctx: RunContext, prm: dict) -> Verdict:
    cfg = _sim(prm, seed=ctx.seed)
    kw = dict(method=prm["method"], epsilon=prm["epsilon"], thresholds=ctx.thresholds,
              workers=ctx.workers)
    t = vf.check_eisenbaum(ctx.base, prm["y"], prm["s"], prm["grid"], int(prm["n"]), cfg,
                           s_trend=prm["s_trend"], **kw)
    controls = []
    if prm["negative_control"]:
        controls.append(vf.check_eisenbaum(ctx.base, prm["y"], prm["s"], prm["grid"],
                                           int(prm["n_control"]), cfg, weighted=False,
                                           s_trend=None, check_id="eisenbaum_isomorphism.control",
                                           **kw))
    return _from_test("eisenbaum_isomorphism", t, prm, ctx.seed, controls)


def conditional_independence(ctx: RunContext, prm: dict) -> Verdict:
    cfg = _sim(prm, seed=ctx.seed)
    mu = ctx.rebirth.measure if (ctx.rebirth is not None and ctx.rebirth.mode == "full") else \
        _measure(prm, "mu_atoms", [[0.0, 1.0]])
    kw = dict(p=prm["p"], y=prm["y"], method=prm["method"], epsilon=prm["epsilon"],
              thresholds=ctx.thresholds, workers=ctx.workers)
    t = vf.check_conditional_independence(ctx.base, mu, int(prm["r"]), prm["grid"], int(prm["n"]),
                                          cfg, **kw)
    controls = []
    if prm["negative_control"]:
        controls.append(vf.check_conditional_independence(
            ctx.base, mu, int(prm["r"]), prm["grid"], int(prm["n_control"]), cfg, corrupt=True,
            check_id="conditional_independence.control", **kw))
    return _from_test("conditional_independence", t, prm, ctx.seed, controls)


def combined_identity(ctx: RunContext, prm: dict) -> Verdict:
    cfg = _sim(prm, seed=ctx.seed)
    mu = ctx.rebirth.measure if (ctx.rebirth is not None and ctx.rebirth.mode == "full") else \
        _measure(prm, "mu_atoms", [[0.0, 1.0]])
    kw = dict(p=prm["p"], y=prm["y"], method=prm["method"], epsilon=prm["epsilon"],
              thresholds=ctx.thresholds, workers=ctx.workers)
    t = vf.check_combined_identity(ctx.base, mu, int(prm["r"]), prm["s"], prm["grid"],
                                   int(prm["n"]), cfg, **kw)
    controls = []
    if prm["negative_control"]:
        controls.append(vf.check_combined_identity(
            ctx.base, mu, int(prm["r"]), prm["s"], prm["grid"], int(prm["n_control"]), cfg,
            wrong_covariance=True, check_id="combined_identity.control", **kw))
    return _from_test("combined_identity", t, prm, ctx.seed, controls)


# moduli -------------------------------------------------------------------------

def _modulus_verdict(cid, rep: vf.ModulusReport, prm, seed, extra_ok=True) -> Verdict:
    promote = bool(prm.get("promote"))
    ok = rep.in_band and extra_ok
    tables = {
        "scales": [{"level": float(k), "h": float(h), "median": float(m), "q25": float(q[0]),
                    "q75": float(q[1])}
                   for k, h, m, q in zip(rep.levels, rep.scales, rep.median, rep.quartiles)],
        "replicas": [{"replica": j, "level": float(k), "ratio": float(v)}
                     for i, k in enumerate(rep.levels) for j, v in enumerate(rep.ratio_stats[i])],
    }
    return Verdict(cid, ok, float(rep.median[-1]), float("nan"), prm, seed, hard=promote,
                   status=("pass" if ok else "fail") if promote else "informational",
                   details=rep.to_record(), tables=tables)


def brownian_uniform_modulus(ctx: RunContext, prm: dict) -> Verdict:
    rep = vf.brownian_field_modulus(int(prm["n_replicas"]), int(prm["k_max"]), int(prm["k_min"]),
                                    ctx.seed, tuple(prm["band"]))
    return _modulus_verdict("brownian_uniform_modulus", rep, prm, ctx.seed)


def chi_square_uniform_modulus(ctx: RunContext, prm: dict) -> Verdict:
    rep = vf.chi_square_modulus("uniform", int(prm["k"]), int(prm["n_replicas"]),
                                int(prm["k_max"]), int(prm["k_min"]), seed=ctx.seed,
                                band=tuple(prm["band"]))
    toward = rep.details["distance_to_one_slope"] <= 0.0
    return _modulus_verdict("chi_square_uniform_modulus", rep, prm, ctx.seed, toward)


def chi_square_local_modulus(ctx: RunContext, prm: dict) -> Verdict:
    rep = vf.chi_square_modulus("local", int(prm["k"]), int(prm["n_replicas"]), int(prm["k_max"]),
                                int(prm["k_min"]), d=float(prm["d"]), window=float(prm["window"]),
                                seed=ctx.seed, band=tuple(prm["band"]))
    return _modulus_verdict("chi_square_local_modulus", rep, prm, ctx.seed,
                            rep.details["median_nondecreasing"])


def local_time_uniform_modulus(ctx: RunContext, prm: dict) -> Verdict:
    rep = vf.local_time_modulus(int(prm["n_replicas"]), float(prm["h"]), tuple(prm["interval"]),
                                float(prm["dt"]), float(prm["p"]), ctx.seed, prm["method"],
                                prm["epsilon"], tuple(prm["band"]))
    return _modulus_verdict("local_time_uniform_modulus", rep, prm, ctx.seed)


def joint_direction_modulus(ctx: RunContext, prm: dict) -> Verdict:
    """Uniform modulus of ``a₀η₀ + a_pη_p`` over a finite set of directions."""
    lo, hi = prm["band"]
    reps = vf.joint_direction_modulus(int(prm["n_replicas"]), int(prm["k_max"]), int(prm["k_min"]),
                                      float(prm["beta"]), float(prm["p"]),
                                      int(prm["n_directions"]), ctx.seed, (lo, hi))
    medians = {f"{th:.6f}": float(r.median[-1]) for th, r in reps}
    pooled = vf.merge_modulus_reports([r for _, r in reps], band=(lo, hi))
    v = _modulus_verdict("joint_direction_modulus", pooled, prm, ctx.seed,
                         all(lo <= m <= hi for m in medians.values()))
    v.statistic = max(medians.values(), key=lambda m: abs(m - 1.0))
    v.details["finest_median_by_angle"] = medians
    v.details["surrogate"] = f"{len(reps)} equally spaced directions in [0, pi)"
    return v


CHECKS: dict[str, Callable] = {
    "kernel_golden": kernel_golden,
    "covariance_positive_definite": positive_definiteness,
    "scalar_identities": scalar_identities,
    "spectral_precondition": spectral_precondition,
    "local_time_normalization": local_time_normalization,
    "laplace_normalization": laplace_normalization,
    "partial_rebirth_normalization": partial_rebirth_normalization,
    "decomposition_exactness": decomposition_exactness,
    "eisenbaum_isomorphism": eisenbaum_isomorphism,
    "conditional_independence": conditional_independence,
    "combined_identity": combined_identity,
    "brownian_uniform_modulus": brownian_uniform_modulus,
    "chi_square_uniform_modulus": chi_square_uniform_modulus,
    "chi_square_local_modulus": chi_square_local_modulus,
    "local_time_uniform_modulus": local_time_uniform_modulus,
    "joint_direction_modulus": joint_direction_modulus,
}

_MC = {"dt": 1e-3, "t_max": 40.0, "epsilon": None, "method": None, "x": 0.0, "y": 0.0}

DEFAULTS: dict[str, dict] = {
    "kernel_golden": {"betas": [0.5, 1.0, 2.0], "n_points": 20, "rel_tol": 1e-6},
    "covariance_positive_definite": {"n_grids": 10, "n_points": 100, "beta": 1.0, "p": 1.0,
                                     "tolerance": 1e-8},
    "scalar_identities": {"beta_p_pairs": [[1.0, 1.0], [0.5, 2.0], [2.0, 0.5]], "x": 0.3,
                          "beta": 1.0, "p": 1.0, "n_measures": 5, "row_tol": 1e-4,
                          "laplace_tol": 1e-6},
    "spectral_precondition": {"beta": 0.0},
    "local_time_normalization": {**_MC, "n": 20000, "dt": 1e-4, "epsilon": 0.02,
                                 "method": "occupation"},
    "laplace_normalization": {**_MC, "n": 20000, "p": 1.0, "t_max": 15.0, "mu_atoms": None},
    "partial_rebirth_normalization": {**_MC, "n": 20000, "nu_atoms": None},
    "decomposition_exactness": {**{k: v for k, v in _MC.items() if k not in ("method", "y")},
                                "t_max": 5.0, "n_bundles": 1000, "n_shift_bundles": 100,
                                "n_splits": 5, "y_range": [-1.0, 1.0], "n_levels": 9,
                                "t_marks": [0.25, 0.5, 1.0, 2.0], "epsilon": 0.05,
                                "methods": ["bridge", "occupation"], "tolerance": 1e-12,
                                "mu_atoms": None},
    "eisenbaum_isomorphism": {**_MC, "n": 100000, "s": 1.0, "grid": [-0.5, 0.0, 0.5],
                              "s_trend": [1.0, 2.0, 4.0], "negative_control": True,
                              "n_control": 10000},
    "conditional_independence": {**_MC, "n": 10000, "r": 2, "p": 1.0, "grid": [0.0],
                                 "negative_control": True, "n_control": 2000, "mu_atoms": None},
    "combined_identity": {**_MC, "n": 100000, "r": 2, "p": 1.0, "s": 1.0, "grid": [0.0, 0.5],
                          "negative_control": True, "n_control": 10000, "mu_atoms": None},
    "brownian_uniform_modulus": {"n_replicas": 100, "k_min": 8, "k_max": 16, "band": [0.8, 1.2],
                                 "promote": False},
    "chi_square_uniform_modulus": {"k": 2, "n_replicas": 100, "k_min": 8, "k_max": 16,
                                   "band": [0.7, 1.3], "promote": False},
    "chi_square_local_modulus": {"k": 2, "n_replicas": 100, "k_min": 10, "k_max": 20, "d": 0.5,
                                 "window": 0.0625, "band": [0.5, 1.5], "promote": False},
    "local_time_uniform_modulus": {"n_replicas": 50, "h": 2.0 ** -8, "interval": [0.2, 0.8],
                                   "dt": 1e-6, "p": 1.0, "method": "bridge", "epsilon": None,
                                   "band": [0.5, 2.0], "promote": False},
    "joint_direction_modulus": {"n_replicas": 40, "k_min": 8, "k_max": 14, "beta": 1.0, "p": 1.0,
                                "n_directions": 8, "band": [0.8, 1.2], "promote": False},
}


def check_ids() -> list[str]:
    return list(CHECKS)


def run_check(cid: str, ctx: RunContext, overrides: dict | None = None) -> Verdict:
    if cid not in CHECKS:
        raise ConfigError(f"unknown check id {cid!r}")
    unknown = set(overrides or {}) - set(DEFAULTS[cid]) - {"promote"}
    if unknown:
        raise ConfigError(f"check {cid!r}: unknown parameter(s) {sorted(unknown)}")
    prm = {**DEFAULTS[cid], **(overrides or {})}
    t0 = time.perf_counter()
    v = CHECKS[cid](ctx, prm)
    v.runtime_s = time.perf_counter() - t0
    return v
