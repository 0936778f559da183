"""Statistical verification suites.

Monte Carlo checks compare simulated local-time functionals with kernel
values or with the Gaussian side of the isomorphism identities; modulus
checks compute finite-scale ratio statistics whose almost-sure limits are
known.  Every random stream is addressed by ``(seed, check_id, ...)`` and
replicas are processed in fixed shards whose results are reduced in order,
so statistics do not depend on the number of workers.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats as sps

from . import gaussian_lab as gl
from . import path_engine as pe
from .errors import ConfigError, DomainError
from .parallel import resolve_workers, run_shards, shard_sizes
from .rebirth_kernels import (BaseProcess, Measure, RebirthKernel, RebirthSpec,
                              u_tilde0_partial, w_p)
from .rng import derive_rng
from .stats import (MeanAccumulator, WeightedMeanAccumulator, permutation_threshold,
                    weighted_ecdf_distance, z_score)

__all__ = [
    "Thresholds",
    "DistributionalTest",
    "ModulusReport",
    "check_normalizations",
    "check_conditional_independence",
    "check_eisenbaum",
    "check_combined_identity",
    "modulus_statistic",
    "merge_modulus_reports",
    "brownian_field_modulus",
    "chi_square_modulus",
    "local_time_modulus",
    "joint_direction_modulus",
    "spectral_precondition",
    "default_functionals",
]


@dataclass(frozen=True)
class Thresholds:
    """Pass thresholds; configuration rather than code constants."""

    z_max: float = 3.0
    corr_factor: float = 3.0
    ks_level: float = 0.01
    n_perm: int = 400
    min_ess: float = 100.0
    min_acceptance: float = 1e-3

    def __post_init__(self):
        if min(self.z_max, self.corr_factor, self.ks_level, self.min_acceptance) <= 0:
            raise ConfigError("thresholds must be positive")
        if not 0 < self.ks_level < 1 or self.n_perm < 10:
            raise ConfigError("ks_level must lie in (0, 1) and n_perm be at least 10")


def _clean(v):
    """JSON-safe copy with numpy scalars and arrays converted."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class DistributionalTest:
    """Outcome of one statistical test, possibly composed of sub-tests.

    ``status`` is ``pass``, ``fail`` or ``infeasible``.  A composite test
    passes iff all its sub-tests pass.
    """

    check: str
    test_kind: str
    n: int
    statistic: float
    threshold: float
    passed: bool
    z_score: float | None = None
    p_value: float | None = None
    grid: list = field(default_factory=list)
    status: str = ""
    seed: int | None = None
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    sub_tests: list = field(default_factory=list)

    def __post_init__(self):
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p_value must lie in [0, 1]")
        if not self.status:
            self.status = "pass" if self.passed else "fail"

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["sub_tests"] = [t.to_record() for t in self.sub_tests]
        rec["pass"] = rec.pop("passed")
        return _clean(rec)


def _z_test(check, kind, n, mean_a, se_a, mean_b, se_b, z_max, **extra) -> DistributionalTest:
    z = z_score(mean_a, se_a, mean_b, se_b)
    degenerate = not (se_a > 0 or se_b > 0)
    p = float(2.0 * sps.norm.sf(abs(z))) if math.isfinite(z) else 0.0
    t = DistributionalTest(check, kind, n, float(z), z_max, bool(abs(z) <= z_max and not degenerate),
                           z_score=float(z), p_value=p, **extra)
    t.details.update({"mean": mean_a, "se": se_a, "reference": mean_b, "reference_se": se_b})
    if degenerate:
        t.status = "degenerate"
    return t


def _bundle_of(cycle: pe.Cycle, base: BaseProcess, config: pe.SimConfig, stream) -> pe.PathBundle:
    zeta = np.array([cycle.end_time]) if cycle.death_cause != "horizon" else np.array([])
    return pe.PathBundle([cycle], zeta, None, int(config.seed), tuple(stream), False,
                         pe.model_of(base), config.t_max, config.dt)


def _single_cycle(base, start, config, stream, horizon=None):
    cyc = pe.simulate_base_path(base, start, config, derive_rng(config.seed, *stream, "cycle", 1),
                                t0=0.0, horizon=horizon)
    return _bundle_of(cyc, base, config, stream)


def _default_method(base: BaseProcess) -> str:
    return "occupation" if base.is_levy and base.levy.alpha < 2.0 else "bridge"


def _local_times(bundle, grid, base, method, epsilon, per_cycle=False):
    return pe.estimate_local_time(bundle, grid, epsilon=epsilon, method=method, base=base,
                                  per_cycle=per_cycle)


# normalizations ----------------------------------------------------------

def _normalization_shard(first, size, model, rebirth, x, y, p, config, method, epsilon, cid):
    base = pe.base_from_model(model)
    acc = MeanAccumulator()
    vals = np.empty(size)
    n_horizon = 0
    for j in range(size):
        stream = (cid, first + j)
        if rebirth is None:
            b = _single_cycle(base, x, config, stream)
        else:
            b = pe.simulate_rebirth(base, rebirth, x, config, stream=stream)
        n_horizon += int(b.cycles[-1].death_cause == "horizon" and b.exiled_at_cycle is None)
        est = _local_times(b, [y], base, method, epsilon)
        vals[j] = pe.laplace_functional(est, p, y) if p else est.values[0, -1]
    acc.add(vals)
    return acc, n_horizon


def check_normalizations(base: BaseProcess, rebirth: RebirthSpec | None, x: float, y: float,
                         p: float | None, n: int, config: pe.SimConfig, *,
                         method: str | None = None, epsilon: float | None = None,
                         thresholds: Thresholds = Thresholds(), workers: int | None = None,
                         shard_size: int = 500, check_id: str = "laplace_normalization"
                         ) -> DistributionalTest:
    """Monte Carlo mean of a local-time functional against its kernel value.

    ============  ======  =====================================  ==================
    rebirth       ``p``   functional                              target
    ============  ======  =====================================  ==================
    ``None``      None    ``L̂^y_∞`` of one cycle                  ``u⁰(x,y)``
    ``None``      > 0     ``∫e^{-ps} dL̂^y_s`` of one cycle        ``u^p(x,y)``
    full          > 0     ``∫e^{-ps} dL̃^y_s``                     ``w^p(x,y)``
    partial       None    ``L̃^y_∞`` on ``S``                      ``ũ⁰(x,y)``
    ============  ======  =====================================  ==================
    """
    method = method or _default_method(base)
    if rebirth is None:
        target = float(base.potential(p or 0.0, x, y))
    elif rebirth.mode == "full":
        if not p:
            raise ConfigError("full rebirth normalization needs p > 0")
        kern = RebirthKernel(base, rebirth.measure, p)
        target = float(w_p(kern, x, y))
    else:
        if p:
            raise ConfigError("the partial-rebirth check targets the total local time (p unset)")
        target = float(u_tilde0_partial(base, rebirth.measure, x, y))
    model = pe.model_of(base)
    tasks = [(lo, sz, model, rebirth, x, y, p, config, method, epsilon, check_id)
             for lo, sz in shard_sizes(n, shard_size)]
    acc, n_horizon = MeanAccumulator(), 0
    for a, h in run_shards(_normalization_shard, tasks, workers):
        acc.merge(a)
        n_horizon += h
    t = _z_test(check_id, "laplace_match" if p else "weighted_mean_match", n, acc.mean, acc.se,
                target, 0.0, thresholds.z_max, grid=[y], seed=config.seed,
                params={"case": base.case_id, "x": x, "y": y, "p": p, "method": method,
                        "epsilon": epsilon, "dt": config.dt, "t_max": config.t_max,
                        "rebirth": None if rebirth is None else rebirth.mode})
    t.details["target"] = target
    t.details["horizon_fraction"] = n_horizon / n
    if p:
        # discounting beyond the horizon: e^{-p t_max} times a kernel-sized tail
        t.details["truncation_bound"] = math.exp(-p * config.t_max) * max(target, 1.0 / p)
    return t


# conditional independence --------------------------------------------------

def _cycle_start(i, y, mu, rng):
    return y if i == 1 else float(mu.sample(rng, 1)[0])


def _ci_attempt_shard(first, size, model, mu, r, grid, y, p, config, method, epsilon, cid, corrupt):
    """Conditioned samples ``(F_1..F_r)`` from attempts ``first..first+size``."""
    base = pe.base_from_model(model)
    rebirth = RebirthSpec.full(mu)
    out = []
    for j in range(first, first + size):
        lam = float(derive_rng(config.seed, cid, "lambda", j).exponential(1.0 / p))
        cfg = replace(config, t_max=lam, max_cycles=r)
        b = pe.simulate_rebirth(base, rebirth, y, cfg, stream=(cid, "joint", j),
                                reuse_first_stream=corrupt)
        if len(b.cycles) != r or b.cycles[-1].death_cause != "horizon":
            continue
        est = _local_times(b, grid, base, method, epsilon, per_cycle=True)
        out.append([float(pc[:, -1].sum()) for pc in est.per_cycle_values])
    return np.asarray(out, dtype=float).reshape(-1, r), size


def _ci_product_shard(first, size, model, mu, i, r, grid, y, p, config, method, epsilon, cid, a):
    """Single-cycle pieces of the product side for cycle ``i``."""
    base = pe.base_from_model(model)
    acc = WeightedMeanAccumulator()
    f, w = np.empty(size), np.empty(size)
    for j in range(size):
        stream = (cid, "factor", i, first + j)
        rng = derive_rng(config.seed, *stream, "start")
        start = _cycle_start(i, y, mu, rng)
        if i < r:
            b = _single_cycle(base, start, config, stream)
            est = _local_times(b, grid, base, method, epsilon)
            f[j] = math.exp(-a * est.values[:, -1].sum())
            w[j] = math.exp(-p * b.cycles[0].lifetime)
        else:
            lam = float(rng.exponential(1.0 / p))
            b = _single_cycle(base, start, config, stream, horizon=lam)
            est = _local_times(b, grid, base, method, epsilon)
            f[j] = math.exp(-a * est.values[:, -1].sum())
            w[j] = float(b.cycles[0].death_cause == "horizon")
    acc.add(f, w)
    return acc


def check_conditional_independence(base: BaseProcess, mu: Measure, r: int, grid, n: int,
                                   config: pe.SimConfig, *, p: float = 1.0, y: float = 0.0,
                                   a: float = 1.0, method: str | None = None,
                                   epsilon: float | None = None, corrupt: bool = False,
                                   thresholds: Thresholds = Thresholds(),
                                   workers: int | None = None, shard_size: int = 1000,
                                   check_id: str = "conditional_independence"
                                   ) -> DistributionalTest:
    """Cycles are independent given that an Exp(p) time falls in cycle ``r``.

    Sub-test (a): pairwise correlations of the per-cycle functionals
    ``F_i = Σ_{x∈grid} L^x_i`` (``F_r`` up to ``λ``) are at most
    ``corr_factor/√n``.  Sub-test (b): the conditioned mean of
    ``exp(-a ΣF_i)`` equals the product of per-cycle tilted transforms
    estimated from independent single-cycle runs.  ``corrupt`` makes the
    second cycle reuse the first cycle's random stream.
    """
    if int(r) != r or r < 1:
        raise DomainError("cycle index r must be a positive integer")
    method = method or _default_method(base)
    grid = list(np.atleast_1d(np.asarray(grid, dtype=float)))
    model = pe.model_of(base)
    params = {"case": base.case_id, "r": r, "p": p, "y": y, "a": a, "method": method,
              "corrupt": corrupt, "dt": config.dt}
    max_attempts = int(math.ceil(n / thresholds.min_acceptance))
    batch = resolve_workers(workers)
    rows, attempts, lo = [], 0, 0
    while sum(len(x) for x in rows) < n and attempts < max_attempts:
        tasks = []
        for _ in range(batch):
            sz = min(shard_size, max_attempts - lo)
            if sz <= 0:
                break
            tasks.append((lo, sz, model, mu, r, grid, y, p, config, method, epsilon, check_id,
                          corrupt))
            lo += sz
        for got, tried in run_shards(_ci_attempt_shard, tasks, workers):
            if sum(len(x) for x in rows) >= n:
                break
            rows.append(got)
            attempts += tried
    sample = np.concatenate(rows)[:n] if rows else np.empty((0, r))
    accepted = sample.shape[0]
    if accepted < n:
        return DistributionalTest(check_id, "laplace_match", accepted, float("nan"), float("nan"),
                                  False, grid=grid, status="infeasible", seed=config.seed,
                                  params=params,
                                  details={"acceptance": accepted / max(attempts, 1)})
    # (a) correlation
    corr_lim = thresholds.corr_factor / math.sqrt(n)
    if r >= 2:
        c = np.corrcoef(sample, rowvar=False)
        off = np.abs(c[np.triu_indices(r, 1)])
        worst = float(np.nanmax(off))
        corr_test = DistributionalTest(check_id + ".correlation", "correlation", n, worst,
                                       corr_lim, bool(worst <= corr_lim), grid=grid,
                                       seed=config.seed, details={"correlations": c})
    else:
        corr_test = DistributionalTest(check_id + ".correlation", "correlation", n, 0.0, corr_lim,
                                       True, grid=grid, seed=config.seed,
                                       details={"note": "single cycle: nothing to correlate"})
    # (b) product form: cycle 1 from y, cycles 2..r-1 i.i.d. from μ, cycle r up to λ
    def factor(i):
        tasks = [(lo_, sz, model, mu, i, r, grid, y, p, config, method, epsilon, check_id, a)
                 for lo_, sz in shard_sizes(n, shard_size)]
        acc = WeightedMeanAccumulator()
        for part in run_shards(_ci_product_shard, tasks, workers):
            acc.merge(part)
        return acc

    lhs = MeanAccumulator().add(np.exp(-a * sample.sum(axis=1)))
    factors = [(factor(1), 1)] if r >= 2 else []
    if r >= 3:
        factors.append((factor(2), r - 2))
    factors.append((factor(r), 1))
    rhs, rel_var = 1.0, 0.0
    for acc, power in factors:
        rhs *= acc.mean ** power
        rel_var += (power * acc.se / acc.mean) ** 2
    rhs_se = abs(rhs) * math.sqrt(rel_var)
    lap_test = _z_test(check_id + ".laplace", "laplace_match", n, lhs.mean, lhs.se, rhs, rhs_se,
                       thresholds.z_max, grid=grid, seed=config.seed)
    lap_test.details["factor_means"] = [f.mean for f, _ in factors]
    passed = corr_test.passed and lap_test.passed
    return DistributionalTest(check_id, "laplace_match", n, lap_test.statistic, thresholds.z_max,
                              passed, z_score=lap_test.z_score, p_value=lap_test.p_value,
                              grid=grid, seed=config.seed, params=params,
                              details={"acceptance": accepted / attempts, "attempts": attempts},
                              sub_tests=[corr_test, lap_test])


# Eisenbaum isomorphism -----------------------------------------------------

def default_functionals(m: int) -> list:
    """Three bounded test functionals ``exp(-a·Z)`` on an ``m``-point grid."""
    first = np.zeros(m)
    first[0] = 1.0
    last = np.zeros(m)
    last[-1] = 1.0
    return [np.full(m, 0.5), first, last]


def _potential_matrix(base, q, pts):
    pts = np.asarray(pts, dtype=float)
    return np.asarray(base.potential(q, pts[:, None], pts[None, :]), dtype=float)


def _gauss(chol, size, rng):
    return rng.standard_normal((size, chol.shape[0])) @ chol.T


def _eisen_left_shard(first, size, model, y, grid, chol, s, config, method, epsilon, cid):
    base = pe.base_from_model(model)
    lt = np.empty((size, len(grid)))
    n_horizon = 0
    for j in range(size):
        b = _single_cycle(base, y, config, (cid, "left", first + j))
        n_horizon += int(b.cycles[0].death_cause == "horizon")
        lt[j] = _local_times(b, grid, base, method, epsilon).values[:, -1]
    eta = _gauss(chol, size, derive_rng(config.seed, cid, "left_field", first))
    return lt, eta, n_horizon


def _weighted_side(chol, n, seed, cid, shard_size):
    etas = [_gauss(chol, sz, derive_rng(seed, cid, "right_field", lo))
            for lo, sz in shard_sizes(n, shard_size)]
    return np.concatenate(etas) if etas else np.empty((0, chol.shape[0]))


def _compare_sides(cid, z_left, z_right, w_right, functionals, thresholds, rng, seed, grid,
                   with_ks=True):
    subs = []
    for k, a in enumerate(functionals):
        fl = np.exp(-z_left @ a)
        fr = np.exp(-z_right @ a)
        left = MeanAccumulator().add(fl)
        right = WeightedMeanAccumulator().add(fr, w_right)
        t = _z_test(f"{cid}.functional_{k}", "weighted_mean_match", len(fl), left.mean, left.se,
                    right.mean, right.se, thresholds.z_max, grid=grid, seed=seed)
        t.details["coefficients"] = a
        subs.append(t)
    if with_ks:
        tl, tr = z_left.sum(axis=1), z_right.sum(axis=1)
        stat = weighted_ecdf_distance(tl, 1.0, tr, w_right)
        thr, perm = permutation_threshold(tl, 1.0, tr, w_right, rng, thresholds.n_perm,
                                          thresholds.ks_level)
        p_val = float((1 + np.sum(perm >= stat)) / (1 + perm.size))
        subs.append(DistributionalTest(f"{cid}.weighted_ks", "two_sample_ks", len(tl), stat, thr,
                                       bool(stat <= thr), p_value=p_val, grid=grid, seed=seed))
    return subs


def check_eisenbaum(base: BaseProcess, y: float, s: float, grid, n: int, config: pe.SimConfig, *,
                    weighted: bool = True, functionals: Sequence | None = None,
                    s_trend: Sequence[float] | None = (1.0, 2.0, 4.0),
                    method: str | None = None, epsilon: float | None = None,
                    thresholds: Thresholds = Thresholds(), workers: int | None = None,
                    shard_size: int = 2000, check_id: str = "eisenbaum_isomorphism"
                    ) -> DistributionalTest:
    """``{L^x_∞ + ½(η(x)+s)²}`` under ``P^y × P_η`` against ``{½(η(x)+s)²}``
    under ``(1 + η(y)/s) P_η``.

    ``η`` has the base 0-potential as covariance.  ``weighted=False`` drops
    the importance weights on the right side (negative control).  With
    ``s_trend`` the weighted-KS statistic is also reported at those shifts,
    reusing the same paths and Gaussian draws.
    """
    if s == 0.0:
        raise DomainError("s must be nonzero")
    method = method or _default_method(base)
    grid = [float(g) for g in np.atleast_1d(grid)]
    pts = sorted(set(grid) | {float(y)})
    gi = [pts.index(g) for g in grid]
    yi = pts.index(float(y))
    cov = _potential_matrix(base, 0.0, pts)
    chol, jitter = gl.factorize(cov)
    model = pe.model_of(base)
    tasks = [(lo, sz, model, y, grid, chol, s, config, method, epsilon, check_id)
             for lo, sz in shard_sizes(n, shard_size)]
    parts = run_shards(_eisen_left_shard, tasks, workers)
    lt = np.concatenate([q[0] for q in parts])
    eta_l = np.concatenate([q[1] for q in parts])
    n_horizon = sum(q[2] for q in parts)
    eta_r = _weighted_side(chol, n, config.seed, check_id, shard_size)
    functionals = default_functionals(len(grid)) if functionals is None else \
        [np.asarray(f, dtype=float) for f in functionals]

    def sides(shift):
        zl = lt + 0.5 * (eta_l[:, gi] + shift) ** 2
        zr = 0.5 * (eta_r[:, gi] + shift) ** 2
        wr = 1.0 + eta_r[:, yi] / shift if weighted else np.ones(n)
        return zl, zr, wr

    zl, zr, wr = sides(s)
    ess = float(wr.sum() ** 2 / np.sum(wr * wr))
    params = {"case": base.case_id, "y": y, "s": s, "weighted": weighted, "method": method,
              "dt": config.dt}
    details = {"ess": ess, "negative_weight_fraction": float(np.mean(wr < 0)),
               "horizon_fraction": n_horizon / n, "jitter": jitter}
    if ess < thresholds.min_ess:
        return DistributionalTest(check_id, "two_sample_ks", n, float("nan"), thresholds.min_ess,
                                  False, grid=grid, status="infeasible", seed=config.seed,
                                  params=params, details=details)
    rng = derive_rng(config.seed, check_id, "permutation")
    subs = _compare_sides(check_id, zl, zr, wr, functionals, thresholds, rng, config.seed, grid)
    wm = MeanAccumulator().add(wr)
    details["weight_mean"] = wm.mean
    details["weight_mean_z"] = z_score(wm.mean, wm.se, 1.0)
    if s_trend:
        ks = {}
        for sv in s_trend:
            a, b, c = sides(float(sv))
            ks[str(float(sv))] = weighted_ecdf_distance(a.sum(axis=1), 1.0, b.sum(axis=1), c)
        vals = list(ks.values())
        details["ks_by_s"] = ks
        details["ks_decreasing_in_s"] = bool(all(np.diff(vals) <= 0))
    passed = all(t.passed for t in subs)
    worst = max(subs[:-1], key=lambda t: abs(t.statistic))
    return DistributionalTest(check_id, "two_sample_ks", n, subs[-1].statistic, subs[-1].threshold,
                              passed, z_score=worst.z_score, p_value=subs[-1].p_value, grid=grid,
                              seed=config.seed, params=params, details=details, sub_tests=subs)


# combined identity ---------------------------------------------------------

def _combined_left_shard(first, size, model, mu, r, y, p, grid, config, method, epsilon, cid):
    base = pe.base_from_model(model)
    lt = np.zeros((size, len(grid)))
    for j in range(size):
        for i in range(1, r + 1):
            stream = (cid, "left", first + j, i)
            rng = derive_rng(config.seed, *stream, "start")
            start = _cycle_start(i, y, mu, rng)
            horizon = float(rng.exponential(1.0 / p)) if i == r else None
            b = _single_cycle(base, start, config, stream, horizon=horizon)
            lt[j] += _local_times(b, grid, base, method, epsilon).values[:, -1]
    return lt


def check_combined_identity(base: BaseProcess, mu: Measure, r: int, s: float, grid, n: int,
                            config: pe.SimConfig, *, p: float = 1.0, y: float = 0.0,
                            wrong_covariance: bool = False, functionals: Sequence | None = None,
                            method: str | None = None, epsilon: float | None = None,
                            thresholds: Thresholds = Thresholds(), workers: int | None = None,
                            shard_size: int = 2000, check_id: str = "combined_identity"
                            ) -> DistributionalTest:
    """Law of ``Σ_{i<r} L_{i,∞} + L_{r,λ_r} + G_{r,s}`` against the weighted
    Gaussian side.

    Cycle 1 starts at ``y`` and cycles ``2..r`` from ``μ``; ``λ_r`` is an
    independent Exp(p) time.  ``G_{r,s} = Σ_{i<r} ½(η_{i,0}+s)² + ½(η_p+s)²``
    with ``η_{i,0}`` of covariance ``u⁰`` and ``η_p`` of covariance ``u^p``.
    The right side carries the weight
    ``(1+η_{1,0}(y)/s) Π_{2≤i<r}(1+η_{i,0}(μ)/s) (1+η_p(μ)/s)``.
    ``wrong_covariance`` puts ``u⁰`` in place of ``u^p`` on both sides
    (negative control).
    """
    if s == 0.0:
        raise DomainError("s must be nonzero")
    if int(r) != r or r < 1:
        raise DomainError("cycle index r must be a positive integer")
    method = method or _default_method(base)
    grid = [float(g) for g in np.atleast_1d(grid)]
    nodes, mw = mu.nodes, mu.weights
    keep = mw > 0
    nodes, mw = nodes[keep], mw[keep] / mw[keep].sum()
    pts = sorted(set(grid) | {float(y)} | set(float(v) for v in nodes))
    gi = [pts.index(g) for g in grid]
    yi = pts.index(float(y))
    mi = [pts.index(float(v)) for v in nodes]
    chol0, _ = gl.factorize(_potential_matrix(base, 0.0, pts))
    cholp, _ = gl.factorize(_potential_matrix(base, 0.0 if wrong_covariance else p, pts))
    model = pe.model_of(base)
    tasks = [(lo, sz, model, mu, r, y, p, grid, config, method, epsilon, check_id)
             for lo, sz in shard_sizes(n, shard_size)]
    lt = np.concatenate(run_shards(_combined_left_shard, tasks, workers))

    def fields(side):
        comps = []
        for i in range(1, r + 1):
            chol = cholp if i == r else chol0
            comps.append(np.concatenate([
                _gauss(chol, sz, derive_rng(config.seed, check_id, side, i, lo))
                for lo, sz in shard_sizes(n, shard_size)]))
        return comps

    def g_of(comps):
        return sum(0.5 * (c[:, gi] + s) ** 2 for c in comps)

    zl = lt + g_of(fields("left_field"))
    right = fields("right_field")
    zr = g_of(right)
    wr = 1.0 + right[0][:, yi] / s
    for c in right[1:]:
        wr = wr * (1.0 + (c[:, mi] @ mw) / s)
    ess = float(wr.sum() ** 2 / np.sum(wr * wr))
    params = {"case": base.case_id, "r": r, "s": s, "p": p, "y": y,
              "wrong_covariance": wrong_covariance, "method": method, "dt": config.dt}
    details = {"ess": ess, "negative_weight_fraction": float(np.mean(wr < 0))}
    if ess < thresholds.min_ess:
        return DistributionalTest(check_id, "weighted_mean_match", n, float("nan"),
                                  thresholds.min_ess, False, grid=grid, status="infeasible",
                                  seed=config.seed, params=params, details=details)
    functionals = default_functionals(len(grid)) if functionals is None else \
        [np.asarray(f, dtype=float) for f in functionals]
    subs = _compare_sides(check_id, zl, zr, wr, functionals, thresholds, None, config.seed, grid,
                          with_ks=False)
    worst = max(subs, key=lambda t: abs(t.statistic))
    return DistributionalTest(check_id, "weighted_mean_match", n, worst.statistic,
                              thresholds.z_max, all(t.passed for t in subs),
                              z_score=worst.z_score, p_value=worst.p_value, grid=grid,
                              seed=config.seed, params=params, details=details, sub_tests=subs)


# moduli of continuity --------------------------------------------------------

@dataclass
class ModulusReport:
    """Per-scale ratio statistics over replicas with band and trend verdicts.

    ``ratio_stats[i, j]`` is the ratio at ``scales[i]`` for replica ``j``
    (replicas with a vanishing target are excluded and counted).
    """

    mode: str
    scales: np.ndarray
    ratio_stats: np.ndarray
    target: np.ndarray
    median: np.ndarray
    quartiles: np.ndarray
    trend_slope: float
    band: tuple
    in_band: bool
    n_excluded: int
    status: str = "informational"
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scales.size > 1 and np.any(np.diff(self.scales) >= 0):
            raise ValueError("scales must be strictly decreasing")
        if np.any(self.ratio_stats < 0):
            raise ValueError("ratio statistics are nonnegative")

    @property
    def levels(self) -> np.ndarray:
        return -np.log2(self.scales)

    def to_record(self) -> dict:
        return _clean({"mode": self.mode, "scales": self.scales, "levels": self.levels,
                       "median": self.median, "quartiles": self.quartiles,
                       "trend_slope": self.trend_slope, "band": list(self.band),
                       "in_band": self.in_band, "n_excluded": self.n_excluded,
                       "n_replicas": int(self.ratio_stats.shape[1]), "status": self.status,
                       "details": self.details})


def _dyadic_step(grid):
    g = np.asarray(grid, dtype=float)
    d = np.diff(g)
    if g.size < 2 or not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
        raise DomainError("modulus statistics need a uniform grid")
    return float(d[0])


def modulus_statistic(values, grid, mode: str, scales, sigma2: Callable,
                      target_fn: Callable | None = None, *, d: float | None = None,
                      window: float | None = None, interval: tuple | None = None,
                      band: tuple = (0.0, math.inf), promote: bool = False) -> ModulusReport:
    """Finite-scale modulus ratios of sampled paths.

    ``values`` holds one replica per row on the uniform ``grid``; every scale
    must be a multiple of the grid step.  ``sigma2(h)`` is the increment
    variance at lag ``h``.

    ``mode="local"``: at scale ``h`` the statistic is
    ``max |X(d+x) - X(d)| / (2σ²(|x|) log log(1/|x|))^{1/2}`` over the
    multiples ``x`` of ``h`` with ``h ≤ |x| ≤ window``, so refining the
    scale only adds points.

    ``mode="uniform"``: at scale ``h`` it is
    ``max |X(u+h) - X(u)| / (2σ²(h) log(1/h))^{1/2}`` over ``u, u+h`` in
    ``interval``.

    The statistic is divided by ``target_fn(row, grid)`` (default 1).
    Replicas whose target is 0 are excluded.  ``band`` is applied to the
    median at the finest scale; the verdict stays ``informational`` unless
    ``promote``.
    """
    v = np.atleast_2d(np.asarray(values, dtype=float))
    g = np.asarray(grid, dtype=float)
    step = _dyadic_step(g)
    scales = np.asarray(sorted(set(float(h) for h in scales), reverse=True))
    if mode not in ("local", "uniform"):
        raise DomainError(f"unknown modulus mode {mode!r}")
    targets = np.array([1.0 if target_fn is None else float(target_fn(row, g)) for row in v])
    keep = targets > 1e-300
    v, targets_k = v[keep], targets[keep]
    ratios = np.zeros((scales.size, v.shape[0]))
    for i, h in enumerate(scales):
        m = int(round(h / step))
        if m < 1 or abs(m * step - h) > 1e-9 * h:
            raise DomainError(f"scale {h} is not a multiple of the grid step {step}")
        if mode == "local":
            if d is None or window is None:
                raise DomainError("local mode needs d and window")
            di = int(round((d - g[0]) / step))
            if abs(g[di] - d) > 1e-9:
                raise DomainError("d must be a grid point")
            kmax = int(math.floor(window / h + 1e-9))
            if kmax < 1:
                raise DomainError(f"window {window} is shorter than scale {h}")
            lags = np.concatenate((-np.arange(1, kmax + 1), np.arange(1, kmax + 1))) * m
            idx = di + lags
            if idx.min() < 0 or idx.max() >= g.size:
                raise DomainError("grid does not cover d ± window")
            x = np.abs(lags * step)
            phi = gl.modulus_target_local(lambda t: sigma2(t), x)
            ratios[i] = np.max(np.abs(v[:, idx] - v[:, [di]]) / phi, axis=1)
        else:
            lo, hi = interval if interval is not None else (g[0], g[-1])
            sel = np.flatnonzero((g >= lo - 1e-12) & (g <= hi + 1e-12))
            sub = sel[(sel - sel[0]) % m == 0]
            if sub.size < 2:
                raise DomainError(f"interval holds fewer than two points at scale {h}")
            phi = gl.modulus_target_uniform(lambda a, b: sigma2(np.abs(a - b)), 0.0, h)
            ratios[i] = np.max(np.abs(np.diff(v[:, sub], axis=1)), axis=1) / phi
        ratios[i] /= targets_k
    return _modulus_report(mode, scales, ratios, targets, int((~keep).sum()), band, promote)


def _modulus_report(mode, scales, ratios, targets, n_excluded, band, promote):
    if ratios.shape[1]:
        median = np.median(ratios, axis=1)
        quart = np.quantile(ratios, [0.25, 0.75], axis=1).T
    else:
        median = np.full(scales.size, np.nan)
        quart = np.full((scales.size, 2), np.nan)
    levels = -np.log2(scales)
    slope = float(np.polyfit(levels, median, 1)[0]) if scales.size > 1 and ratios.shape[1] else 0.0
    in_band = bool(band[0] <= median[-1] <= band[1]) if ratios.shape[1] else False
    status = ("pass" if in_band else "fail") if promote else "informational"
    return ModulusReport(mode, scales, ratios, targets, median, quart, slope, tuple(band), in_band,
                         n_excluded, status)


def merge_modulus_reports(reports: Sequence[ModulusReport], band=None,
                          promote: bool = False) -> ModulusReport:
    """Pool replicas of reports computed on the same scales (in the given order)."""
    first = reports[0]
    if any(not np.array_equal(r.scales, first.scales) or r.mode != first.mode for r in reports):
        raise DomainError("reports differ in mode or scales")
    ratios = np.concatenate([r.ratio_stats for r in reports], axis=1)
    targets = np.concatenate([r.target for r in reports])
    return _modulus_report(first.mode, first.scales, ratios, targets,
                           sum(r.n_excluded for r in reports),
                           first.band if band is None else band, promote)


def _refined_paths(markov, coarse, levels, n, rng):
    vals = gl.sample_markov(markov, coarse, n, rng)
    grid = np.asarray(coarse, dtype=float)
    for _ in range(levels):
        vals, grid = gl.midpoint_refine(vals, grid, markov, rng)
    return vals, grid


def _batches(n, size=10):
    return shard_sizes(n, size)


def brownian_field_modulus(n_replicas: int = 100, k_max: int = 16, k_min: int = 8, seed: int = 0,
                           band=(0.8, 1.2), check_id: str = "brownian_uniform_modulus"
                           ) -> ModulusReport:
    """Uniform modulus of the field with covariance ``2(x∧y)`` on ``[0, 1]``.

    Its increment variance is ``2|h|``; the limit of the ratio is 1.
    """
    mk = gl.brownian_markov("frak_u0")
    scales = 2.0 ** -np.arange(k_min, k_max + 1)
    parts = []
    for lo, sz in _batches(n_replicas):
        rng = derive_rng(seed, check_id, lo)
        vals, grid = _refined_paths(mk, np.linspace(0.0, 1.0, 2 ** 4 + 1), k_max - 4, sz, rng)
        parts.append(modulus_statistic(vals, grid, "uniform", scales, lambda h: 2.0 * h))
    rep = merge_modulus_reports(parts, band=band, promote=True)
    rep.details.update({"check": check_id, "seed": seed, "field": "covariance 2(x∧y)"})
    return rep


def _sup_sqrt_target(factor):
    return lambda row, g: 2.0 * math.sqrt(factor * max(float(np.max(row)), 0.0))


def chi_square_modulus(mode: str = "uniform", k: int = 2, n_replicas: int = 100,
                       k_max: int = 16, k_min: int = 8, d: float = 0.5, window: float = 2.0 ** -4,
                       seed: int = 0, band=(0.7, 1.3), check_id: str | None = None
                       ) -> ModulusReport:
    """Moduli of ``Y_k = Σ η_i²`` with independent ``2(x∧y)`` components.

    Uniform mode on ``[0, 1]`` with target ``2 sup Y_k^{1/2}``; local mode at
    ``d`` with target ``2 Y_k^{1/2}(d)``, refining only ``d ± window``
    (exact, since the components are Markov).
    """
    cid = check_id or f"chi_square_{mode}_modulus"
    mk = gl.brownian_markov("frak_u0")
    scales = 2.0 ** -np.arange(k_min, k_max + 1)
    parts = []
    for lo, sz in _batches(n_replicas):
        rng = derive_rng(seed, cid, lo)
        if mode == "uniform":
            coarse = np.linspace(0.0, 1.0, 2 ** 4 + 1)
            comps = [_refined_paths(mk, coarse, k_max - 4, sz, rng) for _ in range(k)]
            grid = comps[0][1]
            y = sum(c[0] ** 2 for c in comps)
            parts.append(modulus_statistic(y, grid, "uniform", scales, lambda h: 2.0 * h,
                                           _sup_sqrt_target(1.0)))
        elif mode == "local":
            if not 0.0 < d - window:
                raise DomainError("local window must stay inside (0, ∞)")
            coarse = np.array([d - window, d, d + window])
            # step after refinement: window / 2^levels = 2^-k_max
            levels = int(round(math.log2(window) + k_max))
            comps = [_refined_paths(mk, coarse, levels, sz, rng) for _ in range(k)]
            grid = comps[0][1]
            y = sum(c[0] ** 2 for c in comps)
            di = int(np.argmin(np.abs(grid - d)))
            parts.append(modulus_statistic(y, grid, "local", scales, lambda h: 2.0 * h,
                                           lambda row, g: 2.0 * math.sqrt(row[di]),
                                           d=float(grid[di]), window=window))
        else:
            raise DomainError(f"unknown modulus mode {mode!r}")
    rep = merge_modulus_reports(parts, band=band)
    dist = np.abs(rep.median - 1.0)
    rep.details.update({"check": cid, "seed": seed, "k": k,
                        "distance_to_one_slope": float(np.polyfit(rep.levels, dist, 1)[0]),
                        "median_nondecreasing": bool(np.all(np.diff(rep.median) >= -1e-12))})
    return rep


def local_time_modulus(n_replicas: int = 50, h: float = 2.0 ** -8, interval=(0.2, 0.8),
                       dt: float = 1e-6, p: float = 1.0, seed: int = 0, method: str = "bridge",
                       epsilon: float | None = None, band=(0.5, 2.0), promote: bool = False,
                       check_id: str = "local_time_uniform_modulus") -> ModulusReport:
    """Uniform modulus of ``L̃^·_λ`` for rebirthed Brownian motion.

    Base: Case 1 with ``ψ(λ) = λ²/2`` and ``β = 1``, reborn at 0; ``λ`` is an
    independent Exp(p) time.  Local times on ``interval`` at spacing ``h``
    are compared with ``(2σ⁰²(h) log(1/h))^{1/2}``, ``σ⁰²(h) = 2h``, and
    divided by ``sup_u (2L̃^u_λ)^{1/2}``.  The estimator's own noise at
    bandwidth/step scale inflates the finite-``h`` ratio.
    """
    from .levy_kernels import LevyExponentSpec
    base = BaseProcess(1, 1.0, levy=LevyExponentSpec.brownian())
    rebirth = RebirthSpec.full(Measure.dirac(0.0))
    lo, hi = interval
    m = int(round((hi - lo) / h))
    grid = lo + h * np.arange(m + 1)
    rows = np.empty((n_replicas, grid.size))
    lams = np.empty(n_replicas)
    for j in range(n_replicas):
        lam = float(derive_rng(seed, check_id, "lambda", j).exponential(1.0 / p))
        lams[j] = lam
        cfg = pe.SimConfig(dt=dt, t_max=lam, seed=seed, epsilon=epsilon or 0.02,
                           chunk=1 << 20)
        b = pe.simulate_rebirth(base, rebirth, 0.0, cfg, stream=(check_id, j))
        est = pe.estimate_local_time(b, grid, epsilon=epsilon, method=method, base=base,
                                     per_cycle=False)
        rows[j] = est.values[:, -1]
    rep = modulus_statistic(rows, grid, "uniform", [h], lambda t: 2.0 * t,
                            _sup_sqrt_target(0.5), interval=interval, band=band,
                            promote=promote)
    rep.details.update({"check": check_id, "seed": seed, "dt": dt, "method": method,
                        "lambda_mean": float(lams.mean())})
    return rep


def joint_direction_modulus(n_replicas: int = 40, k_max: int = 14, k_min: int = 8,
                            beta: float = 1.0, p: float = 1.0, n_directions: int = 8,
                            seed: int = 0, band=(0.8, 1.2),
                            check_id: str = "joint_direction_modulus") -> list:
    """Uniform modulus of ``a₀η₀ + a_pη_p`` along sampled unit directions.

    ``η₀`` and ``η_p`` are independent with the Brownian-exponent kernels
    ``u^β`` and ``u^{β+p}`` on ``[0, 1]``.  The hypothesis concerns every
    ``(a₀, a_p)`` on the unit circle; only ``n_directions`` equally spaced
    angles in ``[0, π)`` are checked, which is a finite surrogate.  The
    normalizer uses the combined increment variance
    ``a₀²σ_β²(h) + a_p²σ_{β+p}²(h)`` with ``σ_q²(h) = 2(1 - e^{-√(2q)h})/√(2q)``.
    Returns ``[(angle, ModulusReport), ...]``; the same field draws serve
    every direction.
    """
    def sig2(q):
        k = math.sqrt(2.0 * q)
        return lambda h: 2.0 * (1.0 - np.exp(-k * np.asarray(h, dtype=float))) / k

    s0, sp = sig2(beta), sig2(beta + p)
    m0, mp = gl.brownian_markov("u", beta), gl.brownian_markov("u", beta + p)
    angles = np.pi * np.arange(n_directions) / n_directions
    scales = 2.0 ** -np.arange(k_min, k_max + 1)
    parts = [[] for _ in angles]
    coarse = np.linspace(0.0, 1.0, 2 ** 4 + 1)
    for lo, sz in _batches(n_replicas):
        rng = derive_rng(seed, check_id, lo)
        e0, grid = _refined_paths(m0, coarse, k_max - 4, sz, rng)
        ep, _ = _refined_paths(mp, coarse, k_max - 4, sz, rng)
        for j, th in enumerate(angles):
            a0, ap = math.cos(th), math.sin(th)
            parts[j].append(modulus_statistic(
                a0 * e0 + ap * ep, grid, "uniform", scales,
                lambda h, a0=a0, ap=ap: a0 ** 2 * s0(h) + ap ** 2 * sp(h)))
    out = []
    for th, pr in zip(angles, parts):
        rep = merge_modulus_reports(pr, band=band)
        rep.details.update({"check": check_id, "seed": seed, "angle": float(th),
                            "a0": math.cos(th), "a_p": math.sin(th)})
        out.append((float(th), rep))
    return out


def spectral_precondition(spec, beta: float = 0.0) -> dict:
    """``∫_{-∞}^{∞} (1∧λ²)/(β+ψ(λ)) dλ`` and whether it is finite."""
    g = lambda lam: min(1.0, lam * lam) / (beta + float(spec.psi(lam)))
    head, e1 = integrate.quad(g, 0.0, 1.0, limit=200)
    tail, e2 = integrate.quad(g, 1.0, np.inf, limit=200)
    value = 2.0 * (head + tail)
    finite = bool(math.isfinite(value) and spec.index > 1.0)
    return {"value": value, "error": 2.0 * (e1 + e2), "finite": finite, "index": spec.index}
