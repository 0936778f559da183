"""Simulation of killed and rebirthed paths and local-time estimation.

A cycle is one lifetime of the base process on a ``dt`` grid (the final
step may be partial).  Paths are generated in chunks so that killing on
hitting 0 can stop the simulation early.  Every cycle draws from its own
stream derived from ``(seed, *stream, "cycle", i)`` and every rebirth
decision from ``(seed, *stream, "rebirth", i)``.

Local times are estimated per step and kept as sparse ``(step, level,
amount)`` contributions, which are linear in time inside each step.  Two
estimators are available:

``occupation``
    ``(1/2ε) dt 1{|X_k - y| ≤ ε}`` (left point), divided by the reference
    density ``m'(y)``.
``tanaka``
    the discrete Tanaka term ``|X_{k+1}-y| - |X_k-y| - sgn(X_k-y)(X_{k+1}-X_k)``
    divided by the variance rate ``a²(y)`` and ``m'(y)``.  Its mean matches
    the true local time for martingale paths; it needs continuous paths.
``bridge``
    an exact draw of the local time of the Brownian bridge between
    consecutive states, ``(R - |X_k-y| - |X_{k+1}-y|)^+`` with
    ``R = ((X_{k+1}-X_k)² - 2a² Δt log U_k)^{1/2}``, normalized like
    ``tanaka``.  For constant-coefficient paths each level's local time then
    has the exact conditional law given the recorded states.  One uniform
    ``U_k`` per step is shared by all levels, so levels closer than about
    ``√dt`` are not jointly exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from . import diffusion_kernels as dk
from . import levy_kernels as lk
from .errors import ConfigError, DomainError, NumericalFailure
from .rebirth_kernels import BaseProcess, RebirthSpec
from .rng import derive_rng

__all__ = [
    "SimConfig",
    "Cycle",
    "PathBundle",
    "LocalTimeEstimate",
    "model_of",
    "base_from_model",
    "simulate_base_path",
    "simulate_rebirth",
    "estimate_local_time",
    "laplace_functional",
    "shift_bundle",
    "symmetric_stable",
]

DEATH_CAUSES = ("exp_clock", "hit_zero", "horizon")
MAX_STEPS = 10 ** 9


@dataclass(frozen=True)
class SimConfig:
    """Discretization and bookkeeping parameters of a simulation."""

    dt: float = 1e-4
    t_max: float = 50.0
    epsilon: float = 0.02
    seed: int = 0
    max_cycles: int = 100_000
    hitting_mode: str = "naive"
    chunk: int = 65_536
    guard_band: float = 0.0
    overflow: float = 1e12

    def __post_init__(self):
        if not (self.dt > 0 and self.t_max > 0 and self.epsilon > 0):
            raise ConfigError("dt, t_max and epsilon must be positive")
        if self.t_max / self.dt > MAX_STEPS:
            raise ConfigError(f"t_max/dt exceeds the {MAX_STEPS:.0e} step guard")
        if self.hitting_mode not in ("naive", "bridge_corrected"):
            raise ConfigError(f"unknown hitting mode {self.hitting_mode!r}")
        if self.max_cycles < 1 or self.chunk < 1:
            raise ConfigError("max_cycles and chunk must be positive")


@dataclass
class Cycle:
    """One lifetime: absolute step times and states, from birth to death."""

    start: float
    t0: float
    times: np.ndarray
    states: np.ndarray
    lifetime: float
    death_cause: str

    @property
    def end_time(self) -> float:
        return self.t0 + self.lifetime


@dataclass
class PathBundle:
    """A rebirthed trajectory: successive cycles and their death times.

    ``zeta`` holds ``ζ_1 < ζ_2 < …`` for completed deaths; a final cycle
    stopped by the horizon contributes no death time.  ``origin`` is the
    (cycle, step) of the simulated path at which this bundle starts; it is
    ``(1, 0)`` except for time-shifted bundles.
    """

    cycles: list
    zeta: np.ndarray
    exiled_at_cycle: int | None
    seed: int
    stream: tuple
    truncated: bool
    model: dict
    t_max: float
    dt: float
    origin: tuple = (1, 0)

    @property
    def zeta_partial_sums(self) -> np.ndarray:
        return np.concatenate(([0.0], self.zeta))

    @property
    def end_time(self) -> float:
        return self.cycles[-1].end_time if self.cycles else 0.0

    def n_t(self, t: float) -> int:
        """Index ``min{j : t < ζ_j}`` of the cycle running at time ``t``."""
        return int(np.searchsorted(self.zeta, t, side="right")) + 1


def model_of(base: BaseProcess) -> dict:
    """Serializable description of a base process (presets only for diffusions)."""
    m = {"case_id": base.case_id, "beta": base.beta, "levy": None, "diffusion": None}
    if base.levy is not None:
        s = base.levy
        if s.kind != "stable":
            m["levy"] = {"kind": s.kind, "digest": s.digest}
        else:
            m["levy"] = {"kind": "stable", "alpha": s.alpha, "scale": s.scale}
    if base.diffusion is not None:
        d = base.diffusion
        m["diffusion"] = {"name": d.name, "params": list(d.params), "domain": list(d.domain)}
    return m


def base_from_model(model: dict) -> BaseProcess:
    levy = diff = None
    if model.get("levy"):
        if model["levy"]["kind"] != "stable":
            raise DomainError("only stable exponents can be rebuilt from a stored model")
        levy = lk.LevyExponentSpec.stable(model["levy"]["alpha"], model["levy"]["scale"])
    if model.get("diffusion"):
        d = model["diffusion"]
        dom = tuple(d["domain"])
        makers = {"bm": lambda: dk.DiffusionSpec.bm(dom),
                  "bm_drift": lambda: dk.DiffusionSpec.bm_drift(d["params"][0], dom),
                  "ou": lambda: dk.DiffusionSpec.ou(d["params"][0], dom)}
        if d["name"] not in makers:
            raise DomainError(f"diffusion {d['name']!r} cannot be rebuilt from a stored model")
        diff = makers[d["name"]]()
    return BaseProcess(model["case_id"], model["beta"], levy=levy, diffusion=diff)


def symmetric_stable(alpha: float, size, rng: np.random.Generator) -> np.ndarray:
    """Standard symmetric α-stable draws, ``E e^{iλX} = e^{-|λ|^α}`` (CMS method)."""
    v = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, size)
    w = rng.standard_exponential(size)
    if alpha == 2.0:
        return 2.0 * np.sin(v) * np.sqrt(w)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


class _Stepper:
    """Increment generator for one base process."""

    def __init__(self, base: BaseProcess):
        self.base = base
        if base.is_levy:
            spec = base.levy
            if spec.kind != "stable":
                raise DomainError("path simulation needs a stable exponent")
            self.kind = "brownian" if spec.alpha == 2.0 else "stable"
            self.alpha, self.scale = spec.alpha, spec.scale
        else:
            self.kind = base.diffusion.name if base.diffusion.name in ("bm", "bm_drift", "ou") \
                else "euler"
            self.params = base.diffusion.params

    @property
    def continuous(self) -> bool:
        return self.kind != "stable"

    def variance_rate(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "brownian":
            return np.full_like(x, 2.0 * self.scale)
        if self.kind == "stable":
            raise DomainError("no variance rate for a pure-jump process")
        a = np.asarray(self.base.diffusion.a(x), dtype=float)
        return np.broadcast_to(a * a, x.shape).astype(float)

    def advance(self, x0: float, dts: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = dts.size
        if self.kind == "brownian":
            return x0 + np.cumsum(np.sqrt(2.0 * self.scale * dts) * rng.standard_normal(n))
        if self.kind == "stable":
            return x0 + np.cumsum((self.scale * dts) ** (1.0 / self.alpha)
                                  * symmetric_stable(self.alpha, n, rng))
        z = rng.standard_normal(n) * np.sqrt(dts)
        if self.kind == "bm":
            return x0 + np.cumsum(z)
        if self.kind == "bm_drift":
            return x0 + np.cumsum(self.params[0] * dts + z)
        if self.kind == "ou":
            # Euler step x' = (1 - θ dt) x + √dt Z; all but possibly the last dt agree
            th = self.params[0]
            out = np.empty(n)
            m = n if dts[-1] == dts[0] else n - 1
            if m:
                coef = 1.0 - th * dts[0]
                out[:m], _ = lfilter([1.0], [1.0, -coef], z[:m], zi=[coef * x0])
            if m < n:
                prev = out[m - 1] if m else x0
                out[m] = prev - th * prev * dts[m] + z[m]
            return out
        a, c = self.base.diffusion.a, self.base.diffusion.c
        out = np.empty(n)
        x = x0
        for k in range(n):
            x = x + float(c(x)) * dts[k] + float(a(x)) * z[k]
            out[k] = x
        return out


def _clock(base: BaseProcess, rng) -> float:
    if base.case_id in (3, 6):
        return math.inf
    return float(rng.exponential(1.0 / base.beta))


def simulate_base_path(base: BaseProcess, start: float, config: SimConfig,
                       rng: np.random.Generator | None = None, t0: float = 0.0,
                       horizon: float | None = None) -> Cycle:
    """Simulate one lifetime of ``base`` from ``start`` beginning at time ``t0``.

    The path is killed at an independent Exp(β) time (Cases 1, 2, 4, 5),
    and/or on hitting 0 (Cases 2, 3, 5, 6), or stopped at ``horizon``
    (default ``config.t_max``).
    """
    base.check_state(start)
    rng = derive_rng(config.seed, "base_path") if rng is None else rng
    horizon = config.t_max if horizon is None else horizon
    stepper = _Stepper(base)
    dt = config.dt
    clock = _clock(base, rng)
    remaining = horizon - t0
    if remaining <= 0:
        raise DomainError("cycle starts at or after the horizon")
    cap = min(clock, remaining)
    n_total = max(1, int(math.ceil(cap / dt - 1e-9)))
    bridge = config.hitting_mode == "bridge_corrected" and base.killed_at_zero
    if bridge and not stepper.continuous:
        raise ConfigError("bridge-corrected hitting needs continuous paths")
    t_chunks, x_chunks = [np.array([0.0])], [np.array([float(start)])]
    x_last, done, cause, life = float(start), 0, None, None
    while cause is None:
        m = min(config.chunk, n_total - done)
        s = np.minimum((done + np.arange(1, m + 1)) * dt, cap)
        prev_s = np.concatenate(([done * dt], s[:-1]))
        dts = s - prev_s
        new = stepper.advance(x_last, dts, rng)
        if not np.all(np.isfinite(new)) or np.any(np.abs(new) > config.overflow):
            bad = int(np.argmax(~np.isfinite(new) | (np.abs(new) > config.overflow)))
            raise NumericalFailure("path left the overflow guard",
                                   {"time": t0 + float(s[bad]), "state": float(new[bad])})
        if base.killed_at_zero:
            prev_x = np.concatenate(([x_last], new[:-1]))
            hit = (prev_x * new <= 0.0)
            if config.guard_band > 0:
                hit |= np.abs(new) < config.guard_band
            if bridge:
                u = rng.random(m)
                with np.errstate(over="ignore"):
                    p_cross = np.exp(-2.0 * prev_x * new / (stepper.variance_rate(prev_x) * dts))
                hit |= u < p_cross
            if hit.any():
                j = int(np.argmax(hit))
                if prev_x[j] * new[j] <= 0.0 and prev_x[j] != new[j]:
                    frac = abs(prev_x[j]) / (abs(prev_x[j]) + abs(new[j]))
                else:
                    frac = 0.5
                t_hit = prev_s[j] + frac * dts[j]
                t_chunks.append(np.append(s[:j], t_hit))
                x_chunks.append(np.append(new[:j], 0.0))
                cause, life = "hit_zero", float(t_hit)
                break
        t_chunks.append(s)
        x_chunks.append(new)
        done += m
        x_last = float(new[-1])
        if done >= n_total:
            cause = "exp_clock" if clock <= remaining else "horizon"
            life = float(cap)
    times = t0 + np.concatenate(t_chunks)
    return Cycle(float(start), float(t0), times, np.concatenate(x_chunks), life, cause)


def simulate_rebirth(base: BaseProcess, rebirth: RebirthSpec, start: float, config: SimConfig,
                     stream: tuple = (), reuse_first_stream: bool = False) -> PathBundle:
    """Concatenate cycles, rebirthing from ``μ`` (full) or ``ν/|ν|`` (partial).

    In partial mode each death exiles the process with probability
    ``1/(1+|ν|)``, which ends the bundle.  ``reuse_first_stream`` makes the
    second cycle reuse the first cycle's random stream (a deliberately
    corrupted bundle for negative controls).
    """
    rebirth.check_support(base)
    base.check_state(start)
    cycles, zeta = [], []
    t, x, i = 0.0, float(start), 1
    exiled, truncated = None, False
    while True:
        key = 1 if (reuse_first_stream and i == 2) else i
        cyc = simulate_base_path(base, x, config, derive_rng(config.seed, *stream, "cycle", key),
                                 t0=t, horizon=config.t_max)
        cycles.append(cyc)
        if cyc.death_cause == "horizon":
            break
        t = cyc.end_time
        zeta.append(t)
        rr = derive_rng(config.seed, *stream, "rebirth", i)
        if rebirth.mode == "partial" and rr.random() < rebirth.exile_probability:
            exiled = i
            break
        if t >= config.t_max:
            break
        if i >= config.max_cycles:
            truncated = True
            break
        x = float(rebirth.measure.sample(rr, 1)[0])
        i += 1
    return PathBundle(cycles, np.asarray(zeta, dtype=float), exiled, int(config.seed),
                      tuple(stream), truncated, model_of(base), config.t_max, config.dt)


# local times ------------------------------------------------------------

@dataclass
class LocalTimeEstimate:
    """Local-time field ``L̂^y_t`` on ``y_grid`` at ``t_marks``.

    ``values`` is computed from the whole bundle at once and
    ``per_cycle_values[i]`` from cycle ``i`` alone; their difference is the
    decomposition residual.  The sparse step contributions are kept for
    Stieltjes integrals in time.
    """

    y_grid: np.ndarray
    t_marks: np.ndarray
    values: np.ndarray
    per_cycle_values: list
    epsilon: float | None
    normalization_case: object
    method: str
    contributions: dict = field(repr=False)

    @property
    def decomposition_residual(self) -> float:
        if not self.per_cycle_values:
            return float("nan")
        total = np.sum(self.per_cycle_values, axis=0)
        return float(np.max(np.abs(self.values - total))) if total.size else 0.0

    def at(self, t: float) -> np.ndarray:
        """``L̂^y_t`` for every grid level at an arbitrary time ``t``."""
        c = self.contributions
        frac = _time_fraction(c["t_start"], c["t_end"], t)
        return np.bincount(c["level"], c["amount"] * frac, minlength=self.y_grid.size)


def _time_fraction(ts, te, t):
    span = te - ts
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(span > 0, (t - ts) / span, (t >= te).astype(float))
    return np.clip(f, 0.0, 1.0)


def _accumulate(ts, te, js, amt, marks, ny):
    """``L̂`` at sorted ``marks`` from pairs ordered by step (``ts``, ``te`` nondecreasing)."""
    out = np.empty((ny, marks.size))
    running = np.zeros(ny)
    prev = 0
    for m, t in enumerate(marks):
        full = int(np.searchsorted(te, t, side="right"))
        if full > prev:
            running += np.bincount(js[prev:full], amt[prev:full], minlength=ny)
            prev = full
        out[:, m] = running
        started = int(np.searchsorted(ts, t, side="left"))
        if started > full:
            sl = slice(full, started)
            frac = (t - ts[sl]) / (te[sl] - ts[sl])
            out[:, m] += np.bincount(js[sl], amt[sl] * frac, minlength=ny)
    return out


def _normalizer(base: BaseProcess, stepper: _Stepper, y, method):
    """Per-level divisor turning raw occupation/Tanaka sums into local time."""
    ref = base.reference_density(y)
    if method == "occupation":
        return ref
    return stepper.variance_rate(y) * ref


def _step_contributions(t, x, y_grid, valid, method, eps, divisor, reach=None):
    """Sparse (step, level, amount) local-time contributions of one path.

    ``reach`` (bridge method) holds the per-step ``R`` values.
    """
    n = x.size - 1
    k = np.flatnonzero(valid[:n]) if valid is not None else np.arange(n)
    a, b = x[k], x[k + 1]
    if method == "occupation":
        lo = np.searchsorted(y_grid, a - eps, side="left")
        hi = np.searchsorted(y_grid, a + eps, side="right")
    elif method == "bridge":
        r = reach[k]
        lo = np.searchsorted(y_grid, 0.5 * (a + b - r), side="left")
        hi = np.searchsorted(y_grid, 0.5 * (a + b + r), side="right")
    else:
        lo = np.searchsorted(y_grid, np.minimum(a, b), side="left")
        hi = np.searchsorted(y_grid, np.maximum(a, b), side="right")
    counts = hi - lo
    ks = np.repeat(k, counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    js = np.repeat(lo, counts) + offs
    if method == "occupation":
        # boundary test repeated on the exact values so |x - y| ≤ ε is honoured
        keep = np.abs(x[ks] - y_grid[js]) <= eps
        ks, js = ks[keep], js[keep]
        amt = (t[ks + 1] - t[ks]) / (2.0 * eps) / divisor[js]
    elif method == "bridge":
        yy = y_grid[js]
        amt = np.maximum(reach[ks] - np.abs(x[ks] - yy) - np.abs(x[ks + 1] - yy), 0.0) / divisor[js]
        keep = amt > 0.0
        ks, js, amt = ks[keep], js[keep], amt[keep]
    else:
        xa, xb, yy = x[ks], x[ks + 1], y_grid[js]
        amt = (np.abs(xb - yy) - np.abs(xa - yy) - np.sign(xa - yy) * (xb - xa)) / divisor[js]
        keep = amt != 0.0
        ks, js, amt = ks[keep], js[keep], amt[keep]
    return ks, js, amt


def _bridge_reach(bundle, stepper):
    """Per-step ``R`` of the bridge estimator (rebirth jump steps get 0).

    Uniforms come from one stream per simulated cycle, indexed by the
    absolute step, so a time-shifted bundle reuses the same draws.
    """
    parts = []
    c0, s0 = bundle.origin
    for i, cyc in enumerate(bundle.cycles):
        skip = s0 if i == 0 else 0
        n = cyc.times.size - 1
        rng = derive_rng(bundle.seed, *bundle.stream, "bridge_local_time", c0 + i)
        u = 1.0 - rng.random(skip + n)[skip:]
        dx = np.diff(cyc.states)
        dt = np.maximum(np.diff(cyc.times), 0.0)
        var = stepper.variance_rate(cyc.states[:-1])
        parts.append(np.sqrt(dx * dx - 2.0 * var * dt * np.log(u)))
        parts.append(np.zeros(1))
    return np.concatenate(parts)[:-1] if parts else np.empty(0)


def estimate_local_time(bundle: PathBundle, y_grid, t_marks=None, epsilon: float | None = None,
                        method: str = "occupation", base: BaseProcess | None = None,
                        per_cycle: bool = True) -> LocalTimeEstimate:
    """Local times of a bundle at user marks plus every death time ``ζ_n``.

    ``base`` supplies the normalization (reference density and variance
    rate); by default it is rebuilt from the bundle's stored model.  With
    ``per_cycle=False`` the per-cycle pass is skipped.
    """
    y = np.asarray(y_grid, dtype=float)
    if y.size == 0:
        raise DomainError("empty level grid")
    order = np.argsort(y)
    if np.any(order != np.arange(y.size)):
        raise DomainError("level grid must be sorted")
    if method not in ("occupation", "tanaka", "bridge"):
        raise ConfigError(f"unknown local-time method {method!r}")
    base = base_from_model(bundle.model) if base is None else base
    stepper = _Stepper(base)
    if method != "occupation" and not stepper.continuous:
        raise ConfigError(f"the {method} estimator needs continuous paths")
    eps = None
    if method == "occupation":
        eps = float(epsilon if epsilon is not None else 0.02)
        if stepper.continuous and bundle.dt > eps * eps:
            raise ConfigError(f"dt={bundle.dt} exceeds epsilon^2={eps * eps}; bandwidth too small")
    divisor = _normalizer(base, stepper, y, method)
    marks = np.unique(np.concatenate((np.asarray([] if t_marks is None else t_marks, dtype=float),
                                      bundle.zeta, [bundle.end_time])))
    # global pass over the concatenated path, rebirth jumps masked out
    t_all = np.concatenate([c.times for c in bundle.cycles])
    x_all = np.concatenate([c.states for c in bundle.cycles])
    valid = np.ones(t_all.size, dtype=bool)
    valid[np.cumsum([c.times.size for c in bundle.cycles]) - 1] = False
    reach = _bridge_reach(bundle, stepper) if method == "bridge" else None
    ks, js, amt = _step_contributions(t_all, x_all, y, valid, method, eps, divisor, reach)
    ts, te = t_all[ks], t_all[ks + 1]
    cycle_of = np.repeat(np.arange(len(bundle.cycles)), [c.times.size for c in bundle.cycles])[ks]
    values = _accumulate(ts, te, js, amt, marks, y.size)
    per_cycle_values = []
    offset = 0
    for cyc in (bundle.cycles if per_cycle else []):
        n = cyc.times.size
        r = None if reach is None else reach[offset:offset + n - 1]
        offset += n
        ck, cj, ca = _step_contributions(cyc.times, cyc.states, y, None, method, eps, divisor, r)
        per_cycle_values.append(_accumulate(cyc.times[ck], cyc.times[ck + 1], cj, ca, marks, y.size))
    contributions = {"t_start": ts, "t_end": te, "level": js, "amount": amt, "cycle": cycle_of}
    return LocalTimeEstimate(y, marks, values, per_cycle_values, eps, base.case_id, method,
                             contributions)


def laplace_functional(estimate: LocalTimeEstimate, p: float, y: float) -> float:
    """``∫_0^∞ e^{-ps} dL̂^y_s`` with ``L̂`` linear in time inside each step."""
    if not p > 0.0:
        raise DomainError("p must be positive")
    hits = np.flatnonzero(np.isclose(estimate.y_grid, y, rtol=0.0, atol=1e-12))
    if hits.size == 0:
        raise DomainError(f"level {y} is not on the estimate's grid")
    c = estimate.contributions
    sel = c["level"] == hits[0]
    ts, te, amt = c["t_start"][sel], c["t_end"][sel], c["amount"][sel]
    span = te - ts
    weight = np.exp(-p * ts) * np.where(span > 0, -np.expm1(-p * span) / (p * np.where(span > 0, span, 1.0)), 1.0)
    return float(np.sum(amt * weight))


def shift_bundle(bundle: PathBundle, s: float, atol: float = 1e-9) -> PathBundle:
    """The bundle seen from time ``s``, which must be a step time of some cycle.

    The cycle running at ``s`` is cut there and its remainder becomes the
    first cycle; later cycles follow unchanged, with all times shifted by
    ``-s``.
    """
    for idx, cyc in enumerate(bundle.cycles):
        if cyc.t0 - atol <= s < cyc.end_time:
            k = np.flatnonzero(np.abs(cyc.times - s) <= atol)
            if k.size == 0:
                raise DomainError(f"split time {s} is not a grid time of its cycle")
            k = int(k[0])
            first = Cycle(float(cyc.states[k]), 0.0, cyc.times[k:] - s, cyc.states[k:].copy(),
                          cyc.end_time - s, cyc.death_cause)
            rest = [Cycle(c.start, c.t0 - s, c.times - s, c.states, c.lifetime, c.death_cause)
                    for c in bundle.cycles[idx + 1:]]
            c0, s0 = bundle.origin
            origin = (c0 + idx, (s0 if idx == 0 else 0) + k)
            return replace(bundle, cycles=[first] + rest, zeta=bundle.zeta[bundle.zeta > s] - s,
                           t_max=bundle.t_max - s, origin=origin)
    raise DomainError(f"split time {s} lies outside the bundle")
