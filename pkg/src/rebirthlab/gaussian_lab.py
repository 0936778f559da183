"""Gaussian fields with potential-kernel covariances and chi-square processes.

Fields are sampled on finite grids, either through a Cholesky factor with
escalating diagonal jitter, or exactly and in linear time when the
covariance has the one-dimensional Markov form ``K(x, y) = P(x∧y) Q(x∨y)``.
For such kernels ``X(x) = Q(x) W(P(x)/Q(x))`` with ``W`` a standard Brownian
motion, which lets Brownian-exponent fields be sampled on dyadic grids of
a million points and refined by Brownian-bridge midpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from . import diffusion_kernels as dk
from . import levy_kernels as lk
from .errors import DegenerateCovarianceError, DomainError
from .rng import derive_rng

__all__ = [
    "GaussianFieldSpec",
    "ChiSquareField",
    "MarkovFactors",
    "factorize",
    "sample_field",
    "sample_markov",
    "midpoint_refine",
    "chi_square",
    "chi_square_mean",
    "eta_p_decomposition",
    "modulus_target_local",
    "modulus_target_uniform",
    "remainder_G",
    "remainder_bound",
    "log_condition_profile",
    "levy_covariance",
    "diffusion_covariance",
    "brownian_markov",
    "diffusion_markov",
    "empirical_covariance_check",
]

JITTER_DECADES = 3


@dataclass(frozen=True)
class MarkovFactors:
    """Increasing ``P`` and positive ``Q`` with ``K(x, y) = P(x∧y) Q(x∨y)``."""

    P: Callable
    Q: Callable
    label: str = "markov"


@dataclass(frozen=True, eq=False)
class GaussianFieldSpec:
    """A centred Gaussian field on ``grid`` with covariance ``covariance(xs, ys)``.

    ``covariance`` maps two broadcastable arrays to kernel values.  If
    ``markov`` is given, sampling uses the exact linear-time construction.
    ``jitter=None`` selects ``1e-12·trace/n``.
    """

    grid: np.ndarray
    covariance: Callable
    cov_id: str = "custom"
    jitter: float | None = None
    markov: MarkovFactors | None = None

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1:
            raise DomainError("grid must be one-dimensional")
        object.__setattr__(self, "grid", g)

    def matrix(self) -> np.ndarray:
        xx, yy = np.meshgrid(self.grid, self.grid, indexing="ij")
        c = np.asarray(self.covariance(xx, yy), dtype=float)
        if not np.all(np.isfinite(c)):
            raise DomainError("covariance is not finite on the grid")
        return 0.5 * (c + c.T)


def factorize(c: np.ndarray, jitter: float | None = None) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``c + δI`` with ``δ`` escalated over 3 decades.

    Returns the factor and the jitter actually used.
    """
    n = c.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    base = 1e-12 * float(np.trace(c)) / n if jitter is None else float(jitter)
    tries = [0.0] if base == 0.0 else []
    tries += [base * 10.0 ** k for k in range(JITTER_DECADES + 1)]
    for delta in tries:
        try:
            return linalg.cholesky(c + delta * np.eye(n), lower=True), delta
        except linalg.LinAlgError:
            continue
    w = np.linalg.eigvalsh(c)
    raise DegenerateCovarianceError(
        f"covariance not factorizable after jitter {tries[-1]:.3e}; "
        f"worst eigenvalue {w[0]:.3e}", {"min_eigenvalue": float(w[0]),
                                          "max_eigenvalue": float(w[-1]),
                                          "jitter": tries[-1]})


def sample_markov(markov: MarkovFactors, grid, n_samples: int, rng: np.random.Generator):
    """Exact samples of ``Q(x) W(P(x)/Q(x))`` on a sorted grid."""
    g = np.asarray(grid, dtype=float)
    if np.any(np.diff(g) <= 0):
        raise DomainError("Markov sampling needs a strictly increasing grid")
    P = np.asarray(markov.P(g), dtype=float)
    Q = np.asarray(markov.Q(g), dtype=float)
    r = P / Q
    dr = np.diff(np.concatenate(([0.0], r)))
    if np.any(dr < 0) or np.any(Q <= 0):
        raise DomainError("P/Q must be nonnegative and nondecreasing with Q > 0")
    z = rng.standard_normal((n_samples, g.size))
    z *= np.sqrt(dr)
    np.cumsum(z, axis=1, out=z)
    z *= Q
    return z


def midpoint_refine(values, grid, markov: MarkovFactors, rng: np.random.Generator):
    """Insert exact conditional samples at every interval midpoint.

    ``values`` has shape ``(n_samples, len(grid))``; returns the refined
    samples and grid (length ``2·len(grid) - 1``).
    """
    g = np.asarray(grid, dtype=float)
    v = np.atleast_2d(np.asarray(values, dtype=float))
    mid = 0.5 * (g[1:] + g[:-1])
    r = lambda t: np.asarray(markov.P(t), dtype=float) / np.asarray(markov.Q(t), dtype=float)
    Qg, Qm = np.asarray(markov.Q(g), dtype=float), np.asarray(markov.Q(mid), dtype=float)
    rg, rm = r(g), r(mid)
    w_left, w_right = v[:, :-1] / Qg[:-1], v[:, 1:] / Qg[1:]
    # Brownian bridge for W between r_k and r_{k+1}
    span = rg[1:] - rg[:-1]
    frac = (rm - rg[:-1]) / span
    mean = w_left + frac * (w_right - w_left)
    sd = np.sqrt((rm - rg[:-1]) * (rg[1:] - rm) / span)
    w_mid = mean + sd * rng.standard_normal(mean.shape)
    out = np.empty((v.shape[0], 2 * g.size - 1))
    out[:, ::2] = v
    out[:, 1::2] = w_mid * Qm
    new_grid = np.empty(2 * g.size - 1)
    new_grid[::2], new_grid[1::2] = g, mid
    return out, new_grid


def sample_field(spec: GaussianFieldSpec, n_samples: int, seed: int, *stream) -> np.ndarray:
    """``n_samples`` i.i.d. draws as rows of a ``(n_samples, len(grid))`` matrix.

    The generator is derived from ``(seed, *stream)``; the same arguments
    always give bit-identical output.
    """
    n = int(n_samples)
    m = spec.grid.size
    if n == 0 or m == 0:
        return np.zeros((n, m))
    rng = derive_rng(seed, "field", *stream)
    if spec.markov is not None:
        order = np.argsort(spec.grid)
        out = np.empty((n, m))
        out[:, order] = sample_markov(spec.markov, spec.grid[order], n, rng)
        return out
    chol, _ = factorize(spec.matrix(), spec.jitter)
    z = rng.standard_normal((n, m))
    return z @ chol.T


@dataclass
class ChiSquareField:
    """Pointwise chi-square combination of independent Gaussian fields."""

    k: int
    component_samples: list
    s: float
    values: np.ndarray
    mode: str = "G"
    grid: np.ndarray | None = None


def chi_square(fields: Sequence[np.ndarray], s: float = 0.0, mode: str = "G",
               grids: Sequence | None = None) -> ChiSquareField:
    """Combine independent fields into ``G_{r,s}`` or ``Y_k``.

    ``mode="G"``: ``Σ_i ½(η_i + s)²`` where the last field plays ``η_p``.
    ``mode="Y"``: ``Σ_i η_i²`` (``s`` must be 0).
    """
    if not fields:
        raise DomainError("need at least one component field")
    arrs = [np.asarray(f, dtype=float) for f in fields]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise DomainError("component fields must share one grid and sample count")
    if grids is not None:
        g0 = np.asarray(grids[0])
        if any(np.asarray(g).shape != g0.shape or not np.array_equal(g, g0) for g in grids):
            raise DomainError("component fields live on different grids")
    if mode == "G":
        vals = sum(0.5 * (a + s) ** 2 for a in arrs)
    elif mode == "Y":
        if s != 0.0:
            raise DomainError("plain chi-square mode takes no shift")
        vals = sum(a * a for a in arrs)
    else:
        raise DomainError(f"unknown chi-square mode {mode!r}")
    return ChiSquareField(len(arrs), arrs, float(s), vals, mode,
                          None if grids is None else np.asarray(grids[0]))


def chi_square_mean(variances: Sequence, s: float = 0.0):
    """``E G_{r,s}(x) = Σ_i ½(U_i(x,x) + s²)`` from component variances."""
    return sum(0.5 * (np.asarray(v, dtype=float) + s * s) for v in variances)


def eta_p_decomposition(v_field_sample, u_p_values, u_p0: float, xi):
    """``η_p(x) = η̄_p(x) + u^p(x)/√u^p(0) · ξ``.

    ``v_field_sample`` has covariance ``v^p`` (shape ``(n, m)``), ``u_p_values``
    holds ``u^p(x)`` on the grid and ``xi`` is one standard normal per row.
    """
    if not u_p0 > 0.0:
        raise DomainError("u^p(0) must be positive")
    v = np.asarray(v_field_sample, dtype=float)
    xi = np.asarray(xi, dtype=float).reshape(-1, 1)
    return v + np.asarray(u_p_values, dtype=float)[None, :] / np.sqrt(u_p0) * xi


def modulus_target_local(kernel_sigma2: Callable, u):
    """Local normalizer ``(2σ²(u) log log(1/u))^{1/2}``."""
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0.0) or np.any(u >= np.exp(-1.0)):
        raise DomainError("local modulus needs 0 < u < 1/e")
    out = np.sqrt(2.0 * np.asarray(kernel_sigma2(u)) * np.log(np.log(1.0 / u)))
    return float(out) if out.ndim == 0 else out


def modulus_target_uniform(kernel_sigma2: Callable, u, v):
    """Uniform normalizer ``(2σ²(u, v) log(1/|u-v|))^{1/2}``.

    ``kernel_sigma2(u, v)`` is the increment variance of the field.
    """
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    h = np.abs(u - v)
    if np.any(h == 0.0) or np.any(h >= 1.0):
        raise DomainError("uniform modulus needs 0 < |u - v| < 1")
    out = np.sqrt(2.0 * np.asarray(kernel_sigma2(u, v)) * np.log(1.0 / h))
    return float(out) if out.ndim == 0 else out


def remainder_G(samples, cov: np.ndarray, d_index: int, iu, iv):
    """``G(u,v) = (1 - V(v,d)) η(u) - (1 - V(u,d)) η(v)`` with ``V = U(·,d)/U(d,d)``."""
    eta = np.atleast_2d(samples)
    V = cov[:, d_index] / cov[d_index, d_index]
    return (1.0 - V[iv]) * eta[:, iu] - (1.0 - V[iu]) * eta[:, iv]


def remainder_bound(samples, cov: np.ndarray, d_index: int, iu, iv):
    """Cauchy-Schwarz bound ``σ(d,v)|η(u)-η(v)|/U^{1/2}(d,d) + σ(u,v)|η(v)|/U^{1/2}(d,d)``."""
    eta = np.atleast_2d(samples)
    diag = np.diag(cov)
    sig = lambda a, b: np.sqrt(np.maximum(diag[a] + diag[b] - 2.0 * cov[a, b], 0.0))
    root = np.sqrt(cov[d_index, d_index])
    return (sig(d_index, iv) * np.abs(eta[:, iu] - eta[:, iv])
            + sig(iu, iv) * np.abs(eta[:, iv])) / root


def log_condition_profile(kernel_sigma2: Callable, xs, n_probe: int = 64):
    """``sup_{h ≤ x} σ²(h) log(1/h)`` for each ``x`` (stationary increments).

    The supremum is taken over a geometric probe set below each ``x``.
    """
    out = []
    for x in np.asarray(xs, dtype=float):
        h = x * np.geomspace(1e-6, 1.0, n_probe)
        out.append(float(np.max(np.asarray(kernel_sigma2(h)) * np.log(1.0 / h))))
    return np.array(out)


# covariance constructors -------------------------------------------------

def levy_covariance(spec: lk.LevyExponentSpec, kind: str, beta: float = 0.0) -> Callable:
    """Covariance callable for ``u`` (``u^β(x-y)``), ``v`` or ``frak_u0``."""
    if kind == "u":
        return lambda x, y: lk.u_beta(spec, beta, np.subtract(x, y))
    if kind == "v":
        return lambda x, y: lk.v_beta(spec, beta, x, y)
    if kind == "frak_u0":
        return lambda x, y: lk.frak_u0(spec, x, y)
    raise DomainError(f"unknown Lévy covariance {kind!r}")


def diffusion_covariance(kind: str, factors: dk.KernelFactors | None = None,
                         spec: dk.DiffusionSpec | None = None) -> Callable:
    if kind == "u_bar":
        return lambda x, y: dk.u_bar_beta(factors, x, y)
    if kind == "v_bar":
        return lambda x, y: dk.v_bar_beta(factors, x, y)
    if kind == "s_min":
        sp = spec if spec is not None else factors.spec
        return lambda x, y: dk.frak_u0_diffusion(sp, x, y)
    if kind == "h_bar":
        return lambda x, y: dk.h_bar(factors, x, y)
    raise DomainError(f"unknown diffusion covariance {kind!r}")


def brownian_markov(kind: str, beta: float = 0.0) -> MarkovFactors:
    """Closed-form Markov factors of the Brownian-exponent kernels.

    ``u``: ``e^{-√(2β)|x-y|}/√(2β)``; ``frak_u0``: ``2(x∧y)`` on ``x, y > 0``;
    ``v``: the ``β``-potential killed at 0, on ``x, y > 0``.
    """
    if kind == "frak_u0":
        return MarkovFactors(lambda x: 2.0 * np.asarray(x, dtype=float),
                             lambda x: np.ones_like(np.asarray(x, dtype=float)), kind)
    if not beta > 0.0:
        raise DomainError("beta must be positive")
    k = np.sqrt(2.0 * beta)
    if kind == "u":
        return MarkovFactors(lambda x: np.exp(k * np.asarray(x, dtype=float)) / k,
                             lambda x: np.exp(-k * np.asarray(x, dtype=float)), kind)
    if kind == "v":
        # (e^{k(x∧y)} - e^{-k(x∧y)}) e^{-k(x∨y)} / k on the positive half-line
        return MarkovFactors(lambda x: 2.0 * np.sinh(k * np.asarray(x, dtype=float)) / k,
                             lambda x: np.exp(-k * np.asarray(x, dtype=float)), kind)
    raise DomainError(f"no Markov factors for {kind!r}")


def diffusion_markov(kind: str, factors: dk.KernelFactors | None = None,
                     spec: dk.DiffusionSpec | None = None) -> MarkovFactors:
    """Markov factors of ``ū^β`` (``p``, ``q``) or ``s∧s`` (``s``, 1)."""
    if kind == "u_bar":
        return MarkovFactors(factors.p, factors.q, kind)
    if kind == "s_min":
        sp = spec if spec is not None else factors.spec
        return MarkovFactors(lambda x: dk.scale_function(sp, x),
                             lambda x: np.ones_like(np.asarray(x, dtype=float)), kind)
    raise DomainError(f"no Markov factors for {kind!r}")


def empirical_covariance_check(samples: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Entrywise z-scores of the empirical covariance against ``target``.

    The standard error of ``mean(X_i X_j)`` uses the Gaussian fourth moment
    ``Var(X_i X_j) = C_ii C_jj + C_ij²``.
    """
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    emp = x.T @ x / n
    d = np.diag(target)
    se = np.sqrt((np.outer(d, d) + target ** 2) / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (emp - target) / se, 0.0)
    return z
