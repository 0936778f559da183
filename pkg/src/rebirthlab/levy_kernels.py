"""Potential densities and increment variances of symmetric Lévy processes.

For a symmetric exponent ψ the kernels are one-dimensional Fourier
integrals,

    u^β(x)   = (1/π) ∫_0^∞ cos(λx) / (β + ψ(λ)) dλ
    φ(x)     = (1/π) ∫_0^∞ (1 - cos λx) / ψ(λ) dλ
    σ_β²(x)  = (2/π) ∫_0^∞ (1 - cos λx) / (β + ψ(λ)) dλ

and the remaining kernels are algebraic combinations of these.  Every
public function accepts a scalar (returns ``float``) or an array (returns
``ndarray``); array inputs are evaluated in a single vectorized quadrature
pass and all values are memoized per (spec, β, rounded x).
"""
from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass, field

import numpy as np

from . import quadrature as quad
from .errors import DomainError

__all__ = [
    "LevyExponentSpec",
    "KernelEval",
    "u_beta",
    "phi0",
    "frak_u0",
    "sigma2",
    "sigma2_asymptotic",
    "c_r",
    "v_beta",
    "evaluate",
    "kernel_matrix",
    "clear_cache",
]

DEFAULT_REL_TOL = 1e-10
_ROUND = 12


@dataclass(frozen=True)
class LevyExponentSpec:
    """Symmetric characteristic exponent ψ.

    Use :meth:`stable`, :meth:`brownian` or :meth:`tabulated` rather than the
    raw constructor.  For ``kind="stable"``, ``ψ(λ) = scale·|λ|^alpha``.  A
    tabulated exponent is interpolated linearly in log-log coordinates,
    extended beyond the grid as a pure power law of index ``rv_index`` and
    below it with the slope of the first segment.
    """

    kind: str
    alpha: float = 2.0
    scale: float = 1.0
    lambda_grid: tuple = ()
    psi_values: tuple = ()
    rv_index: float | None = None
    _digest: str = field(default="", compare=False, repr=False)

    def __post_init__(self):
        if self.kind == "stable":
            if not 1.0 < self.alpha <= 2.0:
                raise DomainError(f"stable index must lie in (1, 2], got {self.alpha}")
            if not self.scale > 0.0:
                raise DomainError("stable scale must be positive")
        elif self.kind == "tabulated":
            lam = np.asarray(self.lambda_grid, dtype=float)
            psi = np.asarray(self.psi_values, dtype=float)
            if lam.ndim != 1 or lam.size < 2 or lam.shape != psi.shape:
                raise DomainError("tabulated exponent needs matching grids of length >= 2")
            if np.any(lam <= 0.0) or np.any(np.diff(lam) <= 0.0):
                raise DomainError("lambda grid must be positive and strictly increasing")
            if np.any(psi <= 0.0) or not np.all(np.isfinite(psi)):
                raise DomainError("tabulated psi values must be strictly positive")
            if self.rv_index is None or not 1.0 < self.rv_index <= 2.0:
                raise DomainError("rv_index must lie in (1, 2] so 1/(1+psi) is integrable")
            if self._low_slope >= 3.0:
                raise DomainError("psi vanishes too fast at 0 for phi to be finite")
        else:
            raise DomainError(f"unknown exponent kind {self.kind!r}")
        object.__setattr__(self, "_digest", hashlib.sha256(repr(
            (self.kind, self.alpha, self.scale, self.lambda_grid, self.psi_values,
             self.rv_index)).encode()).hexdigest()[:16])

    @classmethod
    def stable(cls, alpha: float, scale: float = 1.0) -> "LevyExponentSpec":
        return cls("stable", alpha=float(alpha), scale=float(scale))

    @classmethod
    def brownian(cls) -> "LevyExponentSpec":
        """Exponent ``λ²/2`` of standard Brownian motion."""
        return cls.stable(2.0, 0.5)

    @classmethod
    def tabulated(cls, lambda_grid, psi_values, rv_index: float) -> "LevyExponentSpec":
        return cls("tabulated", lambda_grid=tuple(float(v) for v in lambda_grid),
                   psi_values=tuple(float(v) for v in psi_values),
                   rv_index=float(rv_index))

    @property
    def digest(self) -> str:
        """Short stable hash used for cache keys and bundle headers."""
        return self._digest

    @property
    def index(self) -> float:
        return self.alpha if self.kind == "stable" else float(self.rv_index)

    @property
    def tail_coef(self) -> float:
        """``c`` with ``ψ(λ) = c λ^index`` beyond the knee."""
        if self.kind == "stable":
            return self.scale
        return self.psi_values[-1] / self.lambda_grid[-1] ** self.rv_index

    @property
    def _low_slope(self) -> float:
        lam, psi = self.lambda_grid, self.psi_values
        return float(np.log(psi[1] / psi[0]) / np.log(lam[1] / lam[0]))

    def psi(self, lam):
        lam = np.abs(np.asarray(lam, dtype=float))
        if self.kind == "stable":
            return self.scale * lam ** self.alpha
        grid = np.log(np.asarray(self.lambda_grid))
        vals = np.log(np.asarray(self.psi_values))
        with np.errstate(divide="ignore"):
            ll = np.log(lam)
        out = np.exp(np.interp(ll, grid, vals))
        hi = lam > self.lambda_grid[-1]
        out = np.where(hi, self.tail_coef * lam ** self.index, out)
        lo = lam < self.lambda_grid[0]
        low = self.psi_values[0] * (lam / self.lambda_grid[0]) ** self._low_slope
        return np.where(lo, low, out)

    def knee(self, beta: float) -> float:
        """λ beyond which ψ is an exact power law with ``β ≤ ψ/4``."""
        base = 1.0 if self.kind == "stable" else self.lambda_grid[-1]
        return max(base, (4.0 * beta / self.tail_coef) ** (1.0 / self.index))

    @property
    def kinks(self):
        return None if self.kind == "stable" else np.asarray(self.lambda_grid)


@dataclass(frozen=True)
class KernelEval:
    """A kernel value with the quadrature settings that produced it."""

    case_id: str
    beta: float
    x: float
    value: float
    error: float
    cutoff: float
    n_panels: int
    rel_tol: float


class _Cache:
    """Thread-safe memo of kernel values keyed on (spec, quantity, β, x)."""

    def __init__(self, max_entries: int = 500_000):
        self._data: dict = {}
        self._lock = threading.Lock()
        self.max_entries = max_entries

    def lookup(self, key_prefix, xs):
        with self._lock:
            return [self._data.get(key_prefix + (x,)) for x in xs]

    def store(self, key_prefix, xs, vals):
        with self._lock:
            if len(self._data) + len(xs) > self.max_entries:
                self._data.clear()
            for x, v in zip(xs, vals):
                self._data[key_prefix + (x,)] = v

    def clear(self):
        with self._lock:
            self._data.clear()


_cache = _Cache()


def clear_cache() -> None:
    _cache.clear()


def _g_and_tail(spec: LevyExponentSpec, beta: float):
    c, r = spec.tail_coef, spec.index

    def g(lam):
        return 1.0 / (beta + spec.psi(lam))

    def tail(b):
        return quad.power_law_tail(beta, c, r, b)

    return g, tail


def _transform(spec, quantity, beta, x, rel_tol):
    """Raw half-line transform, evaluated through the cache; returns array."""
    xr = np.round(np.abs(np.atleast_1d(np.asarray(x, dtype=float))), _ROUND)
    uniq, inv = np.unique(xr, return_inverse=True)
    prefix = (spec.digest, quantity, float(beta), rel_tol)
    found = _cache.lookup(prefix, uniq.tolist())
    missing = np.array([i for i, v in enumerate(found) if v is None], dtype=int)
    vals = np.array([0.0 if v is None else v for v in found])
    if missing.size:
        g, tail = _g_and_tail(spec, beta)
        fn = quad.cos_transform_batch if quantity == "cos" else quad.one_minus_cos_transform_batch
        new, _, _, _ = fn(g, uniq[missing], spec.knee(beta), tail, rel_tol, spec.kinks)
        vals[missing] = new
        _cache.store(prefix, uniq[missing].tolist(), new.tolist())
    return vals[inv].reshape(np.shape(x))


def _out(arr):
    arr = np.asarray(arr, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def _check_beta(beta, allow_zero=False):
    if not np.isfinite(beta) or beta < 0.0 or (beta == 0.0 and not allow_zero):
        raise DomainError(f"rate must be {'nonnegative' if allow_zero else 'positive'}, got {beta}")


def u_beta(spec: LevyExponentSpec, beta: float, x, rel_tol: float = DEFAULT_REL_TOL):
    """β-potential density ``u^β(x)`` with respect to Lebesgue measure."""
    _check_beta(beta)
    return _out(_transform(spec, "cos", beta, x, rel_tol) / np.pi)


def phi0(spec: LevyExponentSpec, x, rel_tol: float = DEFAULT_REL_TOL):
    """Zero-level increment functional ``φ(x) = (1/2π)∫(1 - cos λx)/ψ(λ) dλ``."""
    return _out(_transform(spec, "omc", 0.0, x, rel_tol) / np.pi)


def sigma2(spec: LevyExponentSpec, beta: float, x, rel_tol: float = DEFAULT_REL_TOL):
    """Increment variance ``σ_β²(x) = (2/π)∫(1 - cos λx)/(β + ψ(λ)) dλ``.

    At ``β = 0`` this is ``2φ(x)``.
    """
    _check_beta(beta, allow_zero=True)
    return _out(2.0 * _transform(spec, "omc", beta, x, rel_tol) / np.pi)


def frak_u0(spec: LevyExponentSpec, x, y, rel_tol: float = DEFAULT_REL_TOL):
    """0-potential of the process killed at 0: ``φ(x) + φ(y) - φ(x - y)``."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.any(x == 0.0) or np.any(y == 0.0):
        raise DomainError("0 is not in the state space of the process killed at 0")
    pts = np.concatenate((x.ravel(), y.ravel(), (x - y).ravel()))
    ph = phi0(spec, pts, rel_tol)
    n = x.size
    return _out((ph[:n] + ph[n:2 * n] - ph[2 * n:]).reshape(x.shape))


def v_beta(spec: LevyExponentSpec, beta: float, x, y, rel_tol: float = DEFAULT_REL_TOL):
    """β-potential of the process also killed on hitting 0."""
    _check_beta(beta)
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    n = x.size
    pts = np.concatenate((x.ravel(), y.ravel(), (x - y).ravel(), [0.0]))
    u = u_beta(spec, beta, pts, rel_tol)
    val = u[2 * n:3 * n] - u[:n] * u[n:2 * n] / u[-1]
    val = np.where((x.ravel() == 0.0) | (y.ravel() == 0.0), 0.0, val)
    return _out(val.reshape(x.shape))


def c_r(r: float, rel_tol: float = 1e-12) -> float:
    """``C_r = (4/π)∫_0^∞ sin²(s/2)/s^r ds`` by quadrature."""
    if not 1.0 < r <= 2.0:
        raise DomainError(f"C_r needs 1 < r <= 2, got {r}")

    def g(s):
        return np.asarray(s, dtype=float) ** -r

    res = quad.one_minus_cos_transform(g, 1.0, 1.0, lambda b: quad.power_law_tail(0.0, 1.0, r, b),
                                       rel_tol)
    return 2.0 * res.value / np.pi


def sigma2_asymptotic(spec: LevyExponentSpec, x):
    """Small-distance equivalent ``C_r / (|x| ψ(1/|x|))`` of every ``σ_β²``."""
    x = np.abs(np.asarray(x, dtype=float))
    return _out(c_r(spec.index) / (x * spec.psi(1.0 / x)))


_CASES = ("U_beta", "V_beta", "FrakU0", "Sigma2_beta", "Sigma2_0", "Phi")


def evaluate(spec: LevyExponentSpec, case_id: str, beta: float, x: float, y: float = 0.0,
             rel_tol: float = DEFAULT_REL_TOL) -> KernelEval:
    """Evaluate one kernel and report the quadrature settings used.

    For the one-argument kernels the argument is ``x``; the two-argument
    kernels ``V_beta`` and ``FrakU0`` use ``(x, y)`` and report the
    settings of their ``x - y`` transform.
    """
    if case_id not in _CASES:
        raise DomainError(f"unknown kernel {case_id!r}; expected one of {_CASES}")
    g_beta = 0.0 if case_id in ("FrakU0", "Sigma2_0", "Phi") else beta
    kind = "cos" if case_id in ("U_beta", "V_beta") else "omc"
    arg = x - y if case_id in ("V_beta", "FrakU0") else x
    g, tail = _g_and_tail(spec, g_beta)
    fn = quad.cos_transform if kind == "cos" else quad.one_minus_cos_transform
    if kind == "omc" and arg == 0.0:
        res = quad.QuadResult(0.0, 0.0, 0.0, 0)
    else:
        res = fn(g, arg, spec.knee(g_beta), tail, rel_tol, spec.kinks)
    value = {
        "U_beta": lambda: u_beta(spec, beta, x, rel_tol),
        "V_beta": lambda: v_beta(spec, beta, x, y, rel_tol),
        "FrakU0": lambda: frak_u0(spec, x, y, rel_tol),
        "Sigma2_beta": lambda: sigma2(spec, beta, x, rel_tol),
        "Sigma2_0": lambda: sigma2(spec, 0.0, x, rel_tol),
        "Phi": lambda: phi0(spec, x, rel_tol),
    }[case_id]()
    scale = 1.0 / np.pi if case_id in ("U_beta", "V_beta", "Phi") else 2.0 / np.pi
    return KernelEval(case_id, float(g_beta), float(x), float(value), scale * res.error,
                      res.cutoff, max(res.n_panels, 1), rel_tol)


def kernel_matrix(spec: LevyExponentSpec, kind: str, grid, beta: float = 0.0,
                  rel_tol: float = DEFAULT_REL_TOL) -> np.ndarray:
    """Covariance matrix of ``u^β``, ``v^β`` or ``𝔲⁰`` on a grid."""
    g = np.asarray(grid, dtype=float)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    if kind == "u":
        return u_beta(spec, beta, xx - yy, rel_tol)
    if kind == "v":
        return v_beta(spec, beta, xx, yy, rel_tol)
    if kind == "frak_u0":
        return frak_u0(spec, xx, yy, rel_tol)
    raise DomainError(f"unknown Lévy covariance {kind!r}")
