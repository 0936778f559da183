"""Scale functions and potential densities of one-dimensional diffusions.

The generator is ``½a²(x) d²/dx² + c(x) d/dx``.  We use the scale
``s'(x) = exp(-∫_0^x 2c/a²)`` with ``s(0) = 0`` and the speed density
``m'(x) = 2/(a²(x) s'(x))``; all kernels are densities with respect to this
speed measure.  The β-potential density factors as ``p(x∧y) q(x∨y)`` where
``p`` (increasing) and ``q`` (decreasing) solve ``½a²u'' + cu' = βu`` and
``q p' - p q' = s'``.

The factors are found through their logarithmic derivatives ``κ = u'/u``,
which satisfy the Riccati equation ``κ' = 2(β - cκ)/a² - κ²``.  The growing
solution is attracting when integrated forward and the decaying one when
integrated backward, so both are started from the local WKB slope at the
far boundary and integrated toward the interior; the logs ``log p`` and
``log q`` never overflow even on long domains.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainError, NumericalFailure

__all__ = [
    "DiffusionSpec",
    "KernelFactors",
    "scale_function",
    "scale_derivative",
    "speed_density",
    "solve_factors",
    "u_bar_beta",
    "v_bar_beta",
    "frak_u0_diffusion",
    "sigma_bar2",
    "h_bar",
    "row_integral",
    "kernel_matrix",
]

GRID_EPSILON = 1e-6
WRONSKIAN_TOL = 1e-6
_RTOL, _ATOL = 1e-12, 1e-14
_custom_ids = itertools.count()


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients ``a`` and ``c`` of the generator on ``[x_lo, x_hi]``.

    ``x_lo ≤ 0 ≤ x_hi`` is required since the scale is pinned at 0; kernels
    of the process killed at an independent exponential time (with or
    without killing at 0) need ``x_lo < 0``.
    """

    a: Callable = field(compare=False)
    c: Callable = field(compare=False)
    domain: tuple = (-10.0, 10.0)
    name: str = "custom"
    params: tuple = ()

    def __post_init__(self):
        lo, hi = self.domain
        if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
            raise DomainError(f"diffusion domain must be a bounded interval, got {self.domain}")
        if not lo <= 0.0 <= hi:
            raise DomainError("diffusion domain must contain 0 (scale normalization s(0)=0)")
        probe = np.linspace(lo, hi, 257)
        if np.any(np.asarray(self.a(probe), dtype=float) == 0.0):
            raise DomainError("diffusion coefficient a(x) vanishes on the domain")
        if self.name == "custom" and not self.params:
            object.__setattr__(self, "params", (next(_custom_ids),))

    @property
    def digest(self) -> str:
        return f"{self.name}{self.params}{tuple(self.domain)}"

    @classmethod
    def bm(cls, domain=(-10.0, 10.0)) -> "DiffusionSpec":
        """Standard Brownian motion, ``a = 1``, ``c = 0``."""
        return cls(lambda x: np.ones_like(np.asarray(x, dtype=float)),
                   lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                   tuple(domain), "bm", ())

    @classmethod
    def bm_drift(cls, drift: float, domain=(-10.0, 10.0)) -> "DiffusionSpec":
        d = float(drift)
        return cls(lambda x: np.ones_like(np.asarray(x, dtype=float)),
                   lambda x: np.full_like(np.asarray(x, dtype=float), d),
                   tuple(domain), "bm_drift", (d,))

    @classmethod
    def ou(cls, theta: float, domain=(-10.0, 10.0)) -> "DiffusionSpec":
        """Ornstein-Uhlenbeck, ``a = 1``, ``c(x) = -θx``."""
        th = float(theta)
        return cls(lambda x: np.ones_like(np.asarray(x, dtype=float)),
                   lambda x: -th * np.asarray(x, dtype=float),
                   tuple(domain), "ou", (th,))

    @classmethod
    def from_table(cls, x, a, c) -> "DiffusionSpec":
        """Piecewise-linear coefficients through tabulated ``(x, a, c)`` rows."""
        x, a, c = (np.asarray(v, dtype=float) for v in (x, a, c))
        if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0):
            raise DomainError("table x must be strictly increasing with >= 2 rows")
        if a.shape != x.shape or c.shape != x.shape:
            raise DomainError("table columns must have equal length")
        key = (tuple(x), tuple(a), tuple(c))
        return cls(lambda z: np.interp(z, x, a), lambda z: np.interp(z, x, c),
                   (float(x[0]), float(x[-1])), "table", (hash(key),))

    def check(self, x, allow_zero=True, positive=False):
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        if np.any(x < lo) or np.any(x > hi) or not np.all(np.isfinite(x)):
            raise DomainError(f"point outside diffusion domain {self.domain}")
        if positive and (np.any(x < 0.0) or (not allow_zero and np.any(x == 0.0))):
            raise DomainError("state space is (0, x_hi]; got a nonpositive point")
        return x


# scale function ----------------------------------------------------------

_scale_cache: dict = {}


def _scale_solution(spec: DiffusionSpec):
    key = spec.digest
    if key in _scale_cache:
        return _scale_cache[key]

    def rhs(x, y):
        a = float(spec.a(x))
        return [2.0 * float(spec.c(x)) / (a * a), np.exp(-y[0])]

    lo, hi = spec.domain
    sols = []
    for end in (lo, hi):
        if end == 0.0:
            sols.append(None)
            continue
        sol = solve_ivp(rhs, (0.0, end), [0.0, 0.0], method="DOP853", rtol=_RTOL,
                        atol=_ATOL, dense_output=True)
        if not sol.success:
            raise NumericalFailure("scale-function integration failed",
                                   {"message": sol.message, "end": end})
        sols.append(sol.sol)
    _scale_cache[key] = tuple(sols)
    return _scale_cache[key]


def _scale_state(spec, x):
    x = np.atleast_1d(spec.check(x)).ravel()
    neg, pos = _scale_solution(spec)
    out = np.zeros((2, x.size))
    for sol, mask in ((neg, x < 0.0), (pos, x > 0.0)):
        if mask.any():
            out[:, mask] = sol(x[mask])
    return out


def scale_function(spec: DiffusionSpec, x):
    """Scale function ``s(x)`` with ``s(0) = 0``."""
    val = _scale_state(spec, x)[1].reshape(np.shape(x))
    return float(val) if val.ndim == 0 else val


def scale_derivative(spec: DiffusionSpec, x):
    val = np.exp(-_scale_state(spec, x)[0]).reshape(np.shape(x))
    return float(val) if val.ndim == 0 else val


def speed_density(spec: DiffusionSpec, x):
    """``m'(x) = 2 / (a(x)² s'(x))``."""
    a = np.asarray(spec.a(np.asarray(x, dtype=float)), dtype=float)
    return 2.0 / (a * a * scale_derivative(spec, x))


# kernel factors ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelFactors:
    """Solved factors ``p_β``, ``q_β`` of the β-potential density.

    ``log_p``/``log_q`` and the helper integrals are dense-output callables
    on the domain; ``grid``, ``p_values`` and ``q_values`` sample them for
    inspection.  ``wronskian`` is the constant ``(q p' - p q')/s'`` after
    scaling (1 up to ``wronskian_drift``).
    """

    spec: DiffusionSpec
    beta: float
    grid: np.ndarray
    log_p_values: np.ndarray
    log_q_values: np.ndarray
    wronskian: float
    wronskian_drift: float
    _fwd: Callable = field(repr=False)
    _bwd: Callable = field(repr=False)
    _log_shift: float = field(repr=False)

    @property
    def p_values(self):
        return np.exp(self.log_p_values)

    @property
    def q_values(self):
        return np.exp(self.log_q_values)

    def log_p(self, x):
        return self._fwd(x)[1] - self._log_shift

    def log_q(self, x):
        return self._bwd(x)[1]

    def p(self, x):
        return np.exp(self.log_p(np.asarray(x, dtype=float)))

    def q(self, x):
        return np.exp(self.log_q(np.asarray(x, dtype=float)))

    def kappa_p(self, x):
        return self._fwd(x)[0]

    def kappa_q(self, x):
        return self._bwd(x)[0]

    def left_mass(self, x):
        """``∫_{x_lo}^x p dm / p(x)``."""
        return self._fwd(x)[2]

    def right_mass(self, x):
        """``∫_x^{x_hi} q dm / q(x)``."""
        return self._bwd(x)[2]


def _wkb_slope(spec, beta, x, sign):
    a = float(spec.a(x))
    c = float(spec.c(x))
    h = 0.5 * a * a
    disc = np.sqrt(c * c + 4.0 * h * beta)
    return (-c + sign * disc) / (2.0 * h)


def solve_factors(spec: DiffusionSpec, beta: float, n_grid: int = 2001) -> KernelFactors:
    """Solve for ``p_β``, ``q_β`` scaled so that ``q p' - p q' = s'``."""
    if not beta > 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    lo, hi = spec.domain
    if lo >= 0.0:
        raise DomainError("β-potential factors need a domain extending below 0")

    # state: κ, log u, helper mass integral, log s' = -∫_0^x 2c/a²
    def rhs(x, y, sign):
        a = float(spec.a(x))
        c = float(spec.c(x))
        k = y[0]
        m = 2.0 * np.exp(-y[3]) / (a * a)
        return [2.0 * (beta - c * k) / (a * a) - k * k, k, sign * m - k * y[2],
                -2.0 * c / (a * a)]

    log_sd = np.log(scale_derivative(spec, np.array([lo, hi])))
    fwd = solve_ivp(rhs, (lo, hi), [_wkb_slope(spec, beta, lo, +1), 0.0, 0.0, log_sd[0]],
                    method="DOP853", rtol=_RTOL, atol=_ATOL, dense_output=True, args=(1.0,))
    bwd = solve_ivp(rhs, (hi, lo), [_wkb_slope(spec, beta, hi, -1), 0.0, 0.0, log_sd[1]],
                    method="DOP853", rtol=_RTOL, atol=_ATOL, dense_output=True, args=(-1.0,))
    for sol, which in ((fwd, "p"), (bwd, "q")):
        if not sol.success:
            raise NumericalFailure(f"ODE solve for {which}_beta failed",
                                   {"message": sol.message, "beta": beta})
    grid = np.linspace(lo, hi, n_grid)
    f, b = fwd.sol(grid), bwd.sol(grid)
    if np.any(f[0] <= 0.0) or np.any(b[0] >= 0.0):
        raise NumericalFailure("loss of monotonicity in potential factors",
                               {"min_kappa_p": float(f[0].min()), "max_kappa_q": float(b[0].max())})
    # (q p' - p q')/s' = p q (κ_p - κ_q)/s' is constant; fold it into p
    ratio = np.exp(f[1] + b[1]) * (f[0] - b[0]) / scale_derivative(spec, grid)
    level = float(np.median(ratio))
    drift = float(np.max(np.abs(ratio / level - 1.0)))
    if drift > WRONSKIAN_TOL:
        raise NumericalFailure("Wronskian not constant across the grid",
                               {"rel_drift": drift, "beta": beta})
    shift = float(np.log(level))
    return KernelFactors(spec, float(beta), grid, f[1] - shift, b[1], 1.0, drift,
                         fwd.sol, bwd.sol, shift)


def _pair(x, y):
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return x, y


def _out(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


def _log_u(factors, x, y):
    lo_, hi_ = np.minimum(x, y), np.maximum(x, y)
    shape = lo_.shape
    return (factors.log_p(lo_.ravel()) + factors.log_q(hi_.ravel())).reshape(shape)


def u_bar_beta(factors: KernelFactors, x, y):
    """``ū^β(x, y) = p_β(x∧y) q_β(x∨y)``."""
    x, y = _pair(x, y)
    factors.spec.check(x), factors.spec.check(y)
    return _out(np.exp(_log_u(factors, x, y)))


def v_bar_beta(factors: KernelFactors, x, y):
    """β-potential of the diffusion also killed at 0 (``x, y ≥ 0``)."""
    x, y = _pair(x, y)
    factors.spec.check(x, positive=True), factors.spec.check(y, positive=True)
    u00 = float(np.exp(_log_u(factors, np.zeros(1), np.zeros(1))[0]))
    if not u00 > 0.0:
        raise NumericalFailure("degenerate kernel: u_bar(0, 0) = 0", {"beta": factors.beta})
    z = np.zeros_like(x)
    val = np.exp(_log_u(factors, x, y)) - np.exp(_log_u(factors, x, z) + _log_u(factors, z, y)) / u00
    val = np.where((x == 0.0) | (y == 0.0), 0.0, val)
    return _out(val)


def frak_u0_diffusion(spec: DiffusionSpec, x, y):
    """0-potential of the diffusion killed at 0: ``s(x) ∧ s(y)``."""
    x, y = _pair(x, y)
    spec.check(x, positive=True), spec.check(y, positive=True)
    return _out(np.minimum(scale_function(spec, x), scale_function(spec, y)))


def sigma_bar2(kernel: Callable, x, y):
    """Increment variance ``k(x,x) + k(y,y) - 2k(x,y)`` of a covariance ``k``."""
    return _out(np.asarray(kernel(x, x)) + np.asarray(kernel(y, y)) - 2.0 * np.asarray(kernel(x, y)))


def h_bar(factors: KernelFactors, x, y):
    """Difference kernel ``s(x)∧s(y) - v̄^p(x, y)`` (positive semidefinite)."""
    return _out(np.asarray(frak_u0_diffusion(factors.spec, x, y)) - np.asarray(v_bar_beta(factors, x, y)))


def row_integral(factors: KernelFactors, x, lower: float | None = None, killed: bool = False):
    """``∫ ū^β(x, z) m(dz)`` over ``[lower, x_hi]`` (default the whole domain).

    With ``killed=True`` the kernel is ``v̄^β`` and the integral runs over
    ``(0, x_hi]``.
    """
    x = np.asarray(x, dtype=float)
    lo = factors.spec.domain[0] if lower is None else float(lower)
    if killed:
        lo = 0.0
    xf = np.atleast_1d(x).ravel()
    factors.spec.check(xf)

    def base(xs):
        # q(x)∫_lo^x p dm + p(x)∫_x^hi q dm using the stable helper integrals
        pq = np.exp(factors.log_p(xs) + factors.log_q(xs))
        left = factors.left_mass(xs)
        if lo > factors.spec.domain[0]:
            left = left - factors.left_mass(np.array([lo])) * np.exp(
                factors.log_p(np.array([lo])) - factors.log_p(xs))
        return pq * (left + factors.right_mass(xs))

    val = base(xf)
    if killed:
        if np.any(xf < 0.0):
            raise DomainError("killed row integral needs x >= 0")
        z = np.zeros(1)
        u00 = np.exp(_log_u(factors, z, z))[0]
        ux0 = np.exp(_log_u(factors, xf, np.zeros_like(xf)))
        val = val - ux0 / u00 * base(z)[0]
    return _out(val.reshape(x.shape))


def kernel_matrix(kind: str, grid, spec: DiffusionSpec | None = None,
                  factors: KernelFactors | None = None) -> np.ndarray:
    """Covariance matrix of ``ū``, ``v̄``, ``s∧s`` or the difference kernel."""
    g = np.asarray(grid, dtype=float)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    if kind == "u_bar":
        return u_bar_beta(factors, xx, yy)
    if kind == "v_bar":
        return v_bar_beta(factors, xx, yy)
    if kind == "s_min":
        return frak_u0_diffusion(spec if spec is not None else factors.spec, xx, yy)
    if kind == "h_bar":
        return h_bar(factors, xx, yy)
    raise DomainError(f"unknown diffusion covariance {kind!r}")
