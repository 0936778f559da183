"""Quadrature for half-line Fourier cosine integrals with power-law tails.

All kernels of the symmetric Lévy cases reduce to one of

    C(x) = ∫_0^∞ g(λ) cos(λx) dλ          (potential densities)
    D(x) = ∫_0^∞ g(λ) (1 - cos(λx)) dλ    (increment variances)

with ``g`` positive and eventually a pure power law, ``g(λ) = 1/(β + c λ^r)``
for ``λ`` beyond a knee.  After the substitution ``t = λ|x|`` every ``x``
shares one panel layout: graded Gauss-Legendre pieces on ``[0, π/2]``,
quarter-period pieces up to a zero ``B`` of ``cos t`` past the knee, then
half-period panels whose alternating partial sums are accelerated with
Wynn's epsilon algorithm.  For ``D`` the non-oscillatory piece ``∫_B^∞ g`` is
summed analytically from the power-law form.  Whole batches of ``x`` are
evaluated in one vectorized pass.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import QuadratureError

__all__ = [
    "QuadResult",
    "gauss_legendre",
    "integrate_pieces",
    "wynn_epsilon",
    "power_law_tail",
    "cos_transform",
    "one_minus_cos_transform",
    "cos_transform_batch",
    "one_minus_cos_transform_batch",
]

_GL_ORDER = 24
_GRADED_LEVELS = 56
_PANEL_BLOCK = 24
_WYNN_WINDOW = 48
_MAX_PANELS = 6000


@dataclass(frozen=True)
class QuadResult:
    """Value of an integral with its error estimate and panel bookkeeping."""

    value: float
    error: float
    cutoff: float
    n_panels: int


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    return nodes, weights


def integrate_pieces(f: Callable[[np.ndarray], np.ndarray], breaks,
                     order: int = _GL_ORDER) -> tuple[float, float]:
    """Composite Gauss-Legendre of a scalar function over consecutive ``breaks``.

    Returns the integral and an error estimate from the rule of half the order.
    """
    breaks = np.asarray(breaks, dtype=float)
    if breaks.size < 2:
        return 0.0, 0.0
    half = 0.5 * np.diff(breaks)
    mid = 0.5 * (breaks[1:] + breaks[:-1])

    def rule(n):
        x, w = gauss_legendre(n)
        pts = mid[:, None] + half[:, None] * x[None, :]
        vals = f(pts.ravel()).reshape(pts.shape)
        return float(np.sum(half * (vals @ w)))

    fine = rule(order)
    return fine, abs(fine - rule(order // 2))


def wynn_epsilon(partial_sums) -> np.ndarray | float:
    """Wynn epsilon-algorithm limit of sequences stored along axis 0.

    A 1-d input returns a float; a 2-d input of shape ``(n_terms, m)``
    returns ``m`` independent limit estimates.
    """
    s = np.asarray(partial_sums, dtype=float)
    scalar = s.ndim == 1
    if scalar:
        s = s[:, None]
    best = s[-1].copy()
    if s.shape[0] >= 3:
        alive = np.ones(s.shape[1], dtype=bool)
        prev = np.zeros((s.shape[0] + 1, s.shape[1]))
        cur = s.copy()
        for k in range(1, s.shape[0]):
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                diff = np.diff(cur, axis=0)
                alive &= np.all(diff != 0.0, axis=0)
                nxt = prev[1:diff.shape[0] + 1] + 1.0 / diff
            prev, cur = cur, nxt
            if k % 2 == 0:
                alive &= np.isfinite(cur[-1])
                best = np.where(alive, cur[-1], best)
            if cur.shape[0] < 2 or not alive.any():
                break
    return float(best[0]) if scalar else best


def power_law_tail(beta: float, c: float, r: float, b):
    """Exact ``∫_b^∞ dλ / (β + c λ^r)`` for ``r > 1`` (vectorized in ``b``).

    Sums the geometric expansion in ``q = β/(c b^r)``; requires ``q ≤ 1/2``.
    """
    b = np.asarray(b, dtype=float)
    lead = b ** (1.0 - r) / c
    if beta == 0.0:
        out = lead / (r - 1.0)
        return float(out) if out.ndim == 0 else out
    q = beta / (c * b ** r)
    if np.any(q > 0.5):
        raise ValueError("power_law_tail needs beta <= c*b**r/2")
    total = np.zeros_like(b)
    term_q = np.ones_like(b)
    for k in range(80):
        total = total + term_q / (r * (k + 1) - 1.0)
        term_q = term_q * (-q)
        if np.all(np.abs(term_q) < 1e-17):
            break
    out = lead * total
    return float(out) if out.ndim == 0 else out


def _t_breaks(b_t: float) -> np.ndarray:
    # geometric grading toward t = 0 resolves every scale of g(t/x) there
    quarter = 0.5 * np.pi
    graded = np.concatenate(([0.0], quarter * 2.0 ** -np.arange(_GRADED_LEVELS, -1, -1)))
    n = int(round((b_t - quarter) / quarter))
    if n <= 0:
        return graded
    return np.concatenate((graded, quarter + quarter * np.arange(1, n + 1)))


def _head_batch(h, xs, breaks):
    """``∫ h(t, x) dt`` over ``breaks`` for every x, with a GL24/GL12 error."""
    half = 0.5 * np.diff(breaks)
    mid = 0.5 * (breaks[1:] + breaks[:-1])
    out = []
    for n in (_GL_ORDER, _GL_ORDER // 2):
        nodes, weights = gauss_legendre(n)
        pts = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        w = (half[:, None] * weights[None, :]).ravel()
        vals = h(pts[:, None], xs[None, :])
        out.append(w @ vals)
    return out[0], np.abs(out[0] - out[1])


def _osc_batch(g, xs, b_t, rel_tol, scale):
    """``∫_{b_t}^∞ g(t/x) cos t dt`` per x; ``b_t`` a zero of ``cos``."""
    nodes, weights = gauss_legendre(_GL_ORDER)
    half = 0.5 * np.pi
    sums = np.zeros((0, xs.size))
    running = np.zeros(xs.size)
    last = None
    panels = 0
    while panels < _MAX_PANELS:
        mids = b_t + np.pi * (np.arange(panels, panels + _PANEL_BLOCK) + 0.5)
        t = (mids[:, None] + half * nodes[None, :]).ravel()
        cw = np.cos(t) * np.tile(half * weights, _PANEL_BLOCK)
        vals = g(t[:, None] / xs[None, :]) * cw[:, None]
        contrib = vals.reshape(_PANEL_BLOCK, _GL_ORDER, xs.size).sum(axis=1)
        block = running + np.cumsum(contrib, axis=0)
        running = block[-1]
        sums = np.concatenate((sums, block))[-_WYNN_WINDOW:]
        panels += _PANEL_BLOCK
        est = wynn_epsilon(sums)
        if last is not None:
            err = np.abs(est - last)
            if np.all(err <= 1e-2 * rel_tol * np.maximum(scale, np.abs(est))):
                return est, err, panels
        last = est
    raise QuadratureError(
        f"oscillatory tail did not converge after {panels} panels",
        value=last, error=float("nan"))


def _b_t(xs, knee):
    # first zero (k + 1/2)π of cos t with t/x beyond the knee for every x
    k0 = max(0, int(np.ceil(knee * float(np.max(xs)) / np.pi - 0.5)))
    return (k0 + 0.5) * np.pi


def _transform_batch(kind, g, xs, knee, tail, rel_tol, kinks):
    xs = np.abs(np.asarray(xs, dtype=float))
    values = np.zeros_like(xs)
    errors = np.zeros_like(xs)
    nz = xs != 0.0
    if kind == "cos" and (~nz).any():
        breaks = np.concatenate(([0.0], knee * 2.0 ** -np.arange(_GRADED_LEVELS, -1, -1)))
        if kinks is not None:
            breaks = np.union1d(breaks, kinks[kinks < knee])
        head, err = integrate_pieces(g, breaks)
        values[~nz] = head + tail(knee)
        errors[~nz] = err
    if not nz.any():
        return values, errors, 0.0, 0
    x_all = xs[nz]
    b_t = _b_t(x_all, knee)
    if kind == "cos":
        def h(t, xx):
            return g(t / xx) * np.cos(t)
    else:
        def h(t, xx):
            s = np.sin(0.5 * t)
            return 2.0 * s * s * g(t / xx)
    # kinks of an interpolated g sit at different t for each x
    groups = [x_all] if kinks is None else [x_all[i:i + 1] for i in range(x_all.size)]
    out_v, out_e, panels = [], [], 0
    for x in groups:
        breaks = _t_breaks(b_t)
        if kinks is not None:
            kt = kinks * x[0]
            breaks = np.union1d(breaks, kt[kt < b_t])
        head, herr = _head_batch(h, x, breaks)
        if kind == "cos":
            osc, oerr, n = _osc_batch(g, x, b_t, rel_tol, np.abs(head))
            out_v.append((head + osc) / x)
        else:
            flat = x * np.asarray(tail(b_t / x))
            osc, oerr, n = _osc_batch(g, x, b_t, rel_tol, np.abs(head) + np.abs(flat))
            out_v.append((head + flat - osc) / x)
        out_e.append((herr + oerr) / x)
        panels = max(panels, n)
    values[nz] = np.concatenate(out_v)
    errors[nz] = np.concatenate(out_e)
    return values, errors, b_t, panels


def cos_transform_batch(g, xs, knee: float, tail, rel_tol: float = 1e-10, kinks=None):
    """``∫_0^∞ g(λ) cos(λx) dλ`` for an array of ``x``.

    ``tail(b)`` returns ``∫_b^∞ g`` for ``b ≥ knee`` (used only at ``x = 0``).
    ``kinks`` lists λ where ``g`` is not smooth; they become panel breaks.
    Returns ``(values, errors, cutoff_t, n_panels)``; ``cutoff_t/|x|`` is the
    start of the accelerated region in ``λ``.
    """
    out = _transform_batch("cos", g, xs, knee, tail, rel_tol, kinks)
    _check(out[0], out[1], rel_tol)
    return out


def one_minus_cos_transform_batch(g, xs, knee: float, tail, rel_tol: float = 1e-10,
                                  kinks=None):
    """``∫_0^∞ g(λ) (1 - cos(λx)) dλ`` for an array of ``x``.

    ``g`` may be singular at 0 as long as the integral converges.
    """
    out = _transform_batch("omc", g, xs, knee, tail, rel_tol, kinks)
    _check(out[0], out[1], rel_tol)
    return out


def cos_transform(g, x: float, knee: float, tail, rel_tol: float = 1e-10,
                  kinks=None) -> QuadResult:
    v, e, b_t, n = cos_transform_batch(g, [x], knee, tail, rel_tol, kinks)
    return QuadResult(float(v[0]), float(e[0]), b_t / abs(x) if x else knee, n)


def one_minus_cos_transform(g, x: float, knee: float, tail, rel_tol: float = 1e-10,
                            kinks=None) -> QuadResult:
    v, e, b_t, n = one_minus_cos_transform_batch(g, [x], knee, tail, rel_tol, kinks)
    return QuadResult(float(v[0]), float(e[0]), b_t / abs(x) if x else 0.0, n)


def _check(values, errors, rel_tol):
    bad = ~np.isfinite(values) | ((errors > rel_tol * np.abs(values)) & (errors > 1e-14))
    if bad.any():
        i = int(np.argmax(bad))
        raise QuadratureError(
            f"quadrature error estimate {errors[i]:.3e} exceeds tolerance "
            f"for value {values[i]:.6e}", value=float(values[i]), error=float(errors[i]))
