"""Streaming accumulators and the two-sample statistics used by the checks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MeanAccumulator",
    "WeightedMeanAccumulator",
    "z_score",
    "weighted_ecdf_distance",
    "permutation_threshold",
    "effective_sample_size",
]


@dataclass
class MeanAccumulator:
    """Count, mean and centred sum of squares with Chan's pairwise merge.

    Merging shards in a fixed order gives bit-identical results however the
    shards were distributed over workers.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, values) -> "MeanAccumulator":
        v = np.asarray(values, dtype=float).ravel()
        if v.size:
            other = MeanAccumulator(v.size, float(v.mean()), float(((v - v.mean()) ** 2).sum()))
            self.merge(other)
        return self

    def merge(self, other: "MeanAccumulator") -> "MeanAccumulator":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else float("nan")

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance / self.count)) if self.count > 1 else float("nan")


@dataclass
class WeightedMeanAccumulator:
    """Self-normalized mean ``Σ wF / Σ w`` with signed weights.

    Keeps the first and second moments of ``w``, ``wF`` and their cross
    product so that the delta-method standard error can be formed after
    merging.
    """

    count: int = 0
    sw: float = 0.0
    swf: float = 0.0
    sww: float = 0.0
    swfwf: float = 0.0
    swwf: float = 0.0
    n_negative: int = 0

    def add(self, f, w) -> "WeightedMeanAccumulator":
        f = np.asarray(f, dtype=float).ravel()
        w = np.asarray(w, dtype=float).ravel()
        wf = w * f
        self.count += f.size
        self.sw += float(w.sum())
        self.swf += float(wf.sum())
        self.sww += float((w * w).sum())
        self.swfwf += float((wf * wf).sum())
        self.swwf += float((w * wf).sum())
        self.n_negative += int((w < 0).sum())
        return self

    def merge(self, other: "WeightedMeanAccumulator") -> "WeightedMeanAccumulator":
        for name in ("count", "sw", "swf", "sww", "swfwf", "swwf", "n_negative"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self

    @property
    def mean(self) -> float:
        return self.swf / self.sw

    @property
    def se(self) -> float:
        n = self.count
        mw, m = self.sw / n, self.mean
        # Var(wF - m w) / (n E[w]^2)
        var = (self.swfwf - 2.0 * m * self.swwf + m * m * self.sww) / n
        var -= (self.swf / n - m * mw) ** 2
        return float(np.sqrt(max(var, 0.0) * n / (n - 1) / n) / abs(mw))

    @property
    def negative_fraction(self) -> float:
        return self.n_negative / self.count if self.count else 0.0

    @property
    def ess(self) -> float:
        return self.sw ** 2 / self.sww if self.sww > 0 else 0.0


def z_score(mean_a: float, se_a: float, mean_b: float, se_b: float = 0.0) -> float:
    se = float(np.hypot(se_a, se_b))
    if se == 0.0:
        return 0.0 if mean_a == mean_b else float("inf")
    return (mean_a - mean_b) / se


def effective_sample_size(w) -> float:
    w = np.asarray(w, dtype=float)
    return float(w.sum() ** 2 / (w * w).sum())


def weighted_ecdf_distance(x, wx, y, wy) -> float:
    """Largest gap between the normalized weighted empirical CDFs.

    With unit weights this is the two-sample Kolmogorov-Smirnov statistic.
    Signed weights are allowed; the CDFs are then not monotone but the gap
    is still evaluated at every pooled point.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    wx = np.broadcast_to(np.asarray(wx, dtype=float), x.shape)
    wy = np.broadcast_to(np.asarray(wy, dtype=float), y.shape)
    vals = np.concatenate((x, y))
    signed = np.concatenate((wx / wx.sum(), -wy / wy.sum()))
    order = np.argsort(vals, kind="stable")
    diff = np.cumsum(signed[order])
    # evaluate only after the last of any tied values
    sv = vals[order]
    last = np.append(sv[1:] != sv[:-1], True)
    return float(np.max(np.abs(diff[last])))


def permutation_threshold(x, wx, y, wy, rng: np.random.Generator, n_perm: int = 400,
                          level: float = 0.01) -> tuple[float, np.ndarray]:
    """Upper ``level`` quantile of the ECDF gap under random relabeling.

    The pooled ``(value, weight)`` pairs are reshuffled into groups of the
    original sizes.  Returns the threshold and all permutation statistics.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    wx = np.broadcast_to(np.asarray(wx, dtype=float), x.shape)
    wy = np.broadcast_to(np.asarray(wy, dtype=float), y.shape)
    vals = np.concatenate((x, y))
    ws = np.concatenate((wx, wy))
    order = np.argsort(vals, kind="stable")
    vals, ws = vals[order], ws[order]
    last = np.append(vals[1:] != vals[:-1], True)
    n = x.size
    stats = np.empty(n_perm)
    for k in range(n_perm):
        in_x = np.zeros(vals.size, dtype=bool)
        in_x[rng.permutation(vals.size)[:n]] = True
        wa = np.where(in_x, ws, 0.0)
        wb = np.where(in_x, 0.0, ws)
        diff = np.cumsum(wa) / wa.sum() - np.cumsum(wb) / wb.sum()
        stats[k] = np.max(np.abs(diff[last]))
    return float(np.quantile(stats, 1.0 - level)), stats
