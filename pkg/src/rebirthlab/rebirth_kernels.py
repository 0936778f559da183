"""Potential densities of fully and partially rebirthed processes.

A base process is one of six killed processes:

====  ==========================================  ======================
case  base process                                reference measure
====  ==========================================  ======================
1     Lévy, killed at an independent Exp(β) time  Lebesgue
2     Lévy, killed at Exp(β) or on hitting 0      Lebesgue
3     Lévy, killed on hitting 0                   Lebesgue
4     diffusion, killed at Exp(β)                 speed measure
5     diffusion, killed at Exp(β) or at 0         speed measure
6     diffusion, killed at 0                      speed measure
====  ==========================================  ======================

``BaseProcess.potential(q, x, y)`` is the potential density of the base
process additionally killed at rate ``q`` (``q = 0`` gives the 0-potential).
Rebirthing from ``μ`` at every death gives a recurrent process whose
``p``-potential density is

    w^p(x, y) = u^p(x, y) + (1/p - ∫u^p(x, z) m(dz)) f(y) / ‖f‖₁,
    f(y) = ∫ u^p(x, y) μ(dx),

and ``‖f‖₁ = ∫ f dm = ∫ (∫u^p(x, z) m(dz)) μ(dx)`` by Fubini.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffusion_kernels as dk
from . import levy_kernels as lk
from .errors import DomainError, NumericalFailure

__all__ = [
    "Measure",
    "RebirthSpec",
    "BaseProcess",
    "RebirthKernel",
    "f_of",
    "l1_norm_f",
    "w_p",
    "u_tilde0_partial",
    "cycle_weights_partial",
    "killing_laplace",
    "rebirth_cycle_sum",
]

LEVY_CASES = (1, 2, 3)
DIFFUSION_CASES = (4, 5, 6)
KILLED_AT_ZERO = (2, 3, 5, 6)


@dataclass(frozen=True)
class Measure:
    """Finite measure on the line: atoms plus a gridded density.

    The density part is integrated with the trapezoid rule on its grid, so
    every integral is ``weights @ fn(nodes)``.
    """

    atoms: tuple = ()
    density_grid: tuple = ()
    density_values: tuple = ()

    def __post_init__(self):
        for loc, w in self.atoms:
            if not (np.isfinite(loc) and w >= 0.0):
                raise DomainError(f"invalid atom ({loc}, {w})")
        if len(self.density_grid) != len(self.density_values):
            raise DomainError("density grid and values differ in length")
        if self.density_grid:
            g = np.asarray(self.density_grid)
            if g.size < 2 or np.any(np.diff(g) <= 0):
                raise DomainError("density grid must be strictly increasing")
            if np.any(np.asarray(self.density_values) < 0):
                raise DomainError("density must be nonnegative")

    @classmethod
    def dirac(cls, x: float, weight: float = 1.0) -> "Measure":
        return cls(atoms=((float(x), float(weight)),))

    @classmethod
    def from_atoms(cls, locations, weights) -> "Measure":
        return cls(atoms=tuple((float(a), float(w)) for a, w in zip(locations, weights)))

    @classmethod
    def uniform(cls, lo: float, hi: float, n: int = 2001, mass: float = 1.0) -> "Measure":
        grid = np.linspace(lo, hi, n)
        return cls(density_grid=tuple(grid),
                   density_values=tuple(np.full(n, mass / (hi - lo))))

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate(([a for a, _ in self.atoms], self.density_grid)).astype(float)

    @property
    def weights(self) -> np.ndarray:
        w_atoms = np.array([w for _, w in self.atoms], dtype=float)
        if not self.density_grid:
            return w_atoms
        g = np.asarray(self.density_grid)
        h = np.diff(g)
        trap = np.zeros(g.size)
        trap[:-1] += 0.5 * h
        trap[1:] += 0.5 * h
        return np.concatenate((w_atoms, trap * np.asarray(self.density_values)))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def integrate(self, fn) -> float:
        """``∫ fn dμ`` for ``fn`` vectorized over points."""
        if self.total_mass <= 0.0:
            raise DomainError("measure is empty")
        nodes, w = self.nodes, self.weights
        keep = w > 0.0
        return float(w[keep] @ np.asarray(fn(nodes[keep]), dtype=float))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draws from the normalized measure (grid density sampled piecewise linearly)."""
        nodes, w = self.nodes, self.weights
        n_atoms = len(self.atoms)
        p_atoms = w[:n_atoms].sum() / w.sum()
        out = np.empty(size)
        u = rng.random(size)
        from_atoms = u < p_atoms
        if n_atoms:
            aw = w[:n_atoms] / w[:n_atoms].sum()
            idx = rng.choice(n_atoms, size=int(from_atoms.sum()), p=aw)
            out[from_atoms] = nodes[:n_atoms][idx]
        m = int((~from_atoms).sum())
        if m:
            g = np.asarray(self.density_grid)
            d = np.asarray(self.density_values)
            seg = 0.5 * (d[1:] + d[:-1]) * np.diff(g)
            k = rng.choice(seg.size, size=m, p=seg / seg.sum())
            # inverse CDF inside a trapezoid segment
            d0, d1, h = d[k], d[k + 1], g[k + 1] - g[k]
            v = rng.random(m)
            slope = (d1 - d0) / h
            with np.errstate(divide="ignore", invalid="ignore"):
                quad_root = (-d0 + np.sqrt(d0 * d0 + 2.0 * slope * v * 0.5 * (d0 + d1) * h)) / slope
            lin = v * h
            out[~from_atoms] = g[k] + np.where(np.abs(slope) > 1e-14, quad_root, lin)
        return out


@dataclass(frozen=True)
class RebirthSpec:
    """Full rebirth from a probability ``mu`` or partial rebirth from ``nu``.

    In partial mode each death sends the process to the exile state with
    probability ``1/(1+|ν|)`` and otherwise restarts it from ``ν/|ν|``.
    """

    mode: str
    measure: Measure
    exile_label: str = "exile"

    def __post_init__(self):
        mass = self.measure.total_mass
        if self.mode == "full":
            if abs(mass - 1.0) > 1e-10:
                raise DomainError(f"rebirth measure must be a probability, mass {mass}")
        elif self.mode == "partial":
            if not (np.isfinite(mass) and mass > 0.0):
                raise DomainError("partial rebirth measure must have finite positive mass")
        else:
            raise DomainError(f"unknown rebirth mode {self.mode!r}")

    @classmethod
    def full(cls, mu: Measure) -> "RebirthSpec":
        return cls("full", mu)

    @classmethod
    def partial(cls, nu: Measure, exile_label: str = "exile") -> "RebirthSpec":
        return cls("partial", nu, exile_label)

    @property
    def mass(self) -> float:
        return self.measure.total_mass

    @property
    def exile_probability(self) -> float:
        return 1.0 / (1.0 + self.mass) if self.mode == "partial" else 0.0

    def check_support(self, base: "BaseProcess") -> None:
        base.check_state(self.measure.nodes[self.measure.weights > 0])


@dataclass(eq=False)
class BaseProcess:
    """One of the six killed base processes.

    ``beta`` is the exponential killing rate for Cases 1, 2, 4, 5 and is
    ignored for Cases 3 and 6.
    """

    case_id: int
    beta: float = 0.0
    levy: lk.LevyExponentSpec | None = None
    diffusion: dk.DiffusionSpec | None = None
    _factors: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.case_id not in LEVY_CASES + DIFFUSION_CASES:
            raise DomainError(f"case must be 1..6, got {self.case_id}")
        if self.case_id in LEVY_CASES and self.levy is None:
            raise DomainError("Lévy cases need a LevyExponentSpec")
        if self.case_id in DIFFUSION_CASES and self.diffusion is None:
            raise DomainError("diffusion cases need a DiffusionSpec")
        if self.case_id in (3, 6):
            self.beta = 0.0
        elif not self.beta > 0.0:
            raise DomainError(f"case {self.case_id} needs a positive killing rate beta")

    @property
    def killed_at_zero(self) -> bool:
        return self.case_id in KILLED_AT_ZERO

    @property
    def is_levy(self) -> bool:
        return self.case_id in LEVY_CASES

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.killed_at_zero and np.any(x == 0.0):
            raise DomainError(f"0 is not in the state space of case {self.case_id}")
        if self.case_id in (5, 6) and np.any(x < 0.0):
            raise DomainError("diffusion cases killed at 0 live on (0, x_hi]")
        if self.diffusion is not None:
            self.diffusion.check(x)
        return x

    def factors(self, rate: float) -> dk.KernelFactors:
        key = round(float(rate), 14)
        if key not in self._factors:
            spec = self.diffusion
            lo, hi = spec.domain
            if lo >= 0.0:
                # kernels killed at 0 do not depend on the coefficients below 0,
                # so the same coefficient functions are reused on a mirrored domain
                spec = dk.DiffusionSpec(spec.a, spec.c, (-hi, hi), spec.name, spec.params)
            self._factors[key] = dk.solve_factors(spec, rate)
        return self._factors[key]

    def reference_density(self, z) -> np.ndarray:
        """Density of the reference measure ``m`` with respect to Lebesgue."""
        z = np.asarray(z, dtype=float)
        if self.is_levy:
            return np.ones_like(z)
        return np.asarray(dk.speed_density(self.diffusion, z))

    def potential(self, q: float, x, y):
        """Potential density of the base process also killed at rate ``q``."""
        rate = self.beta + q
        c = self.case_id
        if rate <= 0.0 and c not in (3, 6):
            raise DomainError("total killing rate must be positive")
        if c == 1:
            return lk.u_beta(self.levy, rate, np.subtract(x, y))
        if c == 2 or (c == 3 and q > 0.0):
            return lk.v_beta(self.levy, rate, x, y)
        if c == 3:
            return lk.frak_u0(self.levy, x, y)
        if c == 4:
            return dk.u_bar_beta(self.factors(rate), x, y)
        if c == 5 or q > 0.0:
            return dk.v_bar_beta(self.factors(rate), x, y)
        return dk.frak_u0_diffusion(self.diffusion, x, y)

    def row_mass(self, q: float, x):
        """``∫ potential(q, x, z) m(dz)``, the expected discounted lifetime."""
        rate = self.beta + q
        if rate <= 0.0:
            raise DomainError("row mass of the 0-potential diverges without killing")
        c = self.case_id
        x = np.asarray(x, dtype=float)
        if c == 1:
            out = np.full(x.shape, 1.0 / rate)
        elif c in (2, 3):
            u = lk.u_beta(self.levy, rate, np.concatenate((x.ravel(), [0.0])))
            out = ((1.0 - u[:-1] / u[-1]) / rate).reshape(x.shape)
        else:
            out = np.asarray(dk.row_integral(self.factors(rate), x, killed=c in (5, 6)))
        return float(out) if out.ndim == 0 else out


def f_of(base: BaseProcess, measure: Measure, y, p: float):
    """``f(y) = ∫ u^p(x, y) μ(dx)`` with ``u^p`` the base ``p``-potential."""
    if measure.total_mass <= 0.0:
        raise DomainError("measure is empty")
    y = np.asarray(y, dtype=float)
    nodes, w = measure.nodes, measure.weights
    keep = w > 0.0
    nodes, w = nodes[keep], w[keep]
    base.check_state(nodes)
    xx, yy = np.meshgrid(nodes, y.ravel(), indexing="ij")
    vals = np.asarray(base.potential(p, xx, yy)).reshape(xx.shape)
    out = (w @ vals).reshape(y.shape)
    return float(out) if out.ndim == 0 else out


def l1_norm_f(base: BaseProcess, measure: Measure, p: float) -> float:
    """``‖f‖₁ = ∫ f dm``, computed as ``∫ (∫u^p(x, z) m(dz)) μ(dx)``."""
    base.check_state(measure.nodes[measure.weights > 0])
    return measure.integrate(lambda x: base.row_mass(p, x))


@dataclass(eq=False)
class RebirthKernel:
    """``p``-potential density of the process rebirthed from ``mu``."""

    base: BaseProcess
    mu: Measure
    p: float
    l1_norm: float = field(init=False)

    def __post_init__(self):
        if not self.p > 0.0:
            raise DomainError("p must be positive")
        RebirthSpec.full(self.mu).check_support(self.base)
        self.l1_norm = l1_norm_f(self.base, self.mu, self.p)
        if not self.l1_norm > 0.0:
            raise NumericalFailure("‖f‖₁ vanished", {"l1_norm": self.l1_norm})

    @property
    def case_id(self) -> int:
        return self.base.case_id

    def f(self, y):
        return f_of(self.base, self.mu, y, self.p)

    def __call__(self, x, y):
        return w_p(self, x, y)


def w_p(kernel: RebirthKernel, x, y):
    """Rebirthed ``p``-potential density ``w^p(x, y)`` (not symmetric)."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    kernel.base.check_state(x), kernel.base.check_state(y)
    base, p = kernel.base, kernel.p
    u = np.asarray(base.potential(p, x, y))
    xs, xi = np.unique(x.ravel(), return_inverse=True)
    ys, yi = np.unique(y.ravel(), return_inverse=True)
    r = np.asarray(base.row_mass(p, xs)).ravel()[xi].reshape(x.shape)
    f = np.asarray(kernel.f(ys)).ravel()[yi].reshape(y.shape)
    out = u + (1.0 / p - r) * f / kernel.l1_norm
    return float(out) if out.ndim == 0 else out


def u_tilde0_partial(base: BaseProcess, nu: Measure, x, y):
    """0-potential of the partially rebirthed process: ``u⁰(x,y) + ∫u⁰(z,y) ν(dz)``."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    base.check_state(x), base.check_state(y)
    u0 = np.asarray(base.potential(0.0, x, y))
    out = u0 + np.asarray(f_of(base, nu, y, 0.0))
    return float(out) if out.ndim == 0 else out


def cycle_weights_partial(nu: Measure | float, i: int) -> tuple[float, float]:
    """Mass of the ``i``-th cycle start law on ``S`` and at the exile point."""
    if int(i) != i or i < 1:
        raise DomainError("cycle index must be a positive integer")
    mass = nu if isinstance(nu, (int, float)) else nu.total_mass
    in_s = (mass / (1.0 + mass)) ** (int(i) - 1)
    return in_s, 1.0 - in_s


def killing_laplace(base: BaseProcess, p: float, x):
    """``E^x e^{-pζ} = 1 - p ∫u^p(x, z) m(dz)`` for the base lifetime ``ζ``."""
    if not p > 0.0:
        raise DomainError("p must be positive")
    base.check_state(x)
    out = 1.0 - p * np.asarray(base.row_mass(p, x))
    return float(out) if out.ndim == 0 else out


def rebirth_cycle_sum(base: BaseProcess, mu: Measure, p: float, x):
    """``Σ_{r≥2} E^x e^{-pζ_{r-1}} = E^x e^{-pζ} / (p ‖f‖₁)`` for full rebirth."""
    return killing_laplace(base, p, x) / (p * l1_norm_f(base, mu, p))
