import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from rebirthlab import diffusion_kernels as dk
from rebirthlab import levy_kernels as lk
from rebirthlab.errors import DomainError
from rebirthlab.rebirth_kernels import (BaseProcess, Measure, RebirthKernel, RebirthSpec,
                                        cycle_weights_partial, f_of, killing_laplace, l1_norm_f,
                                        rebirth_cycle_sum, u_tilde0_partial, w_p)

from conftest import brownian_u


def test_w_at_origin_case1(case1):
    # u^1(0,0) = 1/2, ∫u^1 = 1/2, f(0) = 1/2, ‖f‖₁ = 1/2: w = 1/2 + (1 - 1/2)·1
    kern = RebirthKernel(case1, Measure.dirac(0.0), 1.0)
    assert w_p(kern, 0.0, 0.0) == pytest.approx(1.0, rel=1e-9)


def test_partial_target_case1(case1):
    ref = 1 / math.sqrt(2) + 0.5 * math.exp(-math.sqrt(2)) / math.sqrt(2)
    val = u_tilde0_partial(case1, Measure.dirac(1.0, 0.5), 0.0, 0.0)
    assert val == pytest.approx(ref, rel=1e-9)
    assert val == pytest.approx(0.7930606, abs=1e-6)


@pytest.mark.parametrize("beta,p", [(1.0, 1.0), (0.5, 2.0), (2.0, 0.5)])
def test_row_integral_of_w(brownian, beta, p):
    kern = RebirthKernel(BaseProcess(1, beta, levy=brownian), Measure.dirac(1.0), p)
    g = lambda y: w_p(kern, 0.3, y)
    total = sum(integrate.quad(g, a, b, epsrel=1e-11, limit=200)[0]
                for a, b in ((-np.inf, 0.3), (0.3, 1.0), (1.0, np.inf)))
    assert total == pytest.approx(1.0 / p, rel=1e-8)


def test_w_is_not_symmetric(case1):
    kern = RebirthKernel(case1, Measure.dirac(1.0), 1.0)
    assert abs(w_p(kern, 0.0, 0.5) - w_p(kern, 0.5, 0.0)) > 1e-3


@given(st.floats(-2, 2), st.floats(-2, 2))
def test_first_cycle_renewal(x, y):
    # w(x,y) = u^p(x,y) + E^x e^{-pζ} ∫ w(z,y) μ(dz)
    base = BaseProcess(1, 1.0, levy=lk.LevyExponentSpec.brownian())
    mu = Measure.from_atoms([-0.5, 1.0], [0.3, 0.7])
    kern = RebirthKernel(base, mu, 1.5)
    rhs = base.potential(1.5, x, y) + killing_laplace(base, 1.5, x) * mu.integrate(
        lambda z: w_p(kern, z, np.full_like(z, y)))
    assert w_p(kern, x, y) == pytest.approx(rhs, rel=1e-9)


def test_f_bounded_by_diagonal(case1):
    rng = np.random.default_rng(5)
    y = np.linspace(-3, 3, 61)
    for _ in range(5):
        k = rng.integers(1, 5)
        m = Measure.from_atoms(rng.uniform(-2, 2, k), rng.dirichlet(np.ones(k)))
        assert np.all(f_of(case1, m, y, 1.0) <= case1.potential(1.0, y, y) + 1e-15)


def test_l1_norm_and_cycle_sum(case1):
    mu = Measure.dirac(0.0)
    assert l1_norm_f(case1, mu, 1.0) == pytest.approx(0.5, rel=1e-9)
    # Σ_r E e^{-pζ_{r-1}} = (1/2) / (1·1/2)
    assert rebirth_cycle_sum(case1, mu, 1.0, 0.0) == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("beta,p", [(1.0, 1.0), (0.5, 2.0), (3.0, 0.25)])
def test_killing_laplace_case1(brownian, beta, p):
    base = BaseProcess(1, beta, levy=brownian)
    np.testing.assert_allclose(killing_laplace(base, p, np.linspace(-2, 2, 9)),
                               beta / (beta + p), atol=1e-12)


def test_potential_by_case(brownian):
    b2 = BaseProcess(2, 1.0, levy=brownian)
    assert b2.potential(0.5, 0.4, 0.9) == pytest.approx(lk.v_beta(brownian, 1.5, 0.4, 0.9))
    b1 = BaseProcess(1, 1.0, levy=brownian)
    assert b1.potential(0.0, 0.4, 0.9) == pytest.approx(brownian_u(1.0, 0.5))
    spec = dk.DiffusionSpec.ou(1.0)
    b4 = BaseProcess(4, 1.0, diffusion=spec)
    f = dk.solve_factors(spec, 1.5)
    assert b4.potential(0.5, -0.2, 0.6) == pytest.approx(dk.u_bar_beta(f, -0.2, 0.6), rel=1e-10)
    assert BaseProcess(3, 5.0, levy=brownian).beta == 0.0


def test_cycle_weights_partial():
    assert cycle_weights_partial(0.5, 1) == (1.0, 0.0)
    s, e = cycle_weights_partial(Measure.dirac(1.0, 0.5), 3)
    assert s == pytest.approx(1 / 9) and e == pytest.approx(8 / 9)


def test_validation(brownian):
    with pytest.raises(DomainError):
        BaseProcess(1, 0.0, levy=brownian)
    with pytest.raises(DomainError):
        BaseProcess(7, 1.0, levy=brownian)
    with pytest.raises(DomainError):
        RebirthSpec.full(Measure.dirac(0.0, 0.5))
    with pytest.raises(DomainError):
        Measure.from_atoms([0.0], [-1.0])
    with pytest.raises(DomainError):
        RebirthKernel(BaseProcess(2, 1.0, levy=brownian), Measure.dirac(0.0), 1.0)
    with pytest.raises(DomainError):
        killing_laplace(BaseProcess(1, 1.0, levy=brownian), 0.0, 0.0)
    assert RebirthSpec.partial(Measure.dirac(1.0, 0.5)).exile_probability == pytest.approx(2 / 3)
