import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from rebirthlab import levy_kernels as lk
from rebirthlab.errors import DomainError

from conftest import brownian_u


def qawf_u(alpha, scale, beta, x):
    """Independent oracle: scipy's QAWF for (1/π)∫cos(λx)/(β+ψ) dλ."""
    g = lambda lam: 1.0 / (beta + scale * lam ** alpha)
    if x == 0.0:
        return integrate.quad(g, 0.0, np.inf)[0] / np.pi
    return integrate.quad(g, 0.0, np.inf, weight="cos", wvar=abs(x))[0] / np.pi


def quad_phi(alpha, scale, x):
    """(1/π)∫(1-cos λx)/ψ dλ split at a few periods, tail by QAWF."""
    g = lambda lam: (1.0 - np.cos(lam * x)) / (scale * lam ** alpha)
    b = 20.0 * np.pi / abs(x)
    head = integrate.quad(g, 0.0, b, limit=400)[0]
    tail_const = integrate.quad(lambda lam: 1.0 / (scale * lam ** alpha), b, np.inf)[0]
    tail_cos = integrate.quad(lambda lam: 1.0 / (scale * lam ** alpha), b, np.inf,
                              weight="cos", wvar=abs(x))[0]
    return (head + tail_const - tail_cos) / np.pi


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_brownian_u_closed_form(brownian, beta):
    x = np.linspace(-4, 4, 33)
    np.testing.assert_allclose(lk.u_beta(brownian, beta, x), brownian_u(beta, x), rtol=1e-9)


def test_brownian_phi_and_sigma2(brownian):
    x = np.array([-2.5, -0.3, 0.01, 0.7, 3.0])
    np.testing.assert_allclose(lk.phi0(brownian, x), np.abs(x), rtol=1e-9)
    np.testing.assert_allclose(lk.sigma2(brownian, 0.0, x), 2 * np.abs(x), rtol=1e-9)
    np.testing.assert_allclose(lk.sigma2(brownian, 1.0, x),
                               2 * (brownian_u(1.0, 0.0) - brownian_u(1.0, x)), rtol=1e-9)


@pytest.mark.parametrize("x", [0.0, 0.7, 3.0])
def test_stable_u_against_qawf(x):
    spec = lk.LevyExponentSpec.stable(1.5, 1.0)
    assert lk.u_beta(spec, 1.0, x) == pytest.approx(qawf_u(1.5, 1.0, 1.0, x), rel=1e-8)


def test_stable_u_frozen_values():
    # frozen from the QAWF oracle above
    spec = lk.LevyExponentSpec.stable(1.5, 1.0)
    assert lk.u_beta(spec, 1.0, 0.0) == pytest.approx(0.76980035882, rel=1e-8)
    assert lk.u_beta(spec, 1.0, 0.7) == pytest.approx(0.21237690930, rel=1e-8)


@pytest.mark.parametrize("alpha", [1.2, 1.5, 1.8])
def test_stable_phi_against_quadrature(alpha):
    spec = lk.LevyExponentSpec.stable(alpha, 1.0)
    assert lk.phi0(spec, 0.7) == pytest.approx(quad_phi(alpha, 1.0, 0.7), rel=1e-6)


def test_stable_phi_scaling():
    # φ(cx) = c^{α-1} φ(x) for a stable exponent
    spec = lk.LevyExponentSpec.stable(1.5, 1.0)
    assert lk.phi0(spec, 2.0) == pytest.approx(2 ** 0.5 * lk.phi0(spec, 1.0), rel=1e-8)


def test_c2_is_one():
    assert lk.c_r(2.0) == pytest.approx(1.0, abs=1e-12)


def test_sigma2_asymptotic_ratio_tends_to_one():
    spec = lk.LevyExponentSpec.stable(1.5, 1.0)
    x = np.array([1e-1, 1e-2, 1e-3])
    r = lk.sigma2(spec, 1.0, x) / lk.sigma2_asymptotic(spec, x)
    assert np.all(np.diff(np.abs(r - 1.0)) < 0)
    assert abs(r[-1] - 1.0) < 2e-3


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_v_beta_symmetry_and_vanishing(x, y):
    spec = lk.LevyExponentSpec.stable(1.5, 1.0)
    a, b = lk.v_beta(spec, 1.0, x, y), lk.v_beta(spec, 1.0, y, x)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-14)
    assert lk.v_beta(spec, 1.0, 0.0, y) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_brownian_v_vanishes_across_zero(x, y):
    spec = lk.LevyExponentSpec.brownian()
    if x * y < 0:
        assert lk.v_beta(spec, 1.0, x, y) == pytest.approx(0.0, abs=1e-9)


def test_frak_u0_is_phi_combination():
    spec = lk.LevyExponentSpec.stable(1.5, 1.0)
    x, y = 0.4, -1.1
    ref = lk.phi0(spec, x) + lk.phi0(spec, y) - lk.phi0(spec, x - y)
    assert lk.frak_u0(spec, x, y) == pytest.approx(ref, rel=1e-10)


def test_kernel_matrices_are_symmetric_psd():
    spec = lk.LevyExponentSpec.stable(1.5, 1.0)
    g = np.linspace(-2, 2, 24)  # avoids 0, outside the killed state space
    for kind in ("u", "v", "frak_u0"):
        m = lk.kernel_matrix(spec, kind, g, 1.0)
        np.testing.assert_allclose(m, m.T, atol=1e-14)
        w = np.linalg.eigvalsh(m)
        assert w[0] >= -1e-8 * w[-1]


def test_evaluate_reports_settings(brownian):
    ev = lk.evaluate(brownian, "U_beta", 1.0, 0.5)
    assert ev.value == pytest.approx(brownian_u(1.0, 0.5), rel=1e-9)
    assert ev.error >= 0


def test_invalid_inputs(brownian):
    with pytest.raises(DomainError):
        lk.u_beta(brownian, -1.0, 0.3)
    with pytest.raises(DomainError):
        lk.evaluate(brownian, "Nope", 1.0, 0.1)
    with pytest.raises(DomainError):
        lk.kernel_matrix(brownian, "w", [0.0, 1.0], 1.0)


def test_frak_u0_rejects_zero(brownian):
    with pytest.raises(DomainError):
        lk.frak_u0(brownian, 0.0, 1.0)
