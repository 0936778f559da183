import numpy as np
import pytest
from scipy.special import pbdv

from rebirthlab import diffusion_kernels as dk
from rebirthlab.errors import DomainError

from conftest import brownian_u


def ou_oracle(theta, beta, x, y):
    """OU resolvent density from parabolic cylinder functions.

    Increasing/decreasing solutions e^{θx²/2} D_{-β/θ}(∓x√(2θ)); the density
    with respect to the speed measure is p(x∧y) q(x∨y) / ((p'q - pq')/s').
    """
    p = lambda z: np.exp(theta * z * z / 2) * pbdv(-beta / theta, -z * np.sqrt(2 * theta))[0]
    q = lambda z: np.exp(theta * z * z / 2) * pbdv(-beta / theta, z * np.sqrt(2 * theta))[0]
    lo, hi = min(x, y), max(x, y)
    h = 1e-6
    dp = (p(lo + h) - p(lo - h)) / (2 * h)
    dq = (q(lo + h) - q(lo - h)) / (2 * h)
    w = (dp * q(lo) - p(lo) * dq) / np.exp(theta * lo * lo)
    return p(lo) * q(hi) / w


def test_bm_preset_matches_brownian_in_speed_convention():
    # m'(x) = 2 for a = 1, c = 0, so ū is half the Lebesgue-normalized kernel
    f = dk.solve_factors(dk.DiffusionSpec.bm(), 1.0)
    x = np.array([-2.0, -0.3, 0.0, 0.4, 1.7])
    np.testing.assert_allclose(dk.u_bar_beta(f, x, 0.25), 0.5 * brownian_u(1.0, x - 0.25),
                               rtol=1e-7)
    assert dk.speed_density(dk.DiffusionSpec.bm(), 0.3) == pytest.approx(2.0)


@pytest.mark.parametrize("x,y", [(-0.3, 0.8), (0.5, 0.5), (-1.2, -0.4), (1.0, 2.0)])
def test_ou_against_parabolic_cylinder(x, y):
    f = dk.solve_factors(dk.DiffusionSpec.ou(1.0), 1.0)
    assert dk.u_bar_beta(f, x, y) == pytest.approx(ou_oracle(1.0, 1.0, x, y), rel=1e-7)


def test_ou_frozen_value():
    f = dk.solve_factors(dk.DiffusionSpec.ou(1.0), 1.0)
    assert dk.u_bar_beta(f, -0.3, 0.8) == pytest.approx(0.159207551, rel=1e-7)


@pytest.mark.parametrize("spec", [dk.DiffusionSpec.ou(1.0), dk.DiffusionSpec.bm_drift(-0.5)])
def test_row_integral_is_expected_lifetime(spec):
    f = dk.solve_factors(spec, 2.0)
    # a downward drift loses ~1e-6 of mass through the truncated lower edge
    np.testing.assert_allclose(dk.row_integral(f, np.array([-2.0, 0.0, 1.5])), 0.5, rtol=1e-5)
    assert f.wronskian_drift < 1e-8


def test_killed_kernels_bm():
    spec = dk.DiffusionSpec.bm()
    f = dk.solve_factors(spec, 1.0)
    k = np.sqrt(2.0)
    x, y = 0.5, 1.0
    v_ref = (np.exp(-k * (y - x)) - np.exp(-k * (x + y))) / (2 * k)
    assert dk.v_bar_beta(f, x, y) == pytest.approx(v_ref, rel=1e-7)
    assert dk.frak_u0_diffusion(spec, x, y) == pytest.approx(min(x, y))
    assert dk.h_bar(f, x, y) == pytest.approx(min(x, y) - v_ref, rel=1e-7)


def test_kernel_symmetry_and_psd():
    spec = dk.DiffusionSpec.ou(1.0)
    f = dk.solve_factors(spec, 1.0)
    g = np.linspace(0.05, 2.5, 40)
    for kind in ("u_bar", "v_bar", "s_min", "h_bar"):
        m = dk.kernel_matrix(kind, g, spec=spec, factors=f)
        np.testing.assert_allclose(m, m.T, rtol=1e-10, atol=1e-14)
        w = np.linalg.eigvalsh(m)
        assert w[0] >= -1e-8 * w[-1]


def test_table_spec_matches_preset():
    xs = np.linspace(-10, 10, 401)
    tab = dk.DiffusionSpec.from_table(xs, np.ones_like(xs), -xs)
    f_tab = dk.solve_factors(tab, 1.0)
    f_ou = dk.solve_factors(dk.DiffusionSpec.ou(1.0), 1.0)
    assert dk.u_bar_beta(f_tab, -0.3, 0.8) == pytest.approx(dk.u_bar_beta(f_ou, -0.3, 0.8),
                                                            rel=1e-6)


def test_domain_validation():
    with pytest.raises(DomainError):
        dk.DiffusionSpec.bm((1.0, 2.0))
    with pytest.raises(DomainError):
        dk.DiffusionSpec.from_table([0.0, 0.0], [1, 1], [0, 0])
    spec = dk.DiffusionSpec.bm((-1.0, 1.0))
    with pytest.raises(DomainError):
        spec.check([1.5])
    with pytest.raises(DomainError):
        dk.kernel_matrix("bogus", [0.1, 0.2], spec=spec)
