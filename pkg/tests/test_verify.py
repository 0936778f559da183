import math

import numpy as np
import pytest

from rebirthlab import levy_kernels as lk
from rebirthlab import path_engine as pe
from rebirthlab import verify as vf
from rebirthlab.errors import ConfigError, DomainError
from rebirthlab.rebirth_kernels import BaseProcess, Measure, RebirthSpec

CFG = pe.SimConfig(dt=1e-3, t_max=15.0, seed=3)


def test_thresholds_validation():
    with pytest.raises(ConfigError):
        vf.Thresholds(z_max=0.0)
    with pytest.raises(ConfigError):
        vf.Thresholds(ks_level=1.5)


def test_normalization_targets(case1):
    t = vf.check_normalizations(case1, None, 0.0, 0.0, None, 400, CFG)
    assert t.details["target"] == pytest.approx(1 / math.sqrt(2))
    assert t.passed and t.params["method"] == "bridge"
    t = vf.check_normalizations(case1, RebirthSpec.full(Measure.dirac(0.0)), 0.0, 0.0, 1.0, 300,
                                CFG)
    assert t.details["target"] == pytest.approx(1.0)
    assert t.details["truncation_bound"] < 1e-6
    with pytest.raises(ConfigError):
        vf.check_normalizations(case1, RebirthSpec.full(Measure.dirac(0.0)), 0, 0, None, 10, CFG)


def test_normalization_detects_wrong_target(brownian):
    # paths of β = 1 compared with the β = 2 kernel must fail at moderate n
    wrong = BaseProcess(1, 2.0, levy=brownian)
    t = vf.check_normalizations(BaseProcess(1, 1.0, levy=brownian), None, 0.0, 0.0, None, 2000,
                                CFG)
    z = (t.details["mean"] - float(wrong.potential(0.0, 0.0, 0.0))) / t.details["se"]
    assert abs(z) > 3


def test_records_are_json_safe(case1):
    import json
    t = vf.check_normalizations(case1, None, 0.0, 0.0, None, 50, CFG)
    json.dumps(t.to_record())
    assert set(t.to_record()) >= {"check", "test_kind", "n", "statistic", "threshold", "pass",
                                  "z_score", "grid", "seed"}


def test_conditional_independence_and_control(case1):
    mu = Measure.dirac(0.0)
    t = vf.check_conditional_independence(case1, mu, 2, [0.0], 1000, CFG)
    assert t.passed, t.to_record()
    assert t.details["acceptance"] == pytest.approx(0.25, abs=0.05)
    bad = vf.check_conditional_independence(case1, mu, 2, [0.0], 1000, CFG, corrupt=True)
    assert not bad.passed


def test_eisenbaum_and_unweighted_control(case1):
    t = vf.check_eisenbaum(case1, 0.0, 1.0, [-0.5, 0.0, 0.5], 3000, CFG, s_trend=None)
    assert t.passed, t.to_record()
    assert len(t.sub_tests) == 4
    bad = vf.check_eisenbaum(case1, 0.0, 1.0, [-0.5, 0.0, 0.5], 3000, CFG, weighted=False,
                             s_trend=None)
    assert not bad.passed


def test_combined_identity_and_control(case1):
    mu = Measure.dirac(0.0)
    t = vf.check_combined_identity(case1, mu, 2, 1.0, [0.0, 0.5], 4000, CFG)
    assert t.passed, t.to_record()
    bad = vf.check_combined_identity(case1, mu, 2, 1.0, [0.0, 0.5], 4000, CFG,
                                     wrong_covariance=True)
    assert not bad.passed


def test_distributional_checks_validate_inputs(case1):
    with pytest.raises(DomainError):
        vf.check_eisenbaum(case1, 0.0, 0.0, [0.0], 10, CFG)
    with pytest.raises(DomainError):
        vf.check_conditional_independence(case1, Measure.dirac(0.0), 0, [0.0], 10, CFG)


def test_modulus_statistic_on_linear_paths():
    # X(x) = x: uniform ratio at h is h / (2·2h·log(1/h))^{1/2}
    g = np.linspace(0, 1, 2 ** 8 + 1)
    rep = vf.modulus_statistic(np.vstack([g, 2 * g]), g, "uniform", [2 ** -4, 2 ** -8],
                               lambda h: 2.0 * h)
    h = 2 ** -8
    assert rep.ratio_stats[1, 0] == pytest.approx(h / math.sqrt(4 * h * math.log(1 / h)))
    assert rep.ratio_stats[1, 1] == pytest.approx(2 * rep.ratio_stats[1, 0])
    assert rep.status == "informational"
    np.testing.assert_allclose(rep.levels, [4, 8])


def test_modulus_statistic_errors():
    g = np.linspace(0, 1, 17)
    with pytest.raises(DomainError):
        vf.modulus_statistic(g[None], g, "uniform", [0.1], lambda h: h)
    with pytest.raises(DomainError):
        vf.modulus_statistic(g[None], g, "local", [1 / 16], lambda h: h)
    with pytest.raises(DomainError):
        vf.modulus_statistic(g[None], np.r_[0, 0.1, 0.5], "uniform", [0.1], lambda h: h)


def test_merge_modulus_reports_pools_replicas():
    g = np.linspace(0, 1, 33)
    rng = np.random.default_rng(0)
    a = vf.modulus_statistic(rng.normal(size=(3, 33)), g, "uniform", [1 / 16, 1 / 32], abs)
    b = vf.modulus_statistic(rng.normal(size=(2, 33)), g, "uniform", [1 / 16, 1 / 32], abs)
    m = vf.merge_modulus_reports([a, b], band=(0, 100), promote=True)
    assert m.ratio_stats.shape == (2, 5) and m.status == "pass"
    with pytest.raises(ValueError):
        vf.ModulusReport("uniform", np.array([0.1, 0.2]), np.zeros((2, 1)), np.ones(1),
                         np.zeros(2), np.zeros((2, 2)), 0.0, (0, 1), True, 0)


def test_joint_direction_modulus_covers_half_circle():
    reps = vf.joint_direction_modulus(10, 11, 8, n_directions=4, seed=3)
    angles = [th for th, _ in reps]
    np.testing.assert_allclose(angles, np.pi * np.arange(4) / 4)
    for th, rep in reps:
        assert rep.ratio_stats.shape == (4, 10)
        assert rep.details["a0"] ** 2 + rep.details["a_p"] ** 2 == pytest.approx(1.0)
        assert 0.5 < rep.median[-1] < 1.5
    # opposite directions would give identical statistics, so [0, π) suffices
    again = vf.joint_direction_modulus(10, 11, 8, n_directions=4, seed=3)
    np.testing.assert_array_equal(reps[2][1].ratio_stats, again[2][1].ratio_stats)


def test_brownian_modulus_smoke():
    rep = vf.brownian_field_modulus(20, 12, 8, seed=1)
    assert rep.ratio_stats.shape == (5, 20)
    assert 0.6 < rep.median[-1] < 1.3


def test_chi_square_local_smoke():
    rep = vf.chi_square_modulus("local", 2, 10, k_max=12, k_min=8, seed=2)
    assert rep.mode == "local" and np.all(rep.median > 0)
    assert "median_nondecreasing" in rep.details


def test_spectral_precondition():
    assert vf.spectral_precondition(lk.LevyExponentSpec.brownian())["value"] == pytest.approx(8.0)
    assert vf.spectral_precondition(lk.LevyExponentSpec.stable(1.5, 1.0), 1.0)["finite"]
    lam = np.geomspace(1e-3, 1e3, 200)
    tab = lk.LevyExponentSpec.tabulated(lam, lam ** 1.5, 1.5)
    assert vf.spectral_precondition(tab, 1.0)["value"] == pytest.approx(
        vf.spectral_precondition(lk.LevyExponentSpec.stable(1.5, 1.0), 1.0)["value"], rel=1e-3)
    # exponents for which the integral diverges are refused when the exponent is built
    with pytest.raises(DomainError):
        lk.LevyExponentSpec.stable(0.8, 1.0)
    with pytest.raises(DomainError):
        lk.LevyExponentSpec.tabulated(lam, lam ** 0.8, 0.8)
