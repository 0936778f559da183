import math

import numpy as np
import pytest

from rebirthlab import diffusion_kernels as dk
from rebirthlab import levy_kernels as lk
from rebirthlab import path_engine as pe
from rebirthlab.errors import ConfigError, DomainError, NumericalFailure
from rebirthlab.rebirth_kernels import BaseProcess, Measure, RebirthSpec
from rebirthlab.rng import derive_rng


@pytest.fixture
def full0():
    return RebirthSpec.full(Measure.dirac(0.0))


def test_simconfig_validation():
    with pytest.raises(ConfigError):
        pe.SimConfig(dt=0.0)
    with pytest.raises(ConfigError):
        pe.SimConfig(dt=1e-10, t_max=1e3)
    with pytest.raises(ConfigError):
        pe.SimConfig(hitting_mode="exact")


def test_base_path_is_deterministic_and_clock_killed(case1):
    cfg = pe.SimConfig(dt=1e-2, t_max=100.0)
    a = pe.simulate_base_path(case1, 0.0, cfg, derive_rng(1, "p"))
    b = pe.simulate_base_path(case1, 0.0, cfg, derive_rng(1, "p"))
    np.testing.assert_array_equal(a.states, b.states)
    assert a.death_cause == "exp_clock"
    assert a.times[0] == 0.0 and a.times[-1] == pytest.approx(a.lifetime)
    lifetimes = [pe.simulate_base_path(case1, 0.0, cfg, derive_rng(2, i)).lifetime
                 for i in range(2000)]
    assert np.mean(lifetimes) == pytest.approx(1.0, abs=3.5 / math.sqrt(2000))


@pytest.mark.parametrize("mode", ["bridge_corrected"])
def test_hitting_probability_case2(brownian, mode):
    # P^x(T_0 < Exp(β)) = e^{-√(2β) x}
    base = BaseProcess(2, 1.0, levy=brownian)
    cfg = pe.SimConfig(dt=1e-2, t_max=100.0, hitting_mode=mode)
    n = 3000
    hits = np.array([pe.simulate_base_path(base, 0.3, cfg, derive_rng(3, i)).death_cause
                     == "hit_zero" for i in range(n)])
    p = math.exp(-math.sqrt(2.0) * 0.3)
    assert abs(hits.mean() - p) < 3.5 * math.sqrt(p * (1 - p) / n)


def test_naive_hitting_misses_crossings(brownian):
    base = BaseProcess(2, 1.0, levy=brownian)
    rates = {}
    for mode in ("naive", "bridge_corrected"):
        cfg = pe.SimConfig(dt=5e-2, t_max=100.0, hitting_mode=mode)
        rates[mode] = np.mean([pe.simulate_base_path(base, 0.3, cfg, derive_rng(4, i)).death_cause
                               == "hit_zero" for i in range(1000)])
    assert rates["naive"] < rates["bridge_corrected"]


def test_killed_path_ends_at_zero(brownian):
    base = BaseProcess(3, 0.0, levy=brownian)
    c = pe.simulate_base_path(base, 0.5, pe.SimConfig(dt=1e-3, t_max=50.0), derive_rng(5))
    if c.death_cause == "hit_zero":
        assert c.states[-1] == 0.0
        assert np.all(c.states[:-1] > 0)


def test_symmetric_stable_characteristic_function():
    x = pe.symmetric_stable(1.5, 200000, np.random.default_rng(0))
    for lam in (0.3, 0.7, 1.5):
        ref = math.exp(-lam ** 1.5)
        assert np.mean(np.cos(lam * x)) == pytest.approx(ref, abs=4.0 / math.sqrt(200000))


def test_ou_variance():
    base = BaseProcess(4, 1e-6, diffusion=dk.DiffusionSpec.ou(1.0))
    cfg = pe.SimConfig(dt=1e-2, t_max=1.0)
    ends = np.array([pe.simulate_base_path(base, 0.0, cfg, derive_rng(6, i)).states[-1]
                     for i in range(3000)])
    var = (1 - math.exp(-2.0)) / 2.0
    assert ends.var() == pytest.approx(var, rel=4 * math.sqrt(2 / 3000))


def test_overflow_raises():
    base = BaseProcess(1, 1e-3, levy=lk.LevyExponentSpec.stable(1.05, 1.0))
    with pytest.raises(NumericalFailure):
        pe.simulate_base_path(base, 0.0, pe.SimConfig(dt=1e-2, t_max=500.0, overflow=1.0),
                              derive_rng(7))


def test_rebirth_bundle_structure(case1, full0):
    b = pe.simulate_rebirth(case1, full0, 0.5, pe.SimConfig(dt=1e-3, t_max=5.0), stream=("s",))
    assert b.cycles[0].start == 0.5
    assert all(c.start == 0.0 for c in b.cycles[1:])
    assert np.all(np.diff(b.zeta) > 0)
    np.testing.assert_allclose(b.zeta, [c.end_time for c in b.cycles[:len(b.zeta)]])
    assert b.end_time == pytest.approx(5.0)
    assert b.n_t(0.0) == 1 and b.n_t(b.zeta[0]) == 2


def test_partial_rebirth_cycle_count(case1):
    # each death continues with probability |ν|/(1+|ν|) = 1/3: mean 3/2 cycles
    spec = RebirthSpec.partial(Measure.dirac(1.0, 0.5))
    cfg = pe.SimConfig(dt=1e-2, t_max=1e3)
    counts = [len(pe.simulate_rebirth(case1, spec, 0.0, cfg, stream=(i,)).cycles)
              for i in range(2000)]
    assert np.mean(counts) == pytest.approx(1.5, abs=3.5 * math.sqrt(0.75 / 2000))


def test_model_roundtrip():
    for base in (BaseProcess(1, 2.0, levy=lk.LevyExponentSpec.stable(1.5, 0.7)),
                 BaseProcess(5, 1.0, diffusion=dk.DiffusionSpec.ou(0.5))):
        again = pe.base_from_model(pe.model_of(base))
        assert pe.model_of(again) == pe.model_of(base)


# local times ------------------------------------------------------------------

@pytest.fixture
def bundle(case1, full0):
    return pe.simulate_rebirth(case1, full0, 0.0, pe.SimConfig(dt=1e-3, t_max=4.0), stream=("lt",))


@pytest.mark.parametrize("method,eps", [("occupation", 0.05), ("tanaka", None), ("bridge", None)])
def test_decomposition_and_monotonicity(bundle, method, eps):
    y = np.linspace(-0.5, 0.5, 5)
    est = pe.estimate_local_time(bundle, y, [0.5, 1.0, 2.0], epsilon=eps, method=method)
    assert est.decomposition_residual <= 1e-12
    assert np.all(np.diff(est.values, axis=1) >= -1e-15)
    assert np.all(est.values >= 0)
    np.testing.assert_allclose(est.at(bundle.end_time), est.values[:, -1], atol=1e-12)


@pytest.mark.parametrize("method,eps", [("occupation", 0.05), ("bridge", None)])
def test_shift_identity(bundle, method, eps):
    y = np.linspace(-0.5, 0.5, 5)
    est = pe.estimate_local_time(bundle, y, epsilon=eps, method=method)
    s = float(bundle.cycles[-1].times[3]) if len(bundle.cycles) > 1 else 1.0
    shifted = pe.shift_bundle(bundle, s)
    es = pe.estimate_local_time(shifted, y, epsilon=eps, method=method, per_cycle=False)
    for t in (0.1, 0.7):
        np.testing.assert_allclose(est.at(s + t) - est.at(s), es.at(t), atol=1e-12)


def test_shift_requires_grid_time(bundle):
    with pytest.raises(DomainError):
        pe.shift_bundle(bundle, 0.00037)


def test_occupation_bandwidth_guard(bundle):
    with pytest.raises(ConfigError):
        pe.estimate_local_time(bundle, [0.0], epsilon=0.02)


def test_pure_jump_paths_need_occupation():
    base = BaseProcess(1, 1.0, levy=lk.LevyExponentSpec.stable(1.5, 1.0))
    b = pe.simulate_rebirth(base, RebirthSpec.full(Measure.dirac(0.0)), 0.0,
                            pe.SimConfig(dt=1e-3, t_max=1.0))
    with pytest.raises(ConfigError):
        pe.estimate_local_time(b, [0.0], method="tanaka")
    est = pe.estimate_local_time(b, [0.0], epsilon=0.05)
    assert est.decomposition_residual <= 1e-12


def test_laplace_functional_limits(bundle):
    est = pe.estimate_local_time(bundle, [0.0, 0.25], method="bridge")
    total = est.values[0, -1]
    assert pe.laplace_functional(est, 1e-9, 0.0) == pytest.approx(total, rel=1e-6)
    assert pe.laplace_functional(est, 1.0, 0.0) < total
    with pytest.raises(DomainError):
        pe.laplace_functional(est, 1.0, 0.3)


def test_bridge_local_time_normalization(case1):
    # E^0 L^0_∞ = u^1(0,0) = 1/√2 for one cycle; the bridge sampler is exact per step
    cfg = pe.SimConfig(dt=1e-3, t_max=60.0)
    vals = []
    for i in range(1500):
        c = pe.simulate_base_path(case1, 0.0, cfg, derive_rng(8, "c", i))
        b = pe.PathBundle([c], np.array([c.end_time]), None, 8, ("c", i), False,
                          pe.model_of(case1), cfg.t_max, cfg.dt)
        vals.append(pe.estimate_local_time(b, [0.0], method="bridge", per_cycle=False).values[0, -1])
    vals = np.array(vals)
    assert abs(vals.mean() - 1 / math.sqrt(2)) < 3.5 * vals.std() / math.sqrt(vals.size)
