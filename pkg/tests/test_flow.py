import math

import numpy as np
import pytest

from harnacklab import flow
from harnacklab import geometry as geo
from harnacklab.errors import BlowupError, CFLError, ConfigError, DomainError, InvalidParameter, WrongEquation
from harnacklab.flow import EquationKind, ManufacturedTarget, ScenarioConfig

from conftest import config, scenario, trajectory


def advance(state, u, eqn, T, steps):
    dt = T / steps
    for _ in range(steps):
        state, u = flow.step(state, u, eqn, dt)
    return state, u


# -- single steps --------------------------------------------------------------------------


def test_constant_log_heat_decays_exponentially():
    state = geo.flat_torus(1, 16)
    dt = 0.25 * state.grid.h ** 2
    steps = math.ceil(1.0 / dt)
    state, u = advance(state, np.full(16, -1.0), EquationKind.LOG_HEAT, 1.0, steps)
    np.testing.assert_allclose(u, -math.exp(-1.0), atol=1e-8)


def test_constant_soliton_heat_separable_solution():
    state = geo.flat_torus(1, 16)
    steps = math.ceil(1.0 / (0.25 * state.grid.h ** 2))
    state, u = advance(state, np.full(16, 1.0), EquationKind.SOLITON_HEAT, 1.0, steps)
    np.testing.assert_allclose(u, 1.0 / 1.5 ** 2, atol=1e-8)
    assert u[0] == pytest.approx(0.4444444444, abs=1e-8)


def test_round_sphere_metric_only_step():
    state = geo.conformal_sphere(16)
    # the diffusivity grows to 1/0.6 by t = 0.2
    steps = math.ceil(0.2 / (0.25 * 0.6 * state.grid.h ** 2))
    state, _ = advance(state, None, None, 0.2, steps)
    np.testing.assert_allclose(np.exp(2 * state.phi), 0.6, atol=1e-8)


def test_rk4_local_error_is_fifth_order():
    state = geo.flat_torus(1, 16)
    u0 = np.full(16, -1.0)
    exact = lambda dt: -math.exp(-dt)
    errs = []
    for dt in (0.02, 0.01):
        _, one = flow.step(state, u0, EquationKind.LOG_HEAT, dt)
        _, half = advance(state, u0, EquationKind.LOG_HEAT, dt, 2)
        errs.append(abs(one[0] - half[0]))
        assert abs(half[0] - exact(dt)) < abs(one[0] - exact(dt))
    assert math.log2(errs[0] / errs[1]) == pytest.approx(5.0, abs=0.3)


def test_step_rejects_unstable_dt():
    state = geo.flat_torus(1, 32)
    with pytest.raises(CFLError):
        flow.step(state, np.zeros(32), EquationKind.LOG_HEAT, state.grid.h ** 2)


def test_step_reports_blowup_time():
    state = geo.flat_torus(1, 32)
    u = np.zeros(32)
    u[4] = 1e200
    with pytest.raises(BlowupError) as info, np.errstate(all="ignore"):
        flow.step(state, u, EquationKind.LOG_HEAT, 1e-4)
    assert info.value.t == pytest.approx(1e-4)


def test_step_refuses_conjugate():
    state = geo.flat_torus(1, 32)
    with pytest.raises(WrongEquation):
        flow.step(state, np.zeros(32), EquationKind.CONJUGATE, 1e-4)


# -- forward runs --------------------------------------------------------------------------


def test_torus_run_keeps_f_positive_and_lands_on_T_end():
    traj = trajectory(N=32, u0=(-1.0, 0.1, 1))
    assert traj.times[-1] == 2.0
    assert np.all(np.diff(traj.times) > 0)
    f = np.exp(-traj.solution)
    assert np.all(np.isfinite(traj.solution)) and f.min() > 0
    assert not traj.hypothesis_violated and not traj.truncated


def test_stable_step_rule_respected():
    traj = trajectory(backend="conformal_sphere", N=32, phi0=(0.0, 0.05, 1))
    for k in range(len(traj) - 1):
        dt = traj.times[k + 1] - traj.times[k]
        limit = traj.sigma * traj.h ** 2 / geo.diffusivity_max(traj.metric(k))
        assert dt <= limit * (1 + 1e-12)


def test_round_sphere_matches_exact_solution():
    traj = trajectory(backend="conformal_sphere", N=32, u0=(-1.0, 0.0, 1))
    assert traj.min_R.min() > 0
    for k in range(0, len(traj), 37):
        exact = 1 - 2 * traj.times[k]
        np.testing.assert_allclose(np.exp(2 * traj.phi[k]), exact, rtol=1e-6)
    np.testing.assert_allclose(traj.min_R, 2.0 / (1 - 2 * traj.times), rtol=1e-6)


def test_round_sphere_extinction_truncates():
    traj = flow.run_forward(config(backend="conformal_sphere", N=16, T_end=0.6))
    assert traj.truncated
    assert traj.times[-1] < 0.5
    assert np.exp(2 * traj.phi[-1]).min() > flow.EXTINCTION_GUARD


def test_forward_run_is_deterministic():
    cfg = config(backend="conformal_sphere", N=16, phi0=(0.0, 0.05, 1))
    a, b = flow.run_forward(cfg), flow.run_forward(cfg)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.solution, b.solution)
    assert np.array_equal(a.phi, b.phi)


def test_negative_curvature_is_flagged_not_rejected():
    traj = flow.run_forward(config(backend="conformal_sphere", N=32, phi0=(0.0, 0.5, 2), T_end=0.05))
    assert traj.min_R[0] < 0
    assert traj.hypothesis_violated


# -- configuration -------------------------------------------------------------------------


def test_config_round_trip():
    cfg = config(backend="conformal_sphere", N=32, phi0=(0.1, 0.05, 1))
    again = ScenarioConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    assert again.initial_metric().phi.tolist() == cfg.initial_metric().phi.tolist()


def test_digest_ignores_key_order():
    doc = scenario(N=32)
    shuffled = dict(reversed(list(doc.items())))
    assert list(doc) != list(shuffled)
    assert flow.digest(doc) == flow.digest(shuffled)
    assert flow.canonical_bytes(doc) == flow.canonical_bytes(shuffled)
    assert b" " not in flow.canonical_bytes(doc)


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"t_min": 3.0}, "T_end"),
        ({"N": 4}, "N"),
        ({"equation": "wave"}, "equation"),
        ({"sigma": 0.9}, "sigma"),
        ({"L": -1.0}, "L"),
        ({"colour": 1}, "colour"),
        ({"u0": {"a": 1, "c": 2}}, "u0"),
        ({"theorems": ["thm_9"]}, "theorems"),
        ({"path_queries": [{"x1": 0}]}, "path_queries"),
    ],
)
def test_config_errors_name_the_field(patch, field):
    doc = scenario(N=32)
    doc.update(patch)
    with pytest.raises(ConfigError) as info:
        ScenarioConfig.from_dict(doc)
    assert info.value.field == field
    assert field in str(info.value)


def test_missing_required_key():
    doc = scenario()
    del doc["T_end"]
    with pytest.raises(ConfigError, match="T_end"):
        ScenarioConfig.from_dict(doc)


def test_default_monitor_window():
    assert config(T_end=2.0).monitor_start == pytest.approx(0.1)


# -- conjugate solve -----------------------------------------------------------------------


def conjugate_metric(**kw):
    return flow.run_forward(config(equation="conjugate", **kw))


def test_conjugate_heat_semigroup_on_torus():
    errs = []
    for N in (32, 64):
        metric = conjugate_metric(N=N, T_end=1.0)
        x = metric.grid.nodes
        traj = flow.run_conjugate(metric, 1 + 0.5 * np.cos(x))
        tau = traj.times[-1]
        errs.append(np.abs(traj.solution[-1] - (1 + 0.5 * math.exp(-tau) * np.cos(x))).max())
    assert errs[1] < 1e-3
    assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.3)


def test_conjugate_stamps_are_reversed_times():
    metric = conjugate_metric(backend="conformal_sphere", N=16, phi0=(0.0, 0.05, 1))
    traj = flow.run_conjugate(metric, np.ones(16))
    T = metric.times[-1]
    np.testing.assert_allclose(traj.times, T - metric.times[::-1], atol=1e-15)
    assert traj.physical_time(0) == T and traj.physical_time(len(traj) - 1) == pytest.approx(0.0)
    assert traj.interpolation_order == 4


def test_constant_terminal_data_conserves_mass_on_torus():
    metric = conjugate_metric(N=16, T_end=1.0)
    traj = flow.run_conjugate(metric, np.full(16, 2.0))
    assert flow.mass_drift(traj) < 1e-14


def test_sphere_mass_drift_second_order():
    drifts = []
    for N in (32, 64):
        metric = conjugate_metric(backend="conformal_sphere", N=N, phi0=(0.0, 0.05, 1))
        drifts.append(flow.mass_drift(flow.run_conjugate(metric, np.ones(N))))
    h = math.pi / 64
    assert drifts[1] <= 10 * h * h
    assert math.log2(drifts[0] / drifts[1]) == pytest.approx(2.0, abs=0.3)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_conjugate_rejects_nonpositive_terminal_data(bad):
    metric = conjugate_metric(N=16, T_end=0.1)
    f = np.ones(16)
    f[5] = bad
    with pytest.raises(DomainError):
        flow.run_conjugate(metric, f)


def test_terminal_data_is_exponential_of_u0():
    cfg = config(equation="conjugate", N=16)
    np.testing.assert_allclose(flow.terminal_data(cfg), np.exp(-cfg.u0.evaluate(cfg.initial_metric())))
    assert flow.terminal_data(cfg).min() > 0


# -- manufactured solutions ----------------------------------------------------------------


def test_manufactured_torus_order():
    cfg = config(N=32, T_end=0.5)
    report = flow.manufactured_run(cfg, ManufacturedTarget(amplitude=1.0, rate=1.0, k=1, trig="sin"))
    assert 1.7 <= report.order <= 2.3


def test_manufactured_sphere_order():
    cfg = config(backend="conformal_sphere", N=32, T_end=0.2, freeze_metric=True, equation="soliton_heat")
    report = flow.manufactured_run(cfg, ManufacturedTarget(amplitude=1.0, rate=2.0, k=1, trig="cos"))
    assert 1.7 <= report.order <= 2.3


def test_manufactured_constant_target_is_exact():
    cfg = config(N=16, T_end=0.5, equation="soliton_heat")
    report = flow.manufactured_run(cfg, ManufacturedTarget(amplitude=0.0, rate=0.0, k=1, trig="cos", offset=-0.7))
    assert max(report.errors) <= 1e-8


def test_manufactured_sphere_requires_frozen_cos_target():
    cfg = config(backend="conformal_sphere", N=16, T_end=0.1)
    with pytest.raises(InvalidParameter):
        flow.manufactured_run(cfg, ManufacturedTarget(trig="cos"))
    frozen = config(backend="conformal_sphere", N=16, T_end=0.1, freeze_metric=True)
    with pytest.raises(InvalidParameter):
        flow.manufactured_run(frozen, ManufacturedTarget(trig="sin"))


def test_empirical_orders():
    orders = flow.empirical_orders([32, 64, 128], [4.0, 1.0, None])
    assert orders[0] is None and orders[1] == pytest.approx(2.0) and orders[2] is None
