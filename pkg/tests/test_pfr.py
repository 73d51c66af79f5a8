import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loadclust.datagen import default_basic_models
from loadclust.load_model import CONSTANT_POWER, CompositeLoadModel, MotorParams, ZipParams, zip_power
from loadclust.pfr import (
    Diverged,
    FaultScenario,
    SimConfig,
    dynamic_only_bundle,
    simulate_batch,
    simulate_bundle,
    simulate_bundles,
    simulate_network,
    simulate_pfr,
    solve_network,
    standard_fault_suite,
    static_only_bundle,
    voltage_at,
)
from oracles import scalar_playback, template_voltage

SC = FaultScenario("test", 0.3)
SHORT = SimConfig(horizon=2.0)


# -- template ---------------------------------------------------------------------

def test_template_examples():
    assert voltage_at(SC, 0.2) == 1.0
    assert voltage_at(SC, 0.55) == 0.3
    assert voltage_at(SC, 0.6 + 0.05) == pytest.approx(1.0 - 0.7 * math.exp(-1), abs=1e-15)
    assert voltage_at(SC, 0.65) == pytest.approx(0.7425, abs=1e-4)
    # right-continuous at the events
    assert voltage_at(SC, 0.5) == 0.3
    assert voltage_at(SC, 0.6) == pytest.approx(0.3)


@given(st.floats(0.0, 5.0))
def test_template_matches_oracle(t):
    assert voltage_at(SC, t) == template_voltage(SC, t)


def test_scenario_invariants():
    with pytest.raises(ValueError):
        FaultScenario("x", 1.0)
    with pytest.raises(ValueError):
        FaultScenario("x", 0.3, t_fault_on=0.7, t_clear=0.6)
    with pytest.raises(ValueError):
        FaultScenario("x", 0.3, recovery_time_constant=0.0)


def test_standard_suite():
    suite = standard_fault_suite()
    assert len(suite) == 3
    depths = [s.fault_depth for s in suite]
    assert depths == sorted(depths) and len(set(depths)) == 3
    cfg = SimConfig()
    cfg.check_suite(suite)
    assert all(cfg.horizon >= s.t_clear + 1.0 for s in suite)


def test_short_horizon_rejected():
    with pytest.raises(ValueError):
        SimConfig(horizon=1.0).check_suite(standard_fault_suite())


# -- playback curves ------------------------------------------------------------------

def test_static_limit_is_exact(model):
    m = CompositeLoadModel(0.0, model.active_static, model.reactive_static, model.motor, 0.8, 0.3)
    curve = simulate_pfr(m, SC, SHORT)
    want_p = [0.8 * zip_power(m.active_static, voltage_at(SC, t)) for t in curve.times]
    want_q = [0.3 * zip_power(m.reactive_static, voltage_at(SC, t)) for t in curve.times]
    assert np.array_equal(curve.p_values, want_p)
    assert np.array_equal(curve.q_values, want_q)


def test_pre_fault_flat(model):
    curve = simulate_pfr(model, SC, SHORT)
    pre = curve.times < SC.t_fault_on
    np.testing.assert_allclose(curve.p_values[pre], model.nominal_p, atol=1e-6)
    np.testing.assert_allclose(curve.q_values[pre], model.nominal_q, atol=1e-6)


def test_matches_scalar_oracle(model):
    curve = simulate_pfr(model, SC, SHORT)
    p, q = scalar_playback(model, SC, SHORT.dt, SHORT.horizon)
    np.testing.assert_allclose(curve.p_values, p, atol=1e-9)
    np.testing.assert_allclose(curve.q_values, q, atol=1e-9)


def test_off_grid_events_match_scalar_oracle(model):
    sc = FaultScenario("offgrid", 0.4, t_fault_on=0.503, t_clear=0.617)
    curve = simulate_pfr(model, sc, SHORT)
    p, q = scalar_playback(model, sc, SHORT.dt, SHORT.horizon)
    np.testing.assert_allclose(curve.p_values, p, atol=1e-9)
    np.testing.assert_allclose(curve.q_values, q, atol=1e-9)


def test_dynamic_only_matches_scaled_motor_oracle(motor):
    m = CompositeLoadModel(1.0, CONSTANT_POWER, CONSTANT_POWER, motor, 1.0, 0.5)
    curve = simulate_pfr(m, SC, SHORT)
    p, q = scalar_playback(m, SC, SHORT.dt, SHORT.horizon)
    np.testing.assert_allclose(curve.p_values, p, atol=1e-9)
    np.testing.assert_allclose(curve.q_values, q, atol=1e-9)


def test_near_identity_fault(model):
    sc = FaultScenario("tiny", 0.999)
    curve = simulate_pfr(model, sc, SimConfig(horizon=3.0))
    assert np.max(np.abs(curve.p_values - model.nominal_p)) < 0.01 * model.nominal_p
    assert np.max(np.abs(curve.q_values - model.nominal_q)) < 0.01 * model.nominal_q


def test_dt_halving(model):
    suite = standard_fault_suite()
    coarse = simulate_bundle(model, suite, SimConfig(dt=0.01))
    fine = simulate_bundle(model, suite, SimConfig(dt=0.005))
    for c, f in zip(coarse.curves, fine.curves):
        assert np.max(np.abs(c.p_values - f.p_values[::2])) < 1e-4
        assert np.max(np.abs(c.q_values - f.q_values[::2])) < 1e-4


def test_batch_equals_single():
    models = default_basic_models(1, 4, seed=5)
    _, p, q, bad = simulate_batch(models, SC, SHORT)
    assert not bad.any()
    for k, m in enumerate(models):
        c = simulate_pfr(m, SC, SHORT)
        assert np.array_equal(c.p_values, p[k]) and np.array_equal(c.q_values, q[k])


def test_deterministic(model):
    a = simulate_pfr(model, SC, SHORT)
    b = simulate_pfr(model, SC, SHORT)
    assert np.array_equal(a.p_values, b.p_values) and np.array_equal(a.q_values, b.q_values)


def test_bundle_shapes_and_order(model):
    suite = standard_fault_suite()
    b = simulate_bundle(model, suite)
    assert b.h == 3 and len(b.features()) == 6 * len(b.times)
    rev = simulate_bundle(model, suite[::-1])
    for c, r in zip(b.curves, rev.curves[::-1]):
        assert np.array_equal(c.p_values, r.p_values)
    single = simulate_bundle(model, suite[:1])
    assert np.array_equal(single.curves[0].p_values, simulate_pfr(model, suite[0]).p_values)


def test_stalling_motor_reported():
    weak = MotorParams(2.0, 0.3, 1.0, 0.2, 0.95 * 0.5 * (1 / 0.3 - 1 / 2.0))
    m = CompositeLoadModel(1.0, CONSTANT_POWER, CONSTANT_POWER, weak)
    with pytest.raises(Diverged):
        simulate_pfr(m, FaultScenario("deep", 0.1, t_clear=0.8))


# -- component bundles -----------------------------------------------------------

def test_constant_power_component_is_flat():
    b = static_only_bundle(CONSTANT_POWER, "active", standard_fault_suite())
    for c in b.curves:
        assert np.all(c.p_values == 1.0) and np.all(c.q_values == 0.5)


def test_plateau_algebra():
    z = static_only_bundle(ZipParams(1.0, 0.0, 0.0), "active", [SC], SHORT).curves[0]
    p = static_only_bundle(CONSTANT_POWER, "active", [SC], SHORT).curves[0]
    on = (z.times >= SC.t_fault_on) & (z.times < SC.t_clear - 1e-9)
    np.testing.assert_allclose(p.p_values[on] - z.p_values[on], 0.91, atol=1e-12)


def test_active_bundle_ignores_reactive_side():
    za = ZipParams(0.2, 0.3, 0.5)
    m1 = CompositeLoadModel(0.4, za, ZipParams(1.0, 0.0, 0.0), MotorParams(2.5, 0.2, 1.0, 2.0, 0.5))
    m2 = CompositeLoadModel(0.7, za, ZipParams(0.0, 1.0, 0.0), MotorParams(3.0, 0.25, 1.0, 2.0, 0.4))
    b1 = static_only_bundle(m1.active_static, "active", [SC], SHORT)
    b2 = static_only_bundle(m2.active_static, "active", [SC], SHORT)
    assert np.array_equal(b1.features(), b2.features())


def test_reactive_bundle_holds_p_constant():
    b = static_only_bundle(ZipParams(1.0, 0.0, 0.0), "reactive", [SC], SHORT)
    assert np.all(b.curves[0].p_values == 1.0)
    with pytest.raises(ValueError):
        static_only_bundle(CONSTANT_POWER, "both", [SC], SHORT)


def test_dynamic_bundle_is_p_equals_one(motor):
    a = dynamic_only_bundle(motor, [SC], SHORT)
    b = simulate_bundle(CompositeLoadModel(1.0, CONSTANT_POWER, CONSTANT_POWER, motor), [SC], SHORT)
    assert np.array_equal(a.features(), b.features())
    assert np.array_equal(a.features(), dynamic_only_bundle(motor, [SC], SHORT).features())


def test_heavier_motor_peaks_later(motor):
    sc = FaultScenario("deep", 0.2)
    from loadclust.pfr import _LoadArrays, _Playback, _run

    def slip_peak_time(mp):
        m = CompositeLoadModel(1.0, CONSTANT_POWER, CONSTANT_POWER, mp)
        loads = _LoadArrays([m], (1,))
        exc = _Playback(sc, loads)
        # record slip through the power hook
        slips = []
        orig = loads.power

        def power(y, u_d, u_q):
            slips.append(float(y[2][0]))
            return orig(y, u_d, u_q)

        loads.power = power
        _run(loads, exc, sc, SHORT)
        return int(np.argmax(slips))

    light = slip_peak_time(motor)
    heavy = slip_peak_time(MotorParams(motor.x_open, motor.x_transient, motor.t_open,
                                       2 * motor.inertia, motor.torque_mech))
    assert heavy > light


# -- thevenin / network -------------------------------------------------------------

def test_thevenin_starts_at_nominal(model):
    cfg = SimConfig(horizon=2.0, excitation_mode="thevenin", thevenin_x=0.05)
    c = simulate_pfr(model, SC, cfg)
    pre = c.times < SC.t_fault_on
    np.testing.assert_allclose(c.p_values[pre], model.nominal_p, atol=1e-8)
    np.testing.assert_allclose(c.q_values[pre], model.nominal_q, atol=1e-8)


def test_thevenin_with_tiny_impedance_approaches_playback(model):
    cfg = SimConfig(horizon=2.0, excitation_mode="thevenin", thevenin_x=1e-6)
    a = simulate_pfr(model, SC, cfg)
    b = simulate_pfr(model, SC, SHORT)
    np.testing.assert_allclose(a.p_values, b.p_values, atol=1e-4)


def test_network_solve_constant_impedance():
    """Linear loads: V = E / (1 + Z Y) in closed form."""
    y = np.array([[0.8 - 0.3j, 0.5 - 0.1j]])
    z = np.array([[0.02j + 0.01, 0.01j], [0.01j, 0.03j]])
    e = 1.0
    v, ok = solve_network(lambda vv: y * vv, e, z, np.ones((1, 2), dtype=complex))
    assert ok.all()
    want = np.linalg.solve(np.eye(2) + z * y[0][None, :], np.full(2, e))
    np.testing.assert_allclose(v[0], want, atol=1e-12)


def test_network_of_identical_rows_is_row_independent():
    models = default_basic_models(2, 3, seed=1)
    z = np.full((3, 3), 0.01j) + np.eye(3) * 0.03j
    _, p, q, bad = simulate_network([models, models], SC, SimConfig(horizon=1.5,
                                    excitation_mode="thevenin"), z)
    assert not bad.any()
    assert np.array_equal(p[0], p[1])
    _, p1, _, _ = simulate_network([models], SC, SimConfig(horizon=1.5, excitation_mode="thevenin"), z)
    np.testing.assert_allclose(p1[0], p[0], atol=1e-12)
