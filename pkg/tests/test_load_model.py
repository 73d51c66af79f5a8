import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loadclust.load_model import (
    CONSTANT_POWER,
    CompositeLoadModel,
    MotorParams,
    MotorState,
    NoEquilibrium,
    ZipParams,
    composite_power,
    motor_derivatives,
    motor_init_steady_state,
    motor_output,
    operating_point,
    zip_power,
)
from oracles import motor_rhs, scan_equilibrium_slip, steady_power, zip_direct


@st.composite
def zips(draw):
    raw = [draw(st.floats(0.0, 1.0)) for _ in range(3)]
    if sum(raw) == 0.0:
        raw[2] = 1.0
    return ZipParams.normalized(*raw, warn=False)


@st.composite
def motors(draw, loading=(0.05, 0.9)):
    x = draw(st.floats(1.5, 4.0))
    xp = draw(st.floats(0.1, 0.4))
    t_open = draw(st.floats(0.3, 2.0))
    inertia = draw(st.floats(0.5, 4.0))
    frac = draw(st.floats(*loading))
    return MotorParams(x, xp, t_open, inertia, frac * 0.5 * (1 / xp - 1 / x))


# -- ZIP ------------------------------------------------------------------------

def test_zip_examples():
    assert zip_power(ZipParams(1.0, 0.0, 0.0), 0.5) == 0.25
    assert zip_power(ZipParams(0.23, 0.31, 0.46), 0.9) == pytest.approx(0.9253, abs=1e-15)


@given(zips())
def test_zip_is_one_at_nominal(z):
    assert zip_power(z, 1.0) == pytest.approx(1.0, abs=1e-12)


@given(zips(), st.floats(0.0, 1.5))
def test_zip_matches_direct_quadratic(z, u):
    assert zip_power(z, u) == pytest.approx(zip_direct(*z.as_tuple(), u), rel=1e-14, abs=1e-15)


@given(st.floats(0.01, 2.0), st.floats(0.01, 2.0))
def test_impedance_part_increases_with_voltage(u1, u2):
    z = ZipParams(1.0, 0.0, 0.0)
    if u1 < u2:
        assert zip_power(z, u1) < zip_power(z, u2)


def test_zip_invariants():
    with pytest.raises(ValueError):
        ZipParams(0.5, 0.5, 0.5)
    with pytest.raises(ValueError):
        ZipParams(-0.1, 0.6, 0.5)
    with pytest.warns(UserWarning):
        z = ZipParams.normalized(1.0, 1.0, 2.0)
    assert z.as_tuple() == pytest.approx((0.25, 0.25, 0.5))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ZipParams.normalized(0.2, 0.3, 0.5)


# -- motor ------------------------------------------------------------------------

def test_motor_invariants():
    with pytest.raises(ValueError):
        MotorParams(0.2, 0.3, 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        MotorParams(2.0, 0.2, 0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        MotorParams(2.0, 0.2, 1.0, 1.0, -0.1)


def test_derivatives_at_zero_state(motor):
    d = motor_derivatives(MotorState(0.0, 0.0, 0.3), motor, 0.0, 0.0)
    assert d.e_d == 0.0 and d.e_q == 0.0
    assert d.slip == motor.torque_mech / motor.inertia


def test_output_examples(motor):
    mp = MotorParams(2.5, 0.2, 1.0, 1.0, 0.5)
    assert motor_output(MotorState(0.0, 0.0, 0.0), mp, 1.0, 0.0) == (0.0, 5.0)
    p, q = motor_output(MotorState(0.7, -0.3, 0.0), mp, 0.7, -0.3)
    assert q == pytest.approx(0.0, abs=1e-15)


@given(motors(), st.floats(-2, 2), st.floats(-2, 2), st.floats(-0.2, 1.0),
       st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))
def test_derivatives_match_oracle(mp, ed, eq, s, ud, uq):
    got = motor_derivatives(MotorState(ed, eq, s), mp, ud, uq)
    want = motor_rhs(mp, ed, eq, s, ud, uq)
    np.testing.assert_allclose([got.e_d, got.e_q, got.slip], want, rtol=1e-12, atol=1e-9)


@given(motors(), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.0, 0.3))
def test_derivative_matches_finite_difference_of_one_step(mp, ed, eq, s):
    """Central difference of the one-step RK4 map recovers f to O(h^2)."""
    st0 = MotorState(ed, eq, s)
    f0 = motor_derivatives(st0, mp, 1.0, 0.0)

    def rk4(h):
        def f(y):
            d = motor_derivatives(MotorState(*y), mp, 1.0, 0.0)
            return np.array([d.e_d, d.e_q, d.slip])
        y = np.array([ed, eq, s])
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)

    errs = []
    for h in (1e-3, 5e-4):
        fd = (rk4(h) - rk4(-h)) / (2 * h)
        errs.append(np.max(np.abs(fd - [f0.e_d, f0.e_q, f0.slip])))
    # second order: halving h cuts the error about fourfold (or it is at rounding level)
    assert errs[1] <= max(errs[0] / 3.0, 1e-7)


@given(motors())
def test_equilibrium_residual(mp):
    st0 = motor_init_steady_state(mp)
    d = motor_derivatives(st0, mp, 1.0, 0.0)
    assert max(abs(d.e_d), abs(d.e_q), abs(d.slip)) < 1e-8
    assert 0.0 <= st0.slip < mp.pullout_slip


@given(motors(), st.floats(0.7, 1.1))
def test_equilibrium_matches_scan_oracle(mp, u):
    if mp.torque_mech >= mp.pullout_torque(u):
        return
    got = motor_init_steady_state(mp, u).slip
    assert got == pytest.approx(scan_equilibrium_slip(mp, u), abs=1e-8)


@given(motors())
def test_steady_power_equals_mechanical_torque(mp):
    st0 = motor_init_steady_state(mp)
    p, _ = motor_output(st0, mp, 1.0, 0.0)
    assert p == pytest.approx(mp.torque_mech, rel=1e-9)
    assert p == pytest.approx(steady_power(mp, st0.slip, 1.0)[0], rel=1e-9)


def test_unloaded_motor_rests_at_zero_slip():
    mp = MotorParams(2.5, 0.2, 1.0, 1.0, 0.0)
    st0 = motor_init_steady_state(mp)
    assert st0.slip == 0.0
    d = motor_derivatives(st0, mp, 1.0, 0.0)
    assert d.e_d == d.e_q == d.slip == 0.0


def test_torque_above_pullout_has_no_equilibrium():
    mp = MotorParams(2.5, 0.2, 1.0, 1.0, 10.0)
    with pytest.raises(NoEquilibrium) as info:
        motor_init_steady_state(mp)
    assert info.value.torque_gap > 0


def test_pullout_slip_maximizes_steady_power(motor):
    s_star = motor.pullout_slip
    peak = steady_power(motor, s_star, 1.0)[0]
    assert peak == pytest.approx(motor.pullout_torque(1.0), rel=1e-12)
    for s in (0.5 * s_star, 2 * s_star):
        assert steady_power(motor, s, 1.0)[0] < peak


# -- composite -------------------------------------------------------------------

def test_composite_at_nominal(model):
    op = operating_point(model)
    p, q = composite_power(model, op.motor_state, 1.0, 0.0, op)
    assert p == pytest.approx(model.nominal_p, abs=1e-12)
    assert q == pytest.approx(model.nominal_q, abs=1e-12)


@given(st.floats(0.0, 1.0), zips(), zips(), motors(), st.floats(0.8, 1.05))
def test_composite_at_initialization_voltage(p, za, zr, mp, u):
    if mp.torque_mech >= mp.pullout_torque(u):
        return
    m = CompositeLoadModel(p, za, zr, mp, 0.9, 0.4)
    op = operating_point(m, u)
    got = composite_power(m, op.motor_state, u, 0.0, op)
    assert got == pytest.approx((0.9, 0.4), abs=1e-6)


def test_zero_proportion_is_pure_zip(model, motor):
    m = CompositeLoadModel(0.0, model.active_static, model.reactive_static, motor, 0.8, 0.3)
    op = operating_point(m)
    for u in (0.2, 0.6, 0.95):
        p, q = composite_power(m, op.motor_state, u, 0.0, op)
        assert p == pytest.approx(0.8 * zip_power(m.active_static, u), rel=1e-15)
        assert q == pytest.approx(0.3 * zip_power(m.reactive_static, u), rel=1e-15)


def test_unloaded_motor_cannot_be_composite():
    m = CompositeLoadModel(0.5, CONSTANT_POWER, CONSTANT_POWER, MotorParams(2.5, 0.2, 1.0, 1.0, 0.0))
    op = operating_point(m)
    with pytest.raises(ValueError):
        composite_power(m, op.motor_state, 1.0, 0.0, op)


def test_model_invariants(model):
    with pytest.raises(ValueError):
        CompositeLoadModel(1.2, model.active_static, model.reactive_static, model.motor)
    with pytest.raises(ValueError):
        CompositeLoadModel(0.5, model.active_static, model.reactive_static, model.motor, nominal_p=0.0)


def test_dict_round_trip_is_exact(model):
    back = CompositeLoadModel.from_dict(model.to_dict())
    assert back == model
    np.testing.assert_array_equal(back.parameter_vector(), model.parameter_vector())


def test_from_dict_renormalizes_off_sum():
    d = CompositeLoadModel(0.5, ZipParams(0.2, 0.3, 0.5), CONSTANT_POWER,
                           MotorParams(2.5, 0.2, 1.0, 1.0, 0.5)).to_dict()
    d["active_static"] = {"z_coeff": 1.0, "i_coeff": 1.0, "p_coeff": 2.0}
    with pytest.warns(UserWarning):
        m = CompositeLoadModel.from_dict(d)
    assert math.isclose(sum(m.active_static.as_tuple()), 1.0, abs_tol=1e-12)
