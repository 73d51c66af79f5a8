"""Composite load model: ZIP static part plus a third-order induction motor.

All voltages, powers and torques are per unit. The motor equations are written
in a synchronous reference frame; the terminal voltage phasor is
``u_d + j*u_q`` and the internal EMF phasor is ``e_d + j*e_q``.

The array kernels prefixed with an underscore accept numpy arrays so that the
simulator can evaluate a whole batch of models in one call; the public
functions wrap them for single dataclass instances.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

OMEGA_60HZ = 2.0 * math.pi * 60.0

# Residual target for steady-state initialization.
EQUILIBRIUM_TOL = 1e-8


class NoEquilibrium(ValueError):
    """The mechanical torque exceeds the pull-out torque at the given voltage."""

    def __init__(self, torque_mech: float, pullout: float, voltage: float):
        self.torque_gap = torque_mech - pullout
        super().__init__(
            f"no motoring equilibrium at U={voltage:.4g} pu: T_m={torque_mech:.6g} "
            f"exceeds pull-out torque {pullout:.6g} by {self.torque_gap:.3g} pu"
        )


@dataclass(frozen=True)
class ZipParams:
    z_coeff: float
    i_coeff: float
    p_coeff: float

    def __post_init__(self):
        coeffs = self.as_tuple()
        if any(not math.isfinite(c) or c < 0.0 for c in coeffs):
            raise ValueError(f"ZIP coefficients must be finite and >= 0, got {coeffs}")
        if abs(sum(coeffs) - 1.0) > 1e-9:
            raise ValueError(f"ZIP coefficients must sum to 1, got sum={sum(coeffs)!r}")

    @classmethod
    def normalized(cls, z: float, i: float, p: float, warn: bool = True) -> "ZipParams":
        """Build from raw coefficients, rescaling so they sum to 1.

        Warns (unless ``warn`` is false) when the raw sum is off by more than 1e-6.
        """
        total = z + i + p
        if total <= 0.0:
            raise ValueError("ZIP coefficients sum to zero; cannot normalize")
        if warn and abs(total - 1.0) > 1e-6:
            warnings.warn(
                f"ZIP coefficients ({z}, {i}, {p}) sum to {total}; renormalizing",
                stacklevel=2,
            )
        z, i = z / total, i / total
        # assign the remainder so the stored sum is 1 to rounding
        return cls(z, i, max(0.0, 1.0 - z - i))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.z_coeff, self.i_coeff, self.p_coeff)


CONSTANT_POWER = ZipParams(0.0, 0.0, 1.0)


@dataclass(frozen=True)
class MotorParams:
    x_open: float
    x_transient: float
    t_open: float
    inertia: float
    torque_mech: float
    omega_sync: float = OMEGA_60HZ

    def __post_init__(self):
        if not (self.x_open > self.x_transient > 0.0):
            raise ValueError(
                f"need x_open > x_transient > 0, got {self.x_open}, {self.x_transient}"
            )
        if self.t_open <= 0.0 or self.inertia <= 0.0 or self.omega_sync <= 0.0:
            raise ValueError("t_open, inertia and omega_sync must be positive")
        if self.torque_mech < 0.0:
            raise ValueError(f"torque_mech must be >= 0, got {self.torque_mech}")

    @property
    def decay_rate(self) -> float:
        """X / (T_d0 X'), the EMF decay rate in 1/s."""
        return self.x_open / (self.t_open * self.x_transient)

    @property
    def drive_gain(self) -> float:
        """(X/X' - 1) / T_d0, the voltage-to-EMF gain in 1/s."""
        return (self.x_open / self.x_transient - 1.0) / self.t_open

    @property
    def pullout_slip(self) -> float:
        return self.decay_rate / self.omega_sync

    def pullout_torque(self, u: float = 1.0) -> float:
        """Maximum steady electrical torque at terminal voltage ``u``."""
        return 0.5 * u * u * (1.0 / self.x_transient - 1.0 / self.x_open)

    def as_vector(self) -> tuple[float, float, float, float, float]:
        return (self.x_open, self.x_transient, self.t_open, self.inertia, self.torque_mech)


@dataclass(frozen=True)
class MotorState:
    e_d: float
    e_q: float
    slip: float


@dataclass(frozen=True)
class CompositeLoadModel:
    dyn_proportion: float
    active_static: ZipParams
    reactive_static: ZipParams
    motor: MotorParams
    nominal_p: float = 1.0
    nominal_q: float = 0.5

    def __post_init__(self):
        if not (0.0 <= self.dyn_proportion <= 1.0):
            raise ValueError(f"dyn_proportion must lie in [0, 1], got {self.dyn_proportion}")
        if not self.nominal_p > 0.0:
            raise ValueError(f"nominal_p must be positive, got {self.nominal_p}")

    def parameter_vector(self) -> np.ndarray:
        """Raw parameters [p, Pas, Prs, Pd] as one flat vector."""
        return np.array(
            [self.dyn_proportion, *self.active_static.as_tuple(),
             *self.reactive_static.as_tuple(), *self.motor.as_vector()]
        )

    def with_nominal(self, nominal_p: float, nominal_q: float) -> "CompositeLoadModel":
        return CompositeLoadModel(
            self.dyn_proportion, self.active_static, self.reactive_static,
            self.motor, nominal_p, nominal_q,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CompositeLoadModel":
        return cls(
            dyn_proportion=float(data["dyn_proportion"]),
            active_static=_zip_from(data["active_static"]),
            reactive_static=_zip_from(data["reactive_static"]),
            motor=MotorParams(**{k: float(v) for k, v in data["motor"].items()}),
            nominal_p=float(data.get("nominal_p", 1.0)),
            nominal_q=float(data.get("nominal_q", 0.5)),
        )


def _zip_from(d: dict) -> ZipParams:
    """Exact when the stored coefficients already sum to 1, renormalized otherwise."""
    coeffs = float(d["z_coeff"]), float(d["i_coeff"]), float(d["p_coeff"])
    if abs(sum(coeffs) - 1.0) <= 1e-9:
        return ZipParams(*coeffs)
    return ZipParams.normalized(*coeffs)


# -- array kernels ---------------------------------------------------------

def _zip_eval(z, i, p, u):
    return (z * u + i) * u + p


def _motor_rhs(e_d, e_q, slip, u_d, u_q, a, b, w0, inertia, torque_mech, x_tr):
    rot = slip * w0
    de_d = -a * e_d + rot * e_q + b * u_d
    de_q = -a * e_q - rot * e_d + b * u_q
    p_elec = (e_d * u_q - e_q * u_d) / x_tr
    ds = (torque_mech - p_elec) / inertia
    return de_d, de_q, ds


def _motor_pq(e_d, e_q, u_d, u_q, x_tr):
    p = (e_d * u_q - e_q * u_d) / x_tr
    q = (u_d * u_d + u_q * u_q - u_d * e_d - u_q * e_q) / x_tr
    return p, q


def _steady_slip_rot(a, b, x_tr, torque_mech, u):
    """Stable root of T_e(w) = T_m in terms of w = s*omega_0.

    T_e(w) = b u^2 w / (X' (a^2 + w^2)), so T_m X' w^2 - b u^2 w + T_m X' a^2 = 0.
    The smaller root is the stable one; it is written in the cancellation-free
    form 2c / (B + sqrt(B^2 - 4AC)).
    """
    big_b = b * u * u
    ac4 = 4.0 * (torque_mech * x_tr) ** 2 * a * a
    disc = big_b * big_b - ac4
    return 2.0 * torque_mech * x_tr * a * a / (big_b + np.sqrt(np.maximum(disc, 0.0))), disc


def _steady_emf(a, b, w, u):
    den = a * a + w * w
    return a * b * u / den, -w * b * u / den


# -- public operations -----------------------------------------------------

def zip_power(zip_params: ZipParams, u):
    """ZIP power shape at voltage magnitude ``u`` (1.0 at u = 1)."""
    return _zip_eval(zip_params.z_coeff, zip_params.i_coeff, zip_params.p_coeff, u)


def motor_derivatives(st: MotorState, mp: MotorParams, u_d: float, u_q: float) -> MotorState:
    de_d, de_q, ds = _motor_rhs(
        st.e_d, st.e_q, st.slip, u_d, u_q, mp.decay_rate, mp.drive_gain,
        mp.omega_sync, mp.inertia, mp.torque_mech, mp.x_transient,
    )
    return MotorState(float(de_d), float(de_q), float(ds))


def motor_output(st: MotorState, mp: MotorParams, u_d: float, u_q: float) -> tuple[float, float]:
    p, q = _motor_pq(st.e_d, st.e_q, u_d, u_q, mp.x_transient)
    return float(p), float(q)


def motor_init_steady_state(mp: MotorParams, u: float = 1.0) -> MotorState:
    """Motoring equilibrium with the terminal voltage on the d-axis.

    Picks the low-slip (stable) root when two equilibria exist and raises
    :class:`NoEquilibrium` when T_m is above the pull-out torque.
    """
    if u <= 0.0:
        raise ValueError(f"initialization voltage must be positive, got {u}")
    a, b = mp.decay_rate, mp.drive_gain
    w, disc = _steady_slip_rot(a, b, mp.x_transient, mp.torque_mech, u)
    if disc < 0.0:
        raise NoEquilibrium(mp.torque_mech, mp.pullout_torque(u), u)
    e_d, e_q = _steady_emf(a, b, w, u)
    return MotorState(float(e_d), float(e_q), float(w / mp.omega_sync))


@dataclass(frozen=True)
class OperatingPoint:
    """Pre-fault normalization constants of a composite model."""

    voltage: float
    motor_state: MotorState
    p_dyn0: float
    q_dyn0: float
    zip_p0: float
    zip_q0: float


def operating_point(model: CompositeLoadModel, u: float = 1.0) -> OperatingPoint:
    st = motor_init_steady_state(model.motor, u)
    p0, q0 = motor_output(st, model.motor, u, 0.0)
    return OperatingPoint(
        voltage=u, motor_state=st, p_dyn0=p0, q_dyn0=q0,
        zip_p0=float(zip_power(model.active_static, u)),
        zip_q0=float(zip_power(model.reactive_static, u)),
    )


def composite_power(
    model: CompositeLoadModel,
    st: MotorState,
    u_d: float,
    u_q: float,
    op: OperatingPoint | None = None,
) -> tuple[float, float]:
    """Total (P, Q) of the composite load.

    Both the motor and the ZIP part are per-unit shapes equal to 1 at the
    pre-fault operating point ``op`` (by default the steady state at U = 1),
    weighted by p and 1 - p of the nominal powers.
    """
    if op is None:
        op = operating_point(model)
    p = model.dyn_proportion
    u = math.hypot(u_d, u_q)
    ps = float(zip_power(model.active_static, u)) / op.zip_p0
    qs = float(zip_power(model.reactive_static, u)) / op.zip_q0
    if p == 0.0:
        return model.nominal_p * ps, model.nominal_q * qs
    if op.p_dyn0 <= 0.0:
        raise ValueError("motor carries no active power at the operating point; "
                         "composite scaling is undefined for an unloaded motor")
    pd, qd = motor_output(st, model.motor, u_d, u_q)
    p_tot = model.nominal_p * (p * pd / op.p_dyn0 + (1.0 - p) * ps)
    q_tot = model.nominal_q * (p * qd / op.q_dyn0 + (1.0 - p) * qs)
    return p_tot, q_tot
