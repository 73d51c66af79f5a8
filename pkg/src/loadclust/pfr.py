"""Post-fault response (PFR) generation.

A load model is connected to a test bus and driven through a voltage dip.
Two excitation modes are available:

``playback``
    the bus voltage magnitude follows a prescribed dip/recovery template,
    identical for every model;
``thevenin``
    the template drives a source behind an impedance and the bus voltage is
    solved each stage from the load's own current draw.

The integrator is classical RK4 at a fixed step. Steps are split at fault
events that fall between grid points, and every (sub)step uses the voltage
segment it lies in, so the fault onset never sits inside a stage.

Everything below is vectorized over a batch of models: a batch of one is the
single-model path, so batched and single runs share the exact same arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .load_model import (
    CONSTANT_POWER,
    CompositeLoadModel,
    MotorParams,
    NoEquilibrium,
    ZipParams,
    _motor_pq,
    _motor_rhs,
    _steady_emf,
    _steady_slip_rot,
    _zip_eval,
)

# divergence bounds on the motor state
EMF_LIMIT = 10.0
SLIP_BOUNDS = (-0.5, 1.5)

NETWORK_TOL = 1e-10
NETWORK_MAXITER = 30
_EVENT_EPS = 1e-9


class Diverged(RuntimeError):
    """A simulated state left its sanity bounds (or the bus voltage had no solution)."""


@dataclass(frozen=True)
class FaultScenario:
    label: str
    fault_depth: float
    t_fault_on: float = 0.5
    t_clear: float = 0.6
    recovery_time_constant: float = 0.05
    pre_fault_voltage: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.fault_depth < self.pre_fault_voltage):
            raise ValueError(
                f"{self.label}: need 0 <= fault_depth < pre_fault_voltage, "
                f"got {self.fault_depth} / {self.pre_fault_voltage}"
            )
        if not (0.0 <= self.t_fault_on < self.t_clear):
            raise ValueError(f"{self.label}: need 0 <= t_fault_on < t_clear")
        if self.recovery_time_constant <= 0.0:
            raise ValueError(f"{self.label}: recovery_time_constant must be positive")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    horizon: float = 5.0
    base_mva: float = 100.0
    excitation_mode: str = "playback"
    # source impedance of the single-bus thevenin equivalent, pu on base_mva
    thevenin_r: float = 0.0
    thevenin_x: float = 0.02

    def __post_init__(self):
        if self.dt <= 0.0 or self.horizon <= 0.0:
            raise ValueError("dt and horizon must be positive")
        if self.excitation_mode not in ("playback", "thevenin"):
            raise ValueError(f"unknown excitation_mode {self.excitation_mode!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def check_suite(self, suite: Sequence[FaultScenario]) -> None:
        for sc in suite:
            if self.horizon < sc.t_clear + 1.0 - 1e-12:
                raise ValueError(
                    f"horizon {self.horizon} s is shorter than t_clear + 1 s for {sc.label}"
                )


@dataclass(frozen=True, eq=False)
class PfrCurve:
    times: np.ndarray
    p_values: np.ndarray
    q_values: np.ndarray

    def __post_init__(self):
        if not (len(self.times) == len(self.p_values) == len(self.q_values)):
            raise ValueError("times, p_values and q_values must have equal lengths")


@dataclass(frozen=True, eq=False)
class PfrBundle:
    curves: tuple[PfrCurve, ...]

    def __post_init__(self):
        if len(self.curves) < 1:
            raise ValueError("a bundle needs at least one curve")
        object.__setattr__(self, "curves", tuple(self.curves))

    @property
    def h(self) -> int:
        return len(self.curves)

    @property
    def times(self) -> np.ndarray:
        return self.curves[0].times

    def features(self) -> np.ndarray:
        """All series flattened as [p_1, q_1, p_2, q_2, ...]."""
        return np.concatenate([np.concatenate([c.p_values, c.q_values]) for c in self.curves])


# -- voltage template ----------------------------------------------------------

def _segment_of(sc: FaultScenario, t: float, eps: float = 0.0) -> int:
    if t < sc.t_fault_on - eps:
        return 0
    if t < sc.t_clear - eps:
        return 1
    return 2


def _segment_value(sc: FaultScenario, seg: int, t: float) -> float:
    if seg == 0:
        return sc.pre_fault_voltage
    if seg == 1:
        return sc.fault_depth
    drop = sc.pre_fault_voltage - sc.fault_depth
    return sc.pre_fault_voltage - drop * math.exp(-(t - sc.t_clear) / sc.recovery_time_constant)


def voltage_at(sc: FaultScenario, t: float) -> float:
    """Template voltage magnitude at time ``t``."""
    if t < 0.0:
        raise ValueError("t must be >= 0")
    return _segment_value(sc, _segment_of(sc, t), t)


def standard_fault_suite() -> list[FaultScenario]:
    """Three faults of increasing depth: 0.2, 0.45 and 0.7 pu retained voltage."""
    return [
        FaultScenario("deep", 0.2),
        FaultScenario("medium", 0.45),
        FaultScenario("shallow", 0.7),
    ]


# -- batched model parameters --------------------------------------------------

# stands in for the motor of a static-only load; its output is weighted by 0
_IDLE_MOTOR = MotorParams(2.5, 0.2, 1.0, 1.0, 0.5)


class _LoadArrays:
    """Parameters of a batch of composite models as numpy arrays.

    ``shape`` is the batch shape, (B,) for independent models or (B, n) for
    networks of n buses.
    """

    def __init__(self, models: Sequence[CompositeLoadModel], shape: tuple[int, ...]):
        def arr(values):
            return np.asarray(values, dtype=float).reshape(shape)

        self.shape = shape
        self.dyn = arr([m.dyn_proportion for m in models])
        za = np.array([m.active_static.as_tuple() for m in models], dtype=float)
        zr = np.array([m.reactive_static.as_tuple() for m in models], dtype=float)
        self.za = [za[:, k].reshape(shape) for k in range(3)]
        self.zr = [zr[:, k].reshape(shape) for k in range(3)]
        mot = [m.motor for m in models]
        x = arr([mp.x_open for mp in mot])
        self.x_tr = arr([mp.x_transient for mp in mot])
        t_open = arr([mp.t_open for mp in mot])
        self.inertia = arr([mp.inertia for mp in mot])
        self.torque = arr([mp.torque_mech for mp in mot])
        self.w0 = arr([mp.omega_sync for mp in mot])
        self.a = x / (t_open * self.x_tr)
        self.b = (x / self.x_tr - 1.0) / t_open
        self.p_nom = arr([m.nominal_p for m in models])
        self.q_nom = arr([m.nominal_q for m in models])

    def initialize(self, v_init, theta=None):
        """Steady state at bus voltage ``v_init`` (angle ``theta``); sets normalizers."""
        w, disc = _steady_slip_rot(self.a, self.b, self.x_tr, self.torque, v_init)
        bad = (disc < 0.0) & (self.dyn > 0.0)
        if np.any(bad):
            k = int(np.flatnonzero(bad.ravel())[0])
            pull = np.broadcast_to(self.b * v_init**2 / (2.0 * self.a * self.x_tr), self.shape)
            raise NoEquilibrium(float(self.torque.ravel()[k]), float(pull.ravel()[k]),
                                float(np.broadcast_to(v_init, self.shape).ravel()[k]))
        e_d, e_q = _steady_emf(self.a, self.b, w, v_init)
        slip = w / self.w0
        if theta is not None:
            c, s = np.cos(theta), np.sin(theta)
            e_d, e_q = e_d * c - e_q * s, e_d * s + e_q * c
            u_d, u_q = v_init * c, v_init * s
        else:
            u_d, u_q = v_init * np.ones(self.shape), np.zeros(self.shape)
        p0, q0 = _motor_pq(e_d, e_q, u_d, u_q, self.x_tr)
        motor_used = self.dyn > 0.0
        if np.any(motor_used & (p0 <= 0.0)):
            raise ValueError("motor carries no active power at the operating point; "
                             "composite scaling is undefined for an unloaded motor")
        self.p_dyn0 = np.where(motor_used, p0, 1.0)
        self.q_dyn0 = np.where(motor_used, q0, 1.0)
        self.zip_p0 = _zip_eval(*self.za, v_init)
        self.zip_q0 = _zip_eval(*self.zr, v_init)
        return (np.broadcast_to(e_d, self.shape).copy(),
                np.broadcast_to(e_q, self.shape).copy(),
                np.broadcast_to(slip, self.shape).copy())

    def rhs(self, y, u_d, u_q):
        return _motor_rhs(y[0], y[1], y[2], u_d, u_q, self.a, self.b, self.w0,
                          self.inertia, self.torque, self.x_tr)

    def power(self, y, u_d, u_q):
        """Composite (P, Q) in pu of the system base."""
        u = np.sqrt(u_d * u_d + u_q * u_q)
        pd, qd = _motor_pq(y[0], y[1], u_d, u_q, self.x_tr)
        ps = _zip_eval(*self.za, u) / self.zip_p0
        qs = _zip_eval(*self.zr, u) / self.zip_q0
        p = self.dyn
        motor_on = p > 0.0
        pd = np.where(motor_on, pd / self.p_dyn0, 0.0)
        qd = np.where(motor_on, qd / self.q_dyn0, 0.0)
        return (self.p_nom * (p * pd + (1.0 - p) * ps),
                self.q_nom * (p * qd + (1.0 - p) * qs))

    def current(self, y, v):
        """Complex load current drawn at complex bus voltage ``v``."""
        p, q = self.power(y, v.real, v.imag)
        return np.conj((p + 1j * q) / v)

    def out_of_bounds(self, y):
        emf = np.sqrt(y[0] ** 2 + y[1] ** 2)
        bad = ~(np.isfinite(y[0]) & np.isfinite(y[1]) & np.isfinite(y[2]))
        bad |= emf > EMF_LIMIT
        bad |= (y[2] < SLIP_BOUNDS[0]) | (y[2] > SLIP_BOUNDS[1])
        return bad & (self.dyn > 0.0)


# -- algebraic network solve ------------------------------------------------------

def solve_network(current_fn, e_src, zmat, v_guess, tol=NETWORK_TOL, maxiter=NETWORK_MAXITER):
    """Solve ``V + Z I(V) = E`` for complex bus voltages by Newton iteration.

    ``V`` has shape (B, n) and ``zmat`` is the (n, n) driving-point impedance
    matrix seen by the loads. ``current_fn`` must be local: bus k's current
    depends only on bus k's voltage, which keeps the Jacobian of I block
    diagonal and lets two batched evaluations build it by finite differences.

    Returns (V, ok) where ``ok`` flags batch rows that reached ``tol``.
    """
    v = np.array(v_guess, dtype=complex)
    nb, n = v.shape
    ok = np.zeros(nb, dtype=bool)
    eye = np.eye(n)
    h = 1e-7
    for _ in range(maxiter):
        cur = current_fn(v)
        resid = v + cur @ zmat.T - e_src
        err = np.max(np.abs(resid), axis=1)
        ok = np.isfinite(err) & (err < tol)
        if ok.all():
            return v, ok
        g_re = (current_fn(v + h) - cur) / h
        g_im = (current_fn(v + 1j * h) - cur) / h
        c_re = eye + zmat[None, :, :] * g_re[:, None, :]
        c_im = 1j * eye + zmat[None, :, :] * g_im[:, None, :]
        jac = np.concatenate(
            [np.concatenate([c_re.real, c_im.real], axis=2),
             np.concatenate([c_re.imag, c_im.imag], axis=2)], axis=1)
        rhs = -np.concatenate([resid.real, resid.imag], axis=1)
        # rows that already converged or blew up are held fixed
        active = ~ok & np.isfinite(err)
        if not active.any():
            break
        step = np.zeros_like(rhs)
        try:
            step[active] = np.linalg.solve(jac[active], rhs[active][..., None])[..., 0]
        except np.linalg.LinAlgError:
            break
        v = v + step[:, :n] + 1j * step[:, n:]
    cur = current_fn(v)
    err = np.max(np.abs(v + cur @ zmat.T - e_src), axis=1)
    return v, np.isfinite(err) & (err < tol)


# -- excitations ------------------------------------------------------------------

class _Playback:
    def __init__(self, sc: FaultScenario, loads: _LoadArrays):
        self.sc = sc
        self.loads = loads
        self.ones = np.ones(loads.shape)

    def initial(self):
        return self.loads.initialize(self.sc.pre_fault_voltage)

    def voltage(self, y, t, seg):
        v = _segment_value(self.sc, seg, t)
        return v * self.ones, 0.0 * self.ones

    def failed(self):
        return np.zeros(self.loads.shape, dtype=bool)


class _Thevenin:
    """Loads behind a shared impedance matrix fed by the template source."""

    def __init__(self, sc: FaultScenario, loads: _LoadArrays, zmat: np.ndarray):
        self.sc = sc
        self.loads = loads
        self.zmat = np.asarray(zmat, dtype=complex)
        self.v = None
        self.bad = np.zeros(loads.shape[0], dtype=bool)

    def initial(self):
        lo = self.loads
        s0 = lo.p_nom + 1j * lo.q_nom
        e0 = self.sc.pre_fault_voltage
        guess = np.full(lo.shape, e0, dtype=complex)
        v, ok = solve_network(lambda vv: np.conj(s0 / vv), e0, self.zmat, guess)
        if not ok.all():
            raise Diverged("pre-fault power flow did not converge")
        self.v = v
        return lo.initialize(np.abs(v), np.angle(v))

    def voltage(self, y, t, seg):
        e = _segment_value(self.sc, seg, t)
        v, ok = solve_network(lambda vv: self.loads.current(y, vv), e, self.zmat, self.v)
        self.bad |= ~ok
        # failed rows keep their last good voltage so the batch stays finite
        self.v = np.where(ok[:, None], v, self.v)
        return self.v.real, self.v.imag

    def failed(self):
        return np.broadcast_to(self.bad[:, None], self.loads.shape)


# -- integrator -------------------------------------------------------------------

def _rk4(loads, exc, y, t, h, seg):
    def f(yy, tt):
        u_d, u_q = exc.voltage(yy, tt, seg)
        return loads.rhs(yy, u_d, u_q)

    k1 = f(y, t)
    k2 = f(tuple(a + 0.5 * h * b for a, b in zip(y, k1)), t + 0.5 * h)
    k3 = f(tuple(a + 0.5 * h * b for a, b in zip(y, k2)), t + 0.5 * h)
    k4 = f(tuple(a + h * b for a, b in zip(y, k3)), t + h)
    return tuple(a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                 for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))


def _run(loads: _LoadArrays, exc, sc: FaultScenario, cfg: SimConfig):
    """Integrate a batch. Returns times, P and Q with a trailing time axis, and a failure mask."""
    times = cfg.times()
    n = len(times)
    p_out = np.empty(loads.shape + (n,))
    q_out = np.empty(loads.shape + (n,))
    bad = np.zeros(loads.shape, dtype=bool)
    y = exc.initial()

    def record(k, yy):
        t = times[k]
        u_d, u_q = exc.voltage(yy, t, _segment_of(sc, t, _EVENT_EPS))
        p_out[..., k], q_out[..., k] = loads.power(yy, u_d, u_q)

    record(0, y)
    events = (sc.t_fault_on, sc.t_clear)
    for k in range(n - 1):
        t0, t1 = times[k], times[k + 1]
        cuts = [t0] + [e for e in events if t0 + _EVENT_EPS < e < t1 - _EVENT_EPS] + [t1]
        y_new = y
        for a, b in zip(cuts[:-1], cuts[1:]):
            seg = _segment_of(sc, 0.5 * (a + b))
            y_new = _rk4(loads, exc, y_new, a, b - a, seg)
        newly = loads.out_of_bounds(y_new) & ~bad
        bad |= newly
        # frozen rows stop evolving so the rest of the batch stays finite
        y = tuple(np.where(bad, old, new) for old, new in zip(y, y_new))
        record(k + 1, y)
    bad |= exc.failed()
    return times, p_out, q_out, bad


def _loads_for(models, shape=None):
    models = list(models)
    return _LoadArrays(models, shape or (len(models),))


def simulate_batch(models: Sequence[CompositeLoadModel], sc: FaultScenario, cfg: SimConfig):
    """Simulate independent models under one scenario.

    Returns ``(times, P, Q, failed)`` with P, Q of shape (len(models), T).
    Failed rows hold frozen values and must not be used.
    """
    loads = _loads_for(models)
    if cfg.excitation_mode == "playback":
        exc = _Playback(sc, loads)
    else:
        z = np.array([[complex(cfg.thevenin_r, cfg.thevenin_x)]])
        # each model sits alone behind its own source: a batch of 1-bus networks
        loads = _LoadArrays(list(models), (len(models), 1))
        exc = _Thevenin(sc, loads, z)
    times, p, q, bad = _run(loads, exc, sc, cfg)
    if cfg.excitation_mode == "thevenin":
        p, q, bad = p[:, 0], q[:, 0], bad[:, 0]
    return times, p, q, bad


def simulate_network(
    models: Sequence[Sequence[CompositeLoadModel]],
    sc: FaultScenario,
    cfg: SimConfig,
    zmat: np.ndarray,
):
    """Simulate B independent networks of n load buses sharing impedance ``zmat``.

    ``models[b][k]`` is the load at bus k of network b. Returns
    ``(times, P, Q, failed)`` with P, Q of shape (B, n, T) and ``failed`` of shape (B,).
    """
    nb = len(models)
    nbus = len(models[0])
    flat = [m for row in models for m in row]
    loads = _LoadArrays(flat, (nb, nbus))
    exc = _Thevenin(sc, loads, zmat)
    times, p, q, bad = _run(loads, exc, sc, cfg)
    return times, p, q, bad.any(axis=1)


def simulate_pfr(model: CompositeLoadModel, sc: FaultScenario, cfg: SimConfig = SimConfig()) -> PfrCurve:
    times, p, q, bad = simulate_batch([model], sc, cfg)
    if bad[0]:
        raise Diverged(f"scenario {sc.label}: simulation left the sanity bounds")
    return PfrCurve(times, p[0], q[0])


def simulate_bundles(
    models: Sequence[CompositeLoadModel],
    suite: Sequence[FaultScenario],
    cfg: SimConfig = SimConfig(),
) -> list[PfrBundle]:
    """One bundle per model; raises on the first model/scenario that fails."""
    models = list(models)
    cfg.check_suite(suite)
    per_sc = []
    for sc in suite:
        try:
            times, p, q, bad = simulate_batch(models, sc, cfg)
        except (NoEquilibrium, Diverged) as exc:
            exc.scenario = sc.label
            raise
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            err = Diverged(f"scenario {sc.label}: model {k} left the sanity bounds")
            err.scenario, err.model_index = sc.label, k
            raise err
        per_sc.append((times, p, q))
    return [
        PfrBundle(tuple(PfrCurve(t, p[i], q[i]) for t, p, q in per_sc))
        for i in range(len(models))
    ]


def simulate_bundle(
    model: CompositeLoadModel,
    suite: Sequence[FaultScenario],
    cfg: SimConfig = SimConfig(),
) -> PfrBundle:
    return simulate_bundles([model], suite, cfg)[0]


def static_only_bundle(
    zip_params: ZipParams,
    which: str,
    suite: Sequence[FaultScenario],
    cfg: SimConfig = SimConfig(),
    nominal_p: float = 1.0,
    nominal_q: float = 0.5,
) -> PfrBundle:
    return static_only_bundles([zip_params], which, suite, cfg, nominal_p, nominal_q)[0]


def static_only_bundles(zips, which, suite, cfg=SimConfig(), nominal_p=1.0, nominal_q=0.5):
    """PFRs of pure static loads.

    ``which="active"`` applies the ZIP to P and holds Q at constant power;
    ``which="reactive"`` does the converse.
    """
    if which == "active":
        models = [CompositeLoadModel(0.0, z, CONSTANT_POWER, _IDLE_MOTOR, nominal_p, nominal_q)
                  for z in zips]
    elif which == "reactive":
        models = [CompositeLoadModel(0.0, CONSTANT_POWER, z, _IDLE_MOTOR, nominal_p, nominal_q)
                  for z in zips]
    else:
        raise ValueError(f"which must be 'active' or 'reactive', got {which!r}")
    return simulate_bundles(models, suite, cfg)


def dynamic_only_bundle(mp: MotorParams, suite, cfg=SimConfig(), nominal_p=1.0, nominal_q=0.5):
    return dynamic_only_bundles([mp], suite, cfg, nominal_p, nominal_q)[0]


def dynamic_only_bundles(motors, suite, cfg=SimConfig(), nominal_p=1.0, nominal_q=0.5):
    models = [CompositeLoadModel(1.0, CONSTANT_POWER, CONSTANT_POWER, mp, nominal_p, nominal_q)
              for mp in motors]
    return simulate_bundles(models, suite, cfg)
