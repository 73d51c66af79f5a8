"""Synthetic "identified" load-model datasets.

Each bus gets a handful of basic models; the recorded models are Gaussian
perturbations of randomly chosen basics. Ground-truth basic labels are
returned for test harnesses only and never reach the clustering code.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .load_model import CompositeLoadModel, MotorParams, ZipParams

# Basic-model ranges (uniform draws). T_m is a fraction of the pull-out torque at U = 1.
DYN_PROPORTION_RANGE = (0.3, 0.8)
X_OPEN_RANGE = (2.0, 3.5)
X_TRANSIENT_RANGE = (0.15, 0.30)
T_OPEN_RANGE = (0.8, 1.5)
INERTIA_RANGE = (2.0, 3.5)
LOADING_RANGE = (0.2, 0.35)
ZIP_DIRICHLET_ALPHA = 1.0
NOMINAL_P_RANGE = (0.5, 1.0)
Q_OVER_P_RANGE = (0.3, 0.5)

MAX_RETRIES = 100


class InfeasibleAfterRetries(RuntimeError):
    pass


@dataclass(frozen=True)
class GenSpec:
    n_buses: int = 10
    models_per_bus: int = 500
    basics_per_bus: int = 10
    noise_rel_std: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.basics_per_bus <= self.models_per_bus):
            raise ValueError("need 1 <= basics_per_bus <= models_per_bus")
        if self.n_buses < 1:
            raise ValueError("n_buses must be >= 1")
        if not (0.0 <= self.noise_rel_std < 0.5):
            raise ValueError("noise_rel_std must lie in [0, 0.5)")


def rng_for(seed: int, *names) -> np.random.Generator:
    """Independent generator for a named sub-stream of ``seed``."""
    key = "/".join(str(n) for n in names).encode()
    words = np.frombuffer(hashlib.sha256(key).digest()[:16], dtype=np.uint32)
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, words)]))


def _draw_basic(rng: np.random.Generator, nominal_p: float, nominal_q: float) -> CompositeLoadModel:
    p = rng.uniform(*DYN_PROPORTION_RANGE)
    za = rng.dirichlet([ZIP_DIRICHLET_ALPHA] * 3)
    zr = rng.dirichlet([ZIP_DIRICHLET_ALPHA] * 3)
    x = rng.uniform(*X_OPEN_RANGE)
    xp = rng.uniform(*X_TRANSIENT_RANGE)
    t_open = rng.uniform(*T_OPEN_RANGE)
    inertia = rng.uniform(*INERTIA_RANGE)
    pullout = 0.5 * (1.0 / xp - 1.0 / x)
    torque = rng.uniform(*LOADING_RANGE) * pullout
    return CompositeLoadModel(
        dyn_proportion=float(p),
        active_static=ZipParams.normalized(*map(float, za)),
        reactive_static=ZipParams.normalized(*map(float, zr)),
        motor=MotorParams(float(x), float(xp), float(t_open), float(inertia), float(torque)),
        nominal_p=nominal_p,
        nominal_q=nominal_q,
    )


def bus_nominal(bus_id: int, seed: int = 0) -> tuple[float, float]:
    rng = rng_for(seed, "nominal", bus_id)
    p0 = float(rng.uniform(*NOMINAL_P_RANGE))
    return p0, float(p0 * rng.uniform(*Q_OVER_P_RANGE))


def default_basic_models(bus_id: int, count: int, seed: int = 0, screen=None) -> list[CompositeLoadModel]:
    """Draw ``count`` basic models for a bus.

    ``screen`` is an optional predicate; candidates failing it are redrawn
    (up to MAX_RETRIES times per model).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = rng_for(seed, "basic", bus_id)
    p0, q0 = bus_nominal(bus_id, seed)
    out = []
    for _ in range(count):
        for _ in range(MAX_RETRIES):
            cand = _draw_basic(rng, p0, q0)
            if screen is None or screen(cand):
                out.append(cand)
                break
        else:
            raise InfeasibleAfterRetries(f"bus {bus_id}: no basic model passed screening")
    return out


class GeneratedModels(NamedTuple):
    models: list[CompositeLoadModel]
    labels: np.ndarray
    n_clamped: int


def _perturb(model: CompositeLoadModel, rng: np.random.Generator, rel_std: float):
    """Perturb every parameter by N(0, rel_std*|value|); returns (model or None, clamp count)."""
    if rel_std == 0.0:
        return model, 0
    vec = model.parameter_vector()
    noisy = vec + rng.normal(0.0, 1.0, vec.shape) * rel_std * np.abs(vec)
    clamped = 0

    def clamp(v, lo, hi):
        nonlocal clamped
        if v < lo or v > hi:
            clamped += 1
            return min(max(v, lo), hi)
        return v

    p = clamp(noisy[0], 0.0, 1.0)
    za = [clamp(v, 0.0, np.inf) for v in noisy[1:4]]
    zr = [clamp(v, 0.0, np.inf) for v in noisy[4:7]]
    x, xp, t_open, inertia, torque = noisy[7:12]
    x = clamp(x, 1e-3, np.inf)
    xp = clamp(xp, 1e-3, 0.99 * x)
    t_open = clamp(t_open, 1e-3, np.inf)
    inertia = clamp(inertia, 1e-3, np.inf)
    torque = clamp(torque, 0.0, np.inf)
    motor = MotorParams(float(x), float(xp), float(t_open), float(inertia), float(torque),
                        model.motor.omega_sync)
    if torque >= motor.pullout_torque(1.0):
        return None, clamped
    return CompositeLoadModel(
        float(p),
        ZipParams.normalized(*map(float, za), warn=False),
        ZipParams.normalized(*map(float, zr), warn=False),
        motor, model.nominal_p, model.nominal_q,
    ), clamped


def generate_models(
    basics: Sequence[CompositeLoadModel],
    total: int,
    noise_rel_std: float,
    seed: int | np.random.Generator,
) -> GeneratedModels:
    """Draw ``total`` noisy copies of uniformly chosen basics, with their labels."""
    if len(basics) < 1 or total < len(basics):
        raise ValueError("need at least one basic and total >= len(basics)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    labels = rng.integers(0, len(basics), size=total)
    models, n_clamped = [], 0
    for k, lab in enumerate(labels):
        for _ in range(MAX_RETRIES):
            m, c = _perturb(basics[lab], rng, noise_rel_std)
            n_clamped += c
            if m is not None:
                models.append(m)
                break
        else:
            raise InfeasibleAfterRetries(
                f"model {k}: perturbed motor of basic {lab} failed steady-state screening "
                f"{MAX_RETRIES} times"
            )
    return GeneratedModels(models, labels, n_clamped)


@dataclass
class BusDataset:
    bus_id: int
    basics: list[CompositeLoadModel]
    models: list[CompositeLoadModel]
    labels: np.ndarray
    n_clamped: int = 0
    nominal: tuple[float, float] = field(default=(1.0, 0.5))


def generate_dataset(spec: GenSpec, screen=None) -> list[BusDataset]:
    """Basics plus noisy models for every bus, buses numbered 1..n_buses."""
    out = []
    for bus in range(1, spec.n_buses + 1):
        basics = default_basic_models(bus, spec.basics_per_bus, spec.seed, screen)
        gen = generate_models(basics, spec.models_per_bus, spec.noise_rel_std,
                              rng_for(spec.seed, "models", bus))
        out.append(BusDataset(bus, basics, gen.models, gen.labels, gen.n_clamped,
                              bus_nominal(bus, spec.seed)))
    return out
