"""Two-stage compression of load models.

Temporal stage (per bus): cluster the bus's identified models on their PFR
bundles; the seeds (centers and outliers) become the bus's representative
load models (RLMs).

Spatial stage (control center): pool the active ZIP, reactive ZIP and motor
parts of every bus RLM and cluster each pool separately. Each RLM is then
stored as a compressed record [rp, ia, ir, id] pointing into the three
representative sets; the dynamic proportion rp is kept verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import fdc
from .distance import build_distance_matrix, parameter_distance_matrix
from .load_model import CompositeLoadModel, MotorParams, NoEquilibrium, ZipParams
from .pfr import (
    Diverged,
    FaultScenario,
    SimConfig,
    dynamic_only_bundles,
    simulate_bundles,
    static_only_bundles,
)

BASES = ("pfr", "parameter")
COMPONENTS = ("active", "reactive", "dynamic")


class StageError(RuntimeError):
    """A simulation or clustering failure, tagged with the bus or component."""

    def __init__(self, msg, *, bus_id=None, component=None, cause=None):
        super().__init__(msg)
        self.bus_id = bus_id
        self.component = component
        self.cause = cause


@dataclass
class BusModelSet:
    bus_id: int
    models: list[CompositeLoadModel]

    def __post_init__(self):
        if not self.models:
            raise ValueError(f"bus {self.bus_id}: no models")
        p0, q0 = self.nominal
        if any(m.nominal_p != p0 or m.nominal_q != q0 for m in self.models):
            raise ValueError(f"bus {self.bus_id}: models disagree on nominal powers")

    @property
    def nominal(self) -> tuple[float, float]:
        return self.models[0].nominal_p, self.models[0].nominal_q


@dataclass
class TemporalResult:
    bus_id: int
    rlms: list[CompositeLoadModel]
    membership: np.ndarray
    source_index: np.ndarray  # original model index of each RLM
    graph: fdc.DecisionGraph | None = None
    clusters: fdc.ClusterResult | None = None
    distances: np.ndarray | None = None

    @property
    def r_count(self) -> int:
        return len(self.rlms)


@dataclass(frozen=True)
class CompressedRecord:
    bus_id: int
    k: int
    rp: float
    ia: int
    ir: int
    id: int


@dataclass
class SpatialResult:
    ra: list[ZipParams]
    rr: list[ZipParams]
    rd: list[MotorParams]
    compressed: list[CompressedRecord]
    graphs: dict = field(default_factory=dict)
    clusters: dict = field(default_factory=dict)

    def record(self, bus_id: int, k: int) -> CompressedRecord:
        for rec in self.compressed:
            if rec.bus_id == bus_id and rec.k == k:
                return rec
        raise KeyError((bus_id, k))

    def lookup(self) -> dict:
        return {(r.bus_id, r.k): r for r in self.compressed}


# -- distance matrices ------------------------------------------------------------

def _matrix(bundles_fn, vectors, basis, what):
    if basis == "pfr":
        return build_distance_matrix(bundles_fn())
    if basis == "parameter":
        return parameter_distance_matrix(vectors)
    raise ValueError(f"unknown distance basis {basis!r}; choose from {BASES}")


def _zip_vectors(zips):
    return np.array([z.as_tuple() for z in zips], dtype=float)


def _motor_vectors(motors):
    return np.array([m.as_vector() for m in motors], dtype=float)


# -- temporal ----------------------------------------------------------------------

def temporal_cluster(
    bus: BusModelSet,
    nc: int,
    suite: Sequence[FaultScenario],
    cfg: SimConfig = SimConfig(),
    neighbor_fraction: float = fdc.DEFAULT_NEIGHBOR_FRACTION,
    basis: str = "pfr",
) -> TemporalResult:
    """Pick the RLMs of one bus."""
    if not (1 <= nc <= len(bus.models)):
        raise ValueError(f"bus {bus.bus_id}: nc={nc} outside [1, {len(bus.models)}]")
    try:
        d = _matrix(
            lambda: simulate_bundles(bus.models, suite, cfg),
            np.array([m.parameter_vector() for m in bus.models]),
            basis, "composite",
        )
    except (Diverged, NoEquilibrium) as exc:
        raise StageError(f"bus {bus.bus_id}: {exc}", bus_id=bus.bus_id, cause=exc) from exc
    graph, res = fdc.cluster(d, nc, neighbor_fraction)
    seeds = res.seeds
    return TemporalResult(
        bus_id=bus.bus_id,
        rlms=[bus.models[i] for i in seeds],
        membership=res.assignment.copy(),
        source_index=seeds,
        graph=graph,
        clusters=res,
        distances=d,
    )


# -- spatial -----------------------------------------------------------------------

def _cluster_component(name, items, bundles_fn, vectors, nc, neighbor_fraction, basis):
    try:
        d = _matrix(bundles_fn, vectors, basis, name)
    except (Diverged, NoEquilibrium) as exc:
        raise StageError(f"{name} component: {exc}", component=name, cause=exc) from exc
    graph, res = fdc.cluster(d, min(nc, len(items)), neighbor_fraction)
    reps = [items[i] for i in res.seeds]
    # clusters are numbered from 1 in compressed records
    return reps, res.assignment + 1, graph, res


def spatial_cluster(
    temporal: Sequence[TemporalResult],
    nc: int,
    suite: Sequence[FaultScenario],
    cfg: SimConfig = SimConfig(),
    neighbor_fraction: float = fdc.DEFAULT_NEIGHBOR_FRACTION,
    basis: str = "pfr",
) -> SpatialResult:
    """Cluster the pooled RLM components of all buses with the same nc."""
    if nc < 1:
        raise ValueError("nc must be >= 1")
    keys = [(t.bus_id, k) for t in temporal for k in range(t.r_count)]
    rlms = [m for t in temporal for m in t.rlms]
    if not rlms:
        raise ValueError("no RLMs to cluster")
    rba = [m.active_static for m in rlms]
    rbr = [m.reactive_static for m in rlms]
    rbd = [m.motor for m in rlms]

    ra, ia, g_a, c_a = _cluster_component(
        "active", rba, lambda: static_only_bundles(rba, "active", suite, cfg),
        _zip_vectors(rba), nc, neighbor_fraction, basis)
    rr, ir, g_r, c_r = _cluster_component(
        "reactive", rbr, lambda: static_only_bundles(rbr, "reactive", suite, cfg),
        _zip_vectors(rbr), nc, neighbor_fraction, basis)
    rd, idx_d, g_d, c_d = _cluster_component(
        "dynamic", rbd, lambda: dynamic_only_bundles(rbd, suite, cfg),
        _motor_vectors(rbd), nc, neighbor_fraction, basis)

    records = [
        CompressedRecord(bus, k, m.dyn_proportion, int(a), int(r), int(dd))
        for (bus, k), m, a, r, dd in zip(keys, rlms, ia, ir, idx_d)
    ]
    return SpatialResult(
        ra=ra, rr=rr, rd=rd, compressed=records,
        graphs={"active": g_a, "reactive": g_r, "dynamic": g_d},
        clusters={"active": c_a, "reactive": c_r, "dynamic": c_d},
    )


class IndexOutOfRange(IndexError):
    pass


def reconstruct_model(
    record: CompressedRecord,
    sp: SpatialResult,
    nominal_p: float,
    nominal_q: float,
) -> CompositeLoadModel:
    """Expand a compressed record back into a full composite model."""
    for name, idx, pool in (("ia", record.ia, sp.ra), ("ir", record.ir, sp.rr), ("id", record.id, sp.rd)):
        if not (1 <= idx <= len(pool)):
            raise IndexOutOfRange(f"{name}={idx} outside [1, {len(pool)}]")
    return CompositeLoadModel(
        record.rp, sp.ra[record.ia - 1], sp.rr[record.ir - 1], sp.rd[record.id - 1],
        nominal_p, nominal_q,
    )


# -- storage accounting ------------------------------------------------------------

@dataclass(frozen=True)
class StorageRow:
    motor_params: int
    static_params: int
    dyn_proportions: int
    indexes: int
    total_bytes: int


@dataclass(frozen=True)
class StorageReport:
    ori: StorageRow
    tem: StorageRow
    spa: StorageRow

    def rows(self) -> dict[str, StorageRow]:
        return {"Ori": self.ori, "Tem": self.tem, "Spa": self.spa}

    @property
    def reduction_tem_vs_ori(self) -> float:
        return _reduction(self.ori.total_bytes, self.tem.total_bytes)

    @property
    def reduction_spa_vs_tem(self) -> float:
        return _reduction(self.tem.total_bytes, self.spa.total_bytes)


def _total(per_bus, n_buses: int) -> int:
    return int(per_bus) * n_buses if np.ndim(per_bus) == 0 else int(sum(per_bus))


def _reduction(before: int, after: int) -> float:
    return 0.0 if before == 0 else 1.0 - after / before


def storage_report(
    n_buses: int,
    models_per_bus: int,
    rlms_per_bus,
    nc,
    motor_param_count: int = 4,
    static_param_count: int = 6,
    float_bytes: int = 4,
    index_bytes: int = 1,
) -> StorageReport:
    """Bytes needed to store the original, temporal and spatial model sets.

    ``models_per_bus`` and ``rlms_per_bus`` are each either a count shared by
    all buses or one count per bus. ``nc`` is either the common cluster count or a tuple (na, nr, nd)
    of realized representative-set sizes.
    """
    n_ori = _total(models_per_bus, n_buses)
    total_rlms = _total(rlms_per_bus, n_buses)
    na, nr, nd = (nc, nc, nc) if np.ndim(nc) == 0 else tuple(nc)
    if total_rlms == 0:
        na = nr = nd = 0
    half_static = static_param_count / 2

    ori = StorageRow(motor_param_count * n_ori, static_param_count * n_ori, n_ori, 0,
                     (motor_param_count + static_param_count + 1) * n_ori * float_bytes)
    tem = StorageRow(motor_param_count * total_rlms, static_param_count * total_rlms, total_rlms, 0,
                     (motor_param_count + static_param_count + 1) * total_rlms * float_bytes)
    spa_motor = motor_param_count * nd
    spa_static = int(round(half_static * (na + nr)))
    spa = StorageRow(spa_motor, spa_static, total_rlms, 3 * total_rlms,
                     (spa_motor + spa_static + total_rlms) * float_bytes + 3 * total_rlms * index_bytes)
    return StorageReport(ori, tem, spa)
