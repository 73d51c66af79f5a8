"""How well do RLMs stand in for the original models?

A validation case draws one original model per bus. All buses sit on a small
shared network (a source behind an impedance feeding one feeder per bus) and
a fault is applied at the source. The case is simulated with the original
models and again with every bus replaced at once by its temporal RLM or its
spatially reconstructed model; the per-bus P and Q responses are scored
against the original with the fitting degree.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .datagen import rng_for
from .hierarchy import (
    BusModelSet,
    SpatialResult,
    TemporalResult,
    reconstruct_model,
    spatial_cluster,
    temporal_cluster,
)
from .pfr import FaultScenario, SimConfig, simulate_network


class ConstantReference(ValueError):
    """The reference series has zero variance, so the fitting degree is undefined."""


def fitting_degree(y_ref, y_test) -> float:
    """1 - sum((ref - test)^2) / sum((ref - mean(ref))^2)."""
    y_ref = np.asarray(y_ref, dtype=float)
    y_test = np.asarray(y_test, dtype=float)
    if y_ref.shape != y_test.shape or y_ref.ndim != 1 or len(y_ref) < 2:
        raise ValueError("need two 1-D series of equal length >= 2")
    den = np.sum((y_ref - y_ref.mean()) ** 2)
    if den == 0.0:
        raise ConstantReference("reference series is constant")
    return float(1.0 - np.sum((y_ref - y_test) ** 2) / den)


def validation_fault() -> FaultScenario:
    """Fault used for validation; deliberately not one of the clustering faults."""
    return FaultScenario("validation", 0.35, t_fault_on=0.5, t_clear=0.62,
                         recovery_time_constant=0.05)


@dataclass(frozen=True)
class NetworkConfig:
    """Star network: source impedance shared by all buses plus one feeder per bus (pu)."""

    z_source: complex = 0.01j
    z_feeder: complex = 0.03j

    def zmat(self, n_buses: int) -> np.ndarray:
        return np.full((n_buses, n_buses), self.z_source) + np.eye(n_buses) * self.z_feeder


@dataclass(frozen=True)
class ValidationCase:
    case_id: int
    draws: tuple[int, ...]  # drawn model index per bus, in bus order
    seed: int


def draw_cases(buses: Sequence[BusModelSet], n_cases: int, seed: int) -> list[ValidationCase]:
    rng = rng_for(seed, "validation", "cases")
    sizes = [len(b.models) for b in buses]
    return [
        ValidationCase(c, tuple(int(rng.integers(0, n)) for n in sizes), seed)
        for c in range(n_cases)
    ]


@dataclass(frozen=True)
class FittingRow:
    case: int
    bus_id: int
    scenario: str
    fp: float
    fq: float

    @property
    def f(self) -> float:
        return 0.5 * (self.fp + self.fq)


TABLE_COLUMNS = ("mean_fp", "mean_fq", "mean_f", "pct_f_gt_0.9", "pct_f_gt_0.95")


@dataclass
class FittingReport:
    rows: list[FittingRow]
    scenarios: list[str]
    excluded_cases: list[int] = field(default_factory=list)

    def for_scenario(self, name: str) -> list[FittingRow]:
        return [r for r in self.rows if r.scenario == name]

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for name in self.scenarios:
            rows = self.for_scenario(name)
            if not rows:
                continue
            f = np.array([r.f for r in rows])
            out[name] = {
                "mean_fp": float(np.mean([r.fp for r in rows])),
                "mean_fq": float(np.mean([r.fq for r in rows])),
                "mean_f": float(np.mean(f)),
                "pct_f_gt_0.9": float(100.0 * np.mean(f > 0.9)),
                "pct_f_gt_0.95": float(100.0 * np.mean(f > 0.95)),
            }
        return out

    def mean_f(self, name: str) -> float:
        return self.summary()[name]["mean_f"]

    def table_csv(self) -> str:
        """Table of aggregates: one row per statistic, one column per scenario."""
        summ = self.summary()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["statistic", *summ])
        for col in TABLE_COLUMNS:
            w.writerow([col, *(f"{summ[s][col]:.6f}" for s in summ)])
        return buf.getvalue()

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "bus", "scenario", "fp", "fq", "f"])
        for r in self.rows:
            w.writerow([r.case, r.bus_id, r.scenario, f"{r.fp:.10f}", f"{r.fq:.10f}", f"{r.f:.10f}"])
        return buf.getvalue()

    def text_summary(self) -> str:
        summ = self.summary()
        names = list(summ)
        lines = ["statistic      " + "".join(f"{n:>10}" for n in names)]
        for col in TABLE_COLUMNS:
            vals = "".join(f"{summ[n][col]:>10.4f}" for n in names)
            lines.append(f"{col:<15}{vals}")
        if self.excluded_cases:
            lines.append(f"excluded cases: {len(self.excluded_cases)}")
        return "\n".join(lines)


def _score(case_ids, bus_ids, name, p_ref, q_ref, p_test, q_test, ok):
    rows = []
    for c, case in enumerate(case_ids):
        if not ok[c]:
            continue
        for k, bus in enumerate(bus_ids):
            rows.append(FittingRow(case, bus, name,
                                   fitting_degree(p_ref[c, k], p_test[c, k]),
                                   fitting_degree(q_ref[c, k], q_test[c, k])))
    return rows


class StaleSpatialResult(ValueError):
    """Compressed records do not cover the current temporal RLMs."""


def check_coverage(temporal: Sequence[TemporalResult], sp: SpatialResult, nc) -> None:
    want = {(t.bus_id, k): m.dyn_proportion for t in temporal for k, m in enumerate(t.rlms)}
    have = {(r.bus_id, r.k): r.rp for r in sp.compressed}
    if want != have:
        raise StaleSpatialResult(
            f"spatial result nc={nc} does not match the temporal RLMs; rerun spatial clustering")


def run_validation(
    buses: Sequence[BusModelSet],
    temporal: Sequence[TemporalResult],
    spatial_by_nc: Mapping[int, SpatialResult],
    n_cases: int = 100,
    fault: FaultScenario | None = None,
    cfg: SimConfig = SimConfig(excitation_mode="thevenin"),
    seed: int = 0,
    network: NetworkConfig = NetworkConfig(),
    cases: Sequence[ValidationCase] | None = None,
) -> FittingReport:
    """Score Tem and Spa<nc> replacements against the original models."""
    fault = fault or validation_fault()
    cases = list(cases) if cases is not None else draw_cases(buses, n_cases, seed)
    by_bus = {t.bus_id: t for t in temporal}
    bus_ids = [b.bus_id for b in buses]
    zmat = network.zmat(len(buses))

    def grid(pick):
        return [[pick(b, j) for b, j in zip(buses, case.draws)] for case in cases]

    def tem_model(b, j):
        t = by_bus[b.bus_id]
        return t.rlms[t.membership[j]]

    variants = {"Tem": grid(tem_model)}
    for nc in sorted(spatial_by_nc):
        check_coverage(temporal, spatial_by_nc[nc], nc)
        lookup = spatial_by_nc[nc].lookup()

        def spa_model(b, j, lookup=lookup):
            rec = lookup[(b.bus_id, int(by_bus[b.bus_id].membership[j]))]
            return reconstruct_model(rec, spatial_by_nc[nc], *b.nominal)

        variants[f"Spa{nc}"] = grid(spa_model)

    _, p_ori, q_ori, bad_ori = simulate_network(grid(lambda b, j: b.models[j]), fault, cfg, zmat)
    sims = {name: simulate_network(models, fault, cfg, zmat) for name, models in variants.items()}
    ok = ~bad_ori
    for _, _, _, bad in sims.values():
        ok &= ~bad
    case_ids = [c.case_id for c in cases]
    rows = []
    for name, (_, p, q, _) in sims.items():
        rows.extend(_score(case_ids, bus_ids, name, p_ori, q_ori, p, q, ok))
    excluded = [cid for cid, good in zip(case_ids, ok) if not good]
    return FittingReport(rows, list(sims), excluded)


@dataclass
class HierarchyRun:
    temporal: list[TemporalResult]
    spatial: dict[int, SpatialResult]


def run_hierarchy(
    buses: Sequence[BusModelSet],
    nc_temporal: int,
    nc_list: Sequence[int],
    suite: Sequence[FaultScenario],
    cfg: SimConfig = SimConfig(),
    neighbor_fraction: float = 0.015,
    basis: str = "pfr",
) -> HierarchyRun:
    temporal = [temporal_cluster(b, nc_temporal, suite, cfg, neighbor_fraction, basis) for b in buses]
    spatial = {nc: spatial_cluster(temporal, nc, suite, cfg, neighbor_fraction, basis) for nc in nc_list}
    return HierarchyRun(temporal, spatial)


def compare_clustering_bases(
    buses: Sequence[BusModelSet],
    nc_list: Sequence[int],
    suite: Sequence[FaultScenario],
    cfg: SimConfig = SimConfig(),
    nc_temporal: int = 10,
    n_cases: int = 100,
    fault: FaultScenario | None = None,
    val_cfg: SimConfig = SimConfig(excitation_mode="thevenin"),
    seed: int = 0,
    bases: Sequence[str] = ("pfr", "parameter"),
    neighbor_fraction: float = 0.015,
) -> dict[str, FittingReport]:
    """Run the whole hierarchy once per distance basis and validate each on the same cases."""
    cases = draw_cases(buses, n_cases, seed)
    out = {}
    for basis in bases:
        run = run_hierarchy(buses, nc_temporal, nc_list, suite, cfg, neighbor_fraction, basis)
        out[basis] = run_validation(buses, run.temporal, run.spatial, fault=fault, cfg=val_cfg,
                                    cases=cases)
    return out
