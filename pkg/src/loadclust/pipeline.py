"""Manifest-driven pipeline: gen -> temporal -> spatial -> validate -> report.

Each stage reads what the previous one wrote under ``output_dir`` and writes
its own files there, so a full run needs nothing but the manifest. The file
layout is fixed by :class:`Layout`; the manifest format is documented in the
README.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import partial
from pathlib import Path
from typing import Sequence

from . import files
from .datagen import GenSpec, generate_dataset
from .fdc import DEFAULT_NEIGHBOR_FRACTION
from .hierarchy import (
    BASES,
    BusModelSet,
    SpatialResult,
    StorageReport,
    TemporalResult,
    spatial_cluster,
    storage_report,
    temporal_cluster,
)
from .pfr import FaultScenario, SimConfig, standard_fault_suite
from .validation import (
    FittingReport,
    NetworkConfig,
    check_coverage,
    draw_cases,
    run_hierarchy,
    run_validation,
    validation_fault,
)


class ConfigError(ValueError):
    """The manifest or a command-line setting is invalid."""


@dataclass(frozen=True)
class TemporalSettings:
    nc: int = 10
    neighbor_fraction: float = DEFAULT_NEIGHBOR_FRACTION
    basis: str = "pfr"
    export_distances: bool = False


@dataclass(frozen=True)
class SpatialSettings:
    nc: tuple[int, ...] = (3, 5, 7)
    neighbor_fraction: float = DEFAULT_NEIGHBOR_FRACTION
    basis: str = "pfr"


@dataclass(frozen=True)
class ValidationSettings:
    n_cases: int = 100
    fault: FaultScenario = field(default_factory=validation_fault)
    sim: SimConfig = SimConfig(excitation_mode="thevenin")
    network: NetworkConfig = NetworkConfig()
    compare_bases: bool = True


@dataclass(frozen=True)
class StorageSettings:
    motor_param_count: int = 4
    static_param_count: int = 6
    float_bytes: int = 4
    index_bytes: int = 1


@dataclass(frozen=True)
class PipelineConfig:
    output_dir: Path
    seed: int = 0
    workers: int = 1
    gen: GenSpec = GenSpec()
    model_files: tuple[Path, ...] | None = None
    suite_file: Path | None = None
    sim: SimConfig = SimConfig()
    temporal: TemporalSettings = TemporalSettings()
    spatial: SpatialSettings = SpatialSettings()
    validation: ValidationSettings = ValidationSettings()
    storage: StorageSettings = StorageSettings()

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.temporal.nc < 1 or any(n < 1 for n in self.spatial.nc):
            raise ConfigError("nc values must be >= 1")
        if not self.spatial.nc:
            raise ConfigError("spatial.nc needs at least one value")
        for basis in (self.temporal.basis, self.spatial.basis):
            if basis not in BASES:
                raise ConfigError(f"unknown basis {basis!r}; choose from {BASES}")
        if self.validation.n_cases < 1:
            raise ConfigError("validation.n_cases must be >= 1")

    @property
    def layout(self) -> "Layout":
        return Layout(self.output_dir)

    def suite(self) -> list[FaultScenario]:
        if self.suite_file is None:
            return standard_fault_suite()
        return files.read_suite(self.suite_file)


# -- manifest parsing -----------------------------------------------------------------

_TOP_KEYS = {"seed", "output_dir", "workers", "gen", "models", "suite", "sim",
             "temporal", "spatial", "validation", "storage"}


def _section(cls, data, name, **extra):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"{name}: unknown keys {sorted(unknown)}")
    try:
        return cls(**{**data, **extra})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from exc


def _complex(value, name) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ConfigError(f"{name}: expected [resistance, reactance]")


def parse_manifest(data: dict, base_dir: Path) -> PipelineConfig:
    """Build a config from a decoded manifest; relative paths resolve against ``base_dir``."""
    if not isinstance(data, dict):
        raise ConfigError("manifest must be a JSON object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown manifest keys {sorted(unknown)}")
    base_dir = Path(base_dir)

    def path(p):
        p = Path(p)
        return p if p.is_absolute() else base_dir / p

    seed = data.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    if "output_dir" not in data:
        raise ConfigError("manifest needs output_dir")

    models = data.get("models")
    if models is not None:
        if not isinstance(models, list) or not models:
            raise ConfigError("models: expected a non-empty list of model files")
        models = tuple(path(p) for p in models)
        missing = [str(p) for p in models if not p.exists()]
        if missing:
            raise ConfigError(f"models: missing files {missing}")
    suite = data.get("suite")
    if suite is not None:
        suite = path(suite)
        if not suite.exists():
            raise ConfigError(f"suite: missing file {suite}")

    spatial = dict(data.get("spatial") or {})
    if "nc" in spatial:
        nc = spatial["nc"]
        spatial["nc"] = tuple(nc) if isinstance(nc, list) else (nc,)

    val = dict(data.get("validation") or {})
    extra = {}
    if "fault" in val:
        try:
            extra["fault"] = files.scenario_from_dict(val.pop("fault"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"validation.fault: {exc}") from exc
    if "sim" in val:
        extra["sim"] = _section(SimConfig, {"excitation_mode": "thevenin", **val.pop("sim")},
                                "validation.sim")
    net = {}
    for key in ("z_source", "z_feeder"):
        if key in val:
            net[key] = _complex(val.pop(key), f"validation.{key}")
    if net:
        extra["network"] = NetworkConfig(**net)

    try:
        return PipelineConfig(
            output_dir=path(data["output_dir"]),
            seed=seed,
            workers=data.get("workers", 1),
            gen=_section(GenSpec, data.get("gen"), "gen", seed=seed),
            model_files=models,
            suite_file=suite,
            sim=_section(SimConfig, data.get("sim"), "sim"),
            temporal=_section(TemporalSettings, data.get("temporal"), "temporal"),
            spatial=_section(SpatialSettings, spatial, "spatial"),
            validation=_section(ValidationSettings, val, "validation", **extra),
            storage=_section(StorageSettings, data.get("storage"), "storage"),
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_manifest(path) -> PipelineConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_manifest(data, path.parent)


def with_overrides(cfg: PipelineConfig, **kw) -> PipelineConfig:
    """Copy of ``cfg`` with the non-None keyword overrides applied."""
    kw = {k: v for k, v in kw.items() if v is not None}
    try:
        return replace(cfg, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# -- output layout ----------------------------------------------------------------

@dataclass(frozen=True)
class Layout:
    root: Path

    def model_file(self, bus_id: int) -> Path:
        return self.root / "models" / f"bus_{bus_id:03d}.json"

    @property
    def labels(self) -> Path:
        return self.root / "truth" / "labels.csv"

    def basics_file(self, bus_id: int) -> Path:
        return self.root / "truth" / f"basics_bus_{bus_id:03d}.json"

    def rlm_file(self, bus_id: int) -> Path:
        return self.root / "temporal" / f"rlms_bus_{bus_id:03d}.json"

    def temporal_graph(self, bus_id: int) -> Path:
        return self.root / "temporal" / f"decision_graph_bus_{bus_id:03d}.csv"

    def temporal_distance(self, bus_id: int) -> Path:
        return self.root / "temporal" / f"distance_bus_{bus_id:03d}.csv"

    def spatial_dir(self, nc: int) -> Path:
        return self.root / "spatial" / f"nc{nc}"

    @property
    def validation_dir(self) -> Path:
        return self.root / "validation"

    @property
    def report_dir(self) -> Path:
        return self.root / "report"


# -- stages ----------------------------------------------------------------------

def run_gen(cfg: PipelineConfig) -> list[Path]:
    """Write one model file per bus plus the ground-truth labels and basics."""
    lay = cfg.layout
    data = generate_dataset(cfg.gen)
    written = []
    for ds in data:
        written.append(files.write_text(lay.model_file(ds.bus_id), files.models_json(ds.bus_id, ds.models)))
        files.write_text(lay.basics_file(ds.bus_id), files.models_json(ds.bus_id, ds.basics))
    files.write_text(lay.labels, files.labels_csv((ds.bus_id, ds.labels) for ds in data))
    files.write_text(lay.root / "models" / "summary.csv", files.csv_table(
        ["bus", "n_models", "n_clamped", "nominal_p", "nominal_q"],
        ([ds.bus_id, len(ds.models), ds.n_clamped, files.fmt(ds.nominal[0]), files.fmt(ds.nominal[1])]
         for ds in data),
    ))
    return written


def model_files(cfg: PipelineConfig) -> list[Path]:
    if cfg.model_files is not None:
        return list(cfg.model_files)
    found = sorted((cfg.output_dir / "models").glob("bus_*.json"))
    if not found:
        raise FileNotFoundError(
            f"no model files under {cfg.output_dir / 'models'}; run 'gen' or list them under 'models'")
    return found


def load_buses(cfg: PipelineConfig) -> list[BusModelSet]:
    buses = [files.read_models(p) for p in model_files(cfg)]
    ids = [b.bus_id for b in buses]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate bus ids in model files: {ids}")
    return sorted(buses, key=lambda b: b.bus_id)


def _map(fn, items, workers: int):
    """Order-preserving map, in-process for one worker."""
    if workers == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def run_temporal(cfg: PipelineConfig, buses: Sequence[BusModelSet] | None = None) -> list[TemporalResult]:
    buses = list(buses) if buses is not None else load_buses(cfg)
    t = cfg.temporal
    for b in buses:
        if t.nc > len(b.models):
            raise ConfigError(f"bus {b.bus_id}: temporal nc={t.nc} exceeds its {len(b.models)} models")
    fn = partial(temporal_cluster, nc=t.nc, suite=cfg.suite(), cfg=cfg.sim,
                 neighbor_fraction=t.neighbor_fraction, basis=t.basis)
    results = _map(fn, buses, cfg.workers)
    lay = cfg.layout
    for r in results:
        files.write_text(lay.rlm_file(r.bus_id), files.rlms_json(r))
        files.write_text(lay.temporal_graph(r.bus_id), files.decision_graph_csv(r.graph))
        if t.export_distances:
            ids = [f"m{j}" for j in range(len(r.membership))]
            files.write_text(lay.temporal_distance(r.bus_id), files.distance_csv(r.distances, ids))
    files.write_text(lay.root / "temporal" / "membership.csv", files.membership_csv(results))
    files.write_text(lay.root / "temporal" / "summary.csv", files.csv_table(
        ["bus", "n_models", "r_count", "n_centers", "n_outliers"],
        ([r.bus_id, len(r.membership), r.r_count, len(r.clusters.centers), len(r.clusters.outliers)]
         for r in results),
    ))
    return results


def load_temporal(cfg: PipelineConfig, buses: Sequence[BusModelSet]) -> list[TemporalResult]:
    out = []
    for b in buses:
        path = cfg.layout.rlm_file(b.bus_id)
        if not path.exists():
            raise FileNotFoundError(f"{path} missing; run 'cluster-temporal' first")
        t = files.read_rlms(path)
        if len(t.membership) != len(b.models):
            raise files.FileFormatError(path, "membership length differs from the bus model count")
        out.append(t)
    return out


def run_spatial(cfg: PipelineConfig, temporal: Sequence[TemporalResult] | None = None,
                nc_list: Sequence[int] | None = None) -> dict[int, SpatialResult]:
    if temporal is None:
        temporal = load_temporal(cfg, load_buses(cfg))
    s = cfg.spatial
    out = {}
    for nc in (nc_list or s.nc):
        sp = spatial_cluster(temporal, nc, cfg.suite(), cfg.sim, s.neighbor_fraction, s.basis)
        files.write_spatial(cfg.layout.spatial_dir(nc), sp)
        out[nc] = sp
    return out


def load_spatial(cfg: PipelineConfig, nc_list: Sequence[int] | None = None) -> dict[int, SpatialResult]:
    out = {}
    for nc in (nc_list or cfg.spatial.nc):
        d = cfg.layout.spatial_dir(nc)
        if not d.exists():
            raise FileNotFoundError(f"{d} missing; run 'cluster-spatial' first")
        out[nc] = files.read_spatial(d)
    return out


def load_checked_spatial(cfg, temporal, nc_list=None) -> dict[int, SpatialResult]:
    out = load_spatial(cfg, nc_list)
    for nc, sp in out.items():
        check_coverage(temporal, sp, nc)
    return out


def _other_basis(basis: str) -> str:
    return "parameter" if basis == "pfr" else "pfr"


def run_validate(cfg: PipelineConfig, buses=None, temporal=None, spatial=None):
    """Fitting report for the stored RLMs; optionally also for the other distance basis.

    Returns ``(report, comparison)`` where ``comparison`` maps basis name to
    report (empty when basis comparison is switched off).
    """
    buses = buses if buses is not None else load_buses(cfg)
    temporal = temporal if temporal is not None else load_temporal(cfg, buses)
    spatial = spatial if spatial is not None else load_checked_spatial(cfg, temporal)
    v = cfg.validation
    cases = draw_cases(buses, v.n_cases, cfg.seed)

    def validate(tem, spa):
        return run_validation(buses, tem, spa, fault=v.fault, cfg=v.sim, seed=cfg.seed,
                              network=v.network, cases=cases)

    report = validate(temporal, spatial)
    comparison = {}
    if v.compare_bases:
        own = cfg.temporal.basis
        other = _other_basis(own)
        run = run_hierarchy(buses, cfg.temporal.nc, sorted(spatial), cfg.suite(), cfg.sim,
                            cfg.temporal.neighbor_fraction, other)
        comparison = {own: report, other: validate(run.temporal, run.spatial)}

    d = cfg.layout.validation_dir
    files.write_text(d / "fitting_rows.csv", report.rows_csv())
    files.write_text(d / "fitting_table.csv", report.table_csv())
    files.write_text(d / "summary.txt", report.text_summary() + "\n")
    if comparison:
        files.write_text(d / "basis_comparison.csv", comparison_csv(comparison))
    return report, comparison


def comparison_csv(comparison: dict[str, FittingReport]) -> str:
    rows = []
    for basis, rep in comparison.items():
        for name, stats in rep.summary().items():
            rows.append([basis, name, *(f"{stats[k]:.6f}" for k in ("mean_fp", "mean_fq", "mean_f"))])
    return files.csv_table(["basis", "scenario", "mean_fp", "mean_fq", "mean_f"], rows)


def storage_reports(
    models_per_bus, rlms_per_bus, nc_sizes: dict, settings: StorageSettings, n_buses: int | None = None,
) -> dict[str, StorageReport]:
    """One report per spatial entry; ``nc_sizes`` maps nc to an int or realized (na, nr, nd)."""
    if n_buses is None:
        n_buses = len(models_per_bus)
    return {
        f"Spa{nc}": storage_report(n_buses, models_per_bus, rlms_per_bus, size,
                                   settings.motor_param_count, settings.static_param_count,
                                   settings.float_bytes, settings.index_bytes)
        for nc, size in nc_sizes.items()
    }


def run_report(cfg: PipelineConfig) -> dict[str, StorageReport]:
    """Storage of the realized run: actual model counts, r_i and RA/RR/RD sizes."""
    buses = load_buses(cfg)
    temporal = load_temporal(cfg, buses)
    spatial = load_checked_spatial(cfg, temporal)
    reports = storage_reports(
        [len(b.models) for b in buses], [t.r_count for t in temporal],
        {nc: (len(sp.ra), len(sp.rr), len(sp.rd)) for nc, sp in sorted(spatial.items())},
        cfg.storage,
    )
    write_storage(cfg.layout.report_dir, reports)
    return reports


def write_storage(directory, reports: dict[str, StorageReport]) -> None:
    files.write_text(Path(directory) / "storage.csv", files.storage_csv(reports))
    files.write_text(Path(directory) / "storage.txt", files.storage_text(reports))


def run_all(cfg: PipelineConfig, generate: bool = True) -> dict:
    """Every stage in order, handing results over in memory as well as on disk."""
    if generate and cfg.model_files is None:
        run_gen(cfg)
    buses = load_buses(cfg)
    temporal = run_temporal(cfg, buses)
    spatial = run_spatial(cfg, temporal)
    report, comparison = run_validate(cfg, buses, temporal, spatial)
    storage = run_report(cfg)
    return {"buses": buses, "temporal": temporal, "spatial": spatial,
            "validation": report, "comparison": comparison, "storage": storage}
