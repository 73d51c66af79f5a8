"""On-disk formats.

JSON for model sets, fault suites and representative sets; CSV with a
header row for everything tabular. Floats are written with ``repr`` (the
shortest string that round-trips), so reading a file back gives bit-identical
values and rewriting it gives identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .fdc import DecisionGraph
from .hierarchy import (
    BusModelSet,
    CompressedRecord,
    SpatialResult,
    StorageReport,
    TemporalResult,
)
from .load_model import CompositeLoadModel, MotorParams, ZipParams, _zip_from
from .pfr import FaultScenario, PfrBundle, PfrCurve

FORMAT_VERSION = 1


class FileFormatError(ValueError):
    """A file exists but its content does not match the expected layout."""

    def __init__(self, path, msg):
        super().__init__(f"{path}: {msg}")
        self.path = Path(path)


def fmt(x) -> str:
    return repr(float(x))


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _dump(obj) -> str:
    return json.dumps(obj, indent=1) + "\n"


def _load_json(path, kind: str) -> dict:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FileFormatError(path, f"invalid JSON ({exc})") from exc
    if not isinstance(data, dict) or data.get("kind") != kind:
        raise FileFormatError(path, f"expected a {kind!r} document")
    return data


def csv_table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _read_csv(path, header: Sequence[str]) -> list[list[str]]:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != list(header):
        raise FileFormatError(path, f"expected header {','.join(header)}")
    return rows[1:]


# -- model sets ---------------------------------------------------------------

def models_json(bus_id: int, models: Sequence[CompositeLoadModel]) -> str:
    return _dump({
        "kind": "models",
        "version": FORMAT_VERSION,
        "bus_id": int(bus_id),
        "models": [m.to_dict() for m in models],
    })


def read_models(path) -> BusModelSet:
    data = _load_json(path, "models")
    try:
        models = [CompositeLoadModel.from_dict(m) for m in data["models"]]
        return BusModelSet(int(data["bus_id"]), models)
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(path, str(exc)) from exc


def labels_csv(entries) -> str:
    """``entries``: iterable of (bus_id, labels array)."""
    return csv_table(
        ["bus", "model_index", "basic_index"],
        ([bus, j, int(lab)] for bus, labels in entries for j, lab in enumerate(labels)),
    )


def read_labels(path) -> dict[int, np.ndarray]:
    out: dict[int, list[int]] = {}
    for bus, j, lab in _read_csv(path, ["bus", "model_index", "basic_index"]):
        out.setdefault(int(bus), []).append(int(lab))
    return {b: np.array(v) for b, v in out.items()}


# -- fault suites ---------------------------------------------------------------

_SCENARIO_FIELDS = ("label", "fault_depth", "t_fault_on", "t_clear",
                    "recovery_time_constant", "pre_fault_voltage")


def scenario_to_dict(sc: FaultScenario) -> dict:
    return {f: getattr(sc, f) for f in _SCENARIO_FIELDS}


def scenario_from_dict(d: dict) -> FaultScenario:
    unknown = set(d) - set(_SCENARIO_FIELDS)
    if unknown:
        raise ValueError(f"unknown scenario keys {sorted(unknown)}")
    return FaultScenario(**d)


def suite_json(suite: Sequence[FaultScenario]) -> str:
    return _dump({"kind": "fault_suite", "version": FORMAT_VERSION,
                  "scenarios": [scenario_to_dict(s) for s in suite]})


def read_suite(path) -> list[FaultScenario]:
    data = _load_json(path, "fault_suite")
    try:
        suite = [scenario_from_dict(s) for s in data["scenarios"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(path, str(exc)) from exc
    if not suite:
        raise FileFormatError(path, "empty fault suite")
    return suite


# -- curves and matrices -----------------------------------------------------------

def curve_csv(curve: PfrCurve) -> str:
    return csv_table(["time", "p", "q"], (
        [fmt(t), fmt(p), fmt(q)]
        for t, p, q in zip(curve.times, curve.p_values, curve.q_values)
    ))


def read_curve(path) -> PfrCurve:
    rows = _read_csv(path, ["time", "p", "q"])
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return PfrCurve(arr[:, 0], arr[:, 1], arr[:, 2])


def write_bundle_curves(directory, model_id: str, bundle: PfrBundle,
                        suite: Sequence[FaultScenario]) -> list[Path]:
    """One ``<model_id>__<scenario>.csv`` per scenario."""
    return [
        write_text(Path(directory) / f"{model_id}__{sc.label}.csv", curve_csv(curve))
        for sc, curve in zip(suite, bundle.curves)
    ]


def distance_csv(d: np.ndarray, ids: Sequence[str]) -> str:
    d = np.asarray(d)
    if d.shape != (len(ids), len(ids)):
        raise ValueError("distance matrix and id list disagree in size")
    return csv_table(["id", *ids], ([i, *map(fmt, row)] for i, row in zip(ids, d)))


def read_distance_csv(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["id"]:
        raise FileFormatError(path, "expected header starting with 'id'")
    ids = rows[0][1:]
    body = rows[1:]
    if len(body) != len(ids) or any(len(r) != len(ids) + 1 for r in body):
        raise FileFormatError(path, "matrix is not square")
    if [r[0] for r in body] != ids:
        raise FileFormatError(path, "row ids do not match the header")
    return ids, np.array([r[1:] for r in body], dtype=float)


DECISION_GRAPH_HEADER = ["index", "rho", "delta", "rho_delta", "nhd"]


def decision_graph_csv(g: DecisionGraph) -> str:
    """The nearest-denser index is left blank for the density root."""
    return csv_table(DECISION_GRAPH_HEADER, (
        [i, fmt(g.rho[i]), fmt(g.delta[i]), fmt(g.gamma[i]), "" if g.nhd[i] < 0 else int(g.nhd[i])]
        for i in range(len(g))
    ))


def read_decision_graph(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rho, delta, nhd) with nhd = -1 for the root."""
    rows = _read_csv(path, DECISION_GRAPH_HEADER)
    rho = np.array([float(r[1]) for r in rows])
    delta = np.array([float(r[2]) for r in rows])
    nhd = np.array([int(r[4]) if r[4] else -1 for r in rows])
    return rho, delta, nhd


# -- temporal results ------------------------------------------------------------

def rlms_json(t: TemporalResult) -> str:
    return _dump({
        "kind": "rlms",
        "version": FORMAT_VERSION,
        "bus_id": int(t.bus_id),
        "source_index": [int(i) for i in t.source_index],
        "membership": [int(k) for k in t.membership],
        "rlms": [m.to_dict() for m in t.rlms],
    })


def read_rlms(path) -> TemporalResult:
    data = _load_json(path, "rlms")
    try:
        rlms = [CompositeLoadModel.from_dict(m) for m in data["rlms"]]
        membership = np.array(data["membership"], dtype=int)
        source = np.array(data["source_index"], dtype=int)
        bus_id = int(data["bus_id"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(path, str(exc)) from exc
    if len(source) != len(rlms) or (len(membership) and not
                                     (0 <= membership.min() and membership.max() < len(rlms))):
        raise FileFormatError(path, "membership or source_index inconsistent with the RLM list")
    return TemporalResult(bus_id, rlms, membership, source)


def membership_csv(temporal: Sequence[TemporalResult]) -> str:
    return csv_table(["bus", "model_index", "rlm_index", "rlm_source_index"], (
        [t.bus_id, j, int(k), int(t.source_index[k])]
        for t in temporal for j, k in enumerate(t.membership)
    ))


# -- spatial results ---------------------------------------------------------------

def zips_json(zips: Sequence[ZipParams], component: str) -> str:
    return _dump({"kind": "static_set", "version": FORMAT_VERSION, "component": component,
                  "items": [dict(zip(("z_coeff", "i_coeff", "p_coeff"), z.as_tuple())) for z in zips]})


def motors_json(motors: Sequence[MotorParams]) -> str:
    return _dump({"kind": "motor_set", "version": FORMAT_VERSION, "component": "dynamic",
                  "items": [asdict(m) for m in motors]})


def read_zips(path) -> list[ZipParams]:
    data = _load_json(path, "static_set")
    try:
        return [_zip_from(d) for d in data["items"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(path, str(exc)) from exc


def read_motors(path) -> list[MotorParams]:
    data = _load_json(path, "motor_set")
    try:
        return [MotorParams(**{k: float(v) for k, v in d.items()}) for d in data["items"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(path, str(exc)) from exc


COMPRESSED_HEADER = ["bus", "k", "rp", "ia", "ir", "id"]


def compressed_csv(records: Sequence[CompressedRecord]) -> str:
    return csv_table(COMPRESSED_HEADER,
                     ([r.bus_id, r.k, fmt(r.rp), r.ia, r.ir, r.id] for r in records))


def read_compressed(path) -> list[CompressedRecord]:
    rows = _read_csv(path, COMPRESSED_HEADER)
    try:
        return [CompressedRecord(int(b), int(k), float(rp), int(a), int(r), int(d))
                for b, k, rp, a, r, d in rows]
    except ValueError as exc:
        raise FileFormatError(path, str(exc)) from exc


SPATIAL_FILES = {"ra": "ra.json", "rr": "rr.json", "rd": "rd.json", "compressed": "compressed.csv"}


def write_spatial(directory, sp: SpatialResult) -> list[Path]:
    d = Path(directory)
    paths = [
        write_text(d / SPATIAL_FILES["ra"], zips_json(sp.ra, "active")),
        write_text(d / SPATIAL_FILES["rr"], zips_json(sp.rr, "reactive")),
        write_text(d / SPATIAL_FILES["rd"], motors_json(sp.rd)),
        write_text(d / SPATIAL_FILES["compressed"], compressed_csv(sp.compressed)),
    ]
    for name, g in sp.graphs.items():
        paths.append(write_text(d / f"decision_graph_{name}.csv", decision_graph_csv(g)))
    return paths


def read_spatial(directory) -> SpatialResult:
    d = Path(directory)
    return SpatialResult(
        ra=read_zips(d / SPATIAL_FILES["ra"]),
        rr=read_zips(d / SPATIAL_FILES["rr"]),
        rd=read_motors(d / SPATIAL_FILES["rd"]),
        compressed=read_compressed(d / SPATIAL_FILES["compressed"]),
    )


# -- storage ---------------------------------------------------------------------

STORAGE_HEADER = ["scenario", "motor_params", "static_params", "dyn_proportions",
                  "indexes", "total_bytes"]


def storage_rows(reports: dict[str, StorageReport]) -> list[list]:
    """Ori and Tem once (taken from the first report), then one Spa row per key."""
    first = next(iter(reports.values()))
    rows = [["Ori", *_row(first.ori)], ["Tem", *_row(first.tem)]]
    rows += [[name, *_row(rep.spa)] for name, rep in reports.items()]
    return rows


def _row(r):
    return [r.motor_params, r.static_params, r.dyn_proportions, r.indexes, r.total_bytes]


def storage_csv(reports: dict[str, StorageReport]) -> str:
    return csv_table(STORAGE_HEADER, storage_rows(reports))


def storage_text(reports: dict[str, StorageReport]) -> str:
    rows = storage_rows(reports)
    first = next(iter(reports.values()))
    lines = [f"{'':<8}{'IMPs':>8}{'SPs':>8}{'DPs':>8}{'indexes':>9}{'bytes':>10}"]
    lines += [f"{r[0]:<8}{r[1]:>8}{r[2]:>8}{r[3]:>8}{r[4]:>9}{r[5]:>10}" for r in rows]
    lines.append(f"Tem vs Ori reduction: {100 * first.reduction_tem_vs_ori:.2f}%")
    for name, rep in reports.items():
        lines.append(f"{name} vs Tem reduction: {100 * rep.reduction_spa_vs_tem:.2f}%")
    return "\n".join(lines) + "\n"
