"""Command-line front end.

Every stage command takes the pipeline manifest (``-m``) and reads/writes
under its ``output_dir``. Exit codes: 2 for configuration errors, 3 for
simulation or clustering failures, 4 for file I/O problems.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from . import files
from .datagen import GenSpec, InfeasibleAfterRetries
from .hierarchy import StageError
from .load_model import NoEquilibrium
from .pfr import Diverged, SimConfig, simulate_bundles, standard_fault_suite
from .pipeline import (
    ConfigError,
    PipelineConfig,
    StorageSettings,
    TemporalSettings,
    load_manifest,
    run_all,
    run_gen,
    run_report,
    run_spatial,
    run_temporal,
    run_validate,
    storage_reports,
    with_overrides,
    write_storage,
)
from .validation import StaleSpatialResult

EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_IO = 4


def _fail(code: int, msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def guarded(fn):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (StageError, Diverged, NoEquilibrium, InfeasibleAfterRetries) as exc:
            _fail(EXIT_SIMULATION, str(exc))
        except (files.FileFormatError, StaleSpatialResult, OSError) as exc:
            _fail(EXIT_IO, str(exc))
        except ValueError as exc:
            _fail(EXIT_CONFIG, str(exc))

    return wrapper


def _load(manifest) -> PipelineConfig:
    return load_manifest(manifest)


manifest_option = click.option(
    "-m", "--manifest", type=click.Path(dir_okay=False, path_type=Path), required=True,
    help="Pipeline manifest (JSON).",
)


@click.group()
def main():
    """Cluster load models on their post-fault responses."""


@main.command()
@click.option("-m", "--manifest", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Take settings from a manifest; flags below override it.")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Output directory (required without a manifest).")
@click.option("--n-buses", type=int, default=None)
@click.option("--models-per-bus", type=int, default=None)
@click.option("--basics", "basics_per_bus", type=int, default=None, help="Basic models per bus.")
@click.option("--noise", "noise_rel_std", type=float, default=None, help="Relative noise std.")
@click.option("--seed", type=int, default=None)
@guarded
def gen(manifest, out, seed, **gen_kw):
    """Generate synthetic model files and ground-truth labels."""
    if manifest is not None:
        cfg = _load(manifest)
    elif out is not None:
        cfg = PipelineConfig(output_dir=out)
    else:
        raise ConfigError("give --manifest or --out")
    seed = cfg.seed if seed is None else seed
    base = {k: getattr(cfg.gen, k) for k in ("n_buses", "models_per_bus", "basics_per_bus", "noise_rel_std")}
    base.update({k: v for k, v in gen_kw.items() if v is not None})
    cfg = with_overrides(cfg, output_dir=out, seed=seed, gen=GenSpec(**base, seed=seed))
    paths = run_gen(cfg)
    click.echo(f"wrote {len(paths)} model files x {cfg.gen.models_per_bus} models to {cfg.output_dir}")


@main.command()
@click.argument("model_file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--suite", "suite_file", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="Fault suite JSON (default: the standard three faults).")
@click.option("--index", "indices", type=int, multiple=True, help="Model index; repeatable. Default all.")
@click.option("--mode", type=click.Choice(["playback", "thevenin"]), default="playback")
@click.option("--dt", type=float, default=SimConfig.dt)
@click.option("--horizon", type=float, default=SimConfig.horizon)
@guarded
def pfr(model_file, out, suite_file, indices, mode, dt, horizon):
    """Simulate post-fault responses and export one CSV (time,p,q) per model and fault."""
    bus = files.read_models(model_file)
    suite = files.read_suite(suite_file) if suite_file else standard_fault_suite()
    idx = list(indices) or list(range(len(bus.models)))
    bad = [i for i in idx if not 0 <= i < len(bus.models)]
    if bad:
        raise ConfigError(f"model indices out of range: {bad}")
    bundles = simulate_bundles([bus.models[i] for i in idx], suite,
                               SimConfig(dt=dt, horizon=horizon, excitation_mode=mode))
    n = 0
    for i, b in zip(idx, bundles):
        n += len(files.write_bundle_curves(out, f"bus{bus.bus_id}_m{i}", b, suite))
    click.echo(f"wrote {n} curve files to {out}")


@main.command("cluster-temporal")
@manifest_option
@click.option("--nc", type=int, default=None, help="Clusters per bus (overrides the manifest).")
@click.option("--workers", type=int, default=None, help="Buses processed in parallel.")
@click.option("--export-distances", is_flag=True, default=False,
              help="Also write each bus's PFR distance matrix as CSV.")
@guarded
def cluster_temporal(manifest, nc, workers, export_distances):
    """Pick the representative models (RLMs) of every bus."""
    cfg = _load(manifest)
    t = cfg.temporal
    cfg = with_overrides(cfg, workers=workers, temporal=TemporalSettings(
        nc if nc is not None else t.nc, t.neighbor_fraction, t.basis,
        t.export_distances or export_distances))
    results = run_temporal(cfg)
    for r in results:
        click.echo(f"bus {r.bus_id}: {r.r_count} RLMs ({len(r.clusters.outliers)} outliers)")
    click.echo(f"total RLMs: {sum(r.r_count for r in results)}")


@main.command("cluster-spatial")
@manifest_option
@click.option("--nc", "nc_list", type=int, multiple=True, help="Clusters per component; repeatable.")
@guarded
def cluster_spatial(manifest, nc_list):
    """Cluster the pooled RLM components of all buses."""
    cfg = _load(manifest)
    if any(n < 1 for n in nc_list):
        raise ConfigError("nc values must be >= 1")
    for nc, sp in run_spatial(cfg, nc_list=list(nc_list) or None).items():
        click.echo(f"nc={nc}: |RA|={len(sp.ra)} |RR|={len(sp.rr)} |RD|={len(sp.rd)}")


@main.command()
@manifest_option
@click.option("--n-cases", type=int, default=None)
@click.option("--compare/--no-compare", default=None,
              help="Also rerun the hierarchy with the other distance basis.")
@guarded
def validate(manifest, n_cases, compare):
    """Fitting degrees of the temporal and spatial replacements."""
    cfg = _load(manifest)
    v = cfg.validation
    cfg = with_overrides(cfg, validation=type(v)(
        n_cases if n_cases is not None else v.n_cases, v.fault, v.sim, v.network,
        v.compare_bases if compare is None else compare))
    report, comparison = run_validate(cfg)
    click.echo(report.text_summary())
    for basis, rep in comparison.items():
        click.echo(f"{basis:>10} basis: mean F(Tem) = {rep.mean_f('Tem'):.4f}")


@main.command()
@click.option("-m", "--manifest", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Report on the realized run of this manifest.")
@click.option("--n-buses", type=int, default=None, help="Counts mode: number of buses.")
@click.option("--models-per-bus", type=int, default=None)
@click.option("--rlms-per-bus", type=int, default=None)
@click.option("--nc", "nc_list", type=int, multiple=True, help="Counts mode: spatial nc; repeatable.")
@click.option("--motor-params", type=int, default=StorageSettings.motor_param_count)
@click.option("--static-params", type=int, default=StorageSettings.static_param_count)
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Counts mode: also write storage.csv/storage.txt here.")
@guarded
def report(manifest, n_buses, models_per_bus, rlms_per_bus, nc_list, motor_params, static_params, out):
    """Storage needed by the original, temporal and spatial model sets."""
    counts = (n_buses, models_per_bus, rlms_per_bus)
    if manifest is not None:
        if any(c is not None for c in counts) or nc_list:
            raise ConfigError("use either --manifest or the count flags, not both")
        reports = run_report(_load(manifest))
    else:
        if any(c is None for c in counts) or not nc_list:
            raise ConfigError("counts mode needs --n-buses, --models-per-bus, --rlms-per-bus and --nc")
        if min(counts) < 0 or min(nc_list) < 0:
            raise ConfigError("counts must be non-negative")
        settings = StorageSettings(motor_params, static_params)
        reports = storage_reports(models_per_bus, rlms_per_bus, {nc: nc for nc in nc_list},
                                  settings, n_buses=n_buses)
        if out is not None:
            write_storage(out, reports)
    click.echo(files.storage_text(reports), nl=False)


@main.command()
@manifest_option
@click.option("--workers", type=int, default=None)
@guarded
def run(manifest, workers):
    """Every stage in order: gen (unless model files are given), temporal, spatial, validate, report."""
    cfg = with_overrides(_load(manifest), workers=workers)
    out = run_all(cfg)
    click.echo(f"RLMs: {sum(t.r_count for t in out['temporal'])}")
    click.echo(out["validation"].text_summary())
    click.echo(files.storage_text(out["storage"]), nl=False)
    click.echo(f"outputs in {cfg.output_dir}")


if __name__ == "__main__":
    main()
