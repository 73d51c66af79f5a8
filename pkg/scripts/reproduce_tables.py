"""Run the desk-scale pipeline from a manifest and print the result tables.

Prints the fitting-degree table (Tem and Spa<nc> columns), the basis
comparison and the storage table, and writes them next to the other outputs.

    python3 scripts/reproduce_tables.py scripts/manifest.json
"""

from dataclasses import replace
from pathlib import Path

import click

from loadclust import files
from loadclust.pipeline import load_manifest, run_all, with_overrides


@click.command()
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--workers", type=int, default=None)
@click.option("--seed", type=int, default=None, help="Override the manifest seed.")
def main(manifest, workers, seed):
    cfg = load_manifest(manifest)
    if seed is not None:
        cfg = with_overrides(cfg, seed=seed, gen=replace(cfg.gen, seed=seed))
    cfg = with_overrides(cfg, workers=workers)
    out = run_all(cfg)

    click.echo(f"RLMs per bus: {[t.r_count for t in out['temporal']]}")
    click.echo("\nfitting degree")
    click.echo(out["validation"].text_summary())
    if out["comparison"]:
        click.echo("\nmean F by distance basis")
        names = list(next(iter(out["comparison"].values())).summary())
        click.echo(f"{'basis':<10}" + "".join(f"{n:>10}" for n in names))
        for basis, rep in out["comparison"].items():
            click.echo(f"{basis:<10}" + "".join(f"{rep.mean_f(n):>10.4f}" for n in names))
    click.echo("\nstorage")
    click.echo(files.storage_text(out["storage"]), nl=False)
    click.echo(f"\noutputs in {cfg.output_dir}")


if __name__ == "__main__":
    main()
