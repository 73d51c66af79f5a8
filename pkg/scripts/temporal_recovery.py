"""How well does per-bus temporal clustering recover the generating basics?

For each noise level and seed, one bus of synthetic models is clustered and
compared with its ground-truth labels. Writes one CSV row per run.

Needs scikit-learn for the adjusted Rand index (``pip install -e .[test]``).

    python3 scripts/temporal_recovery.py --seeds 10 --noise 0.01 --noise 0.03 --noise 0.06
"""

from pathlib import Path

import click
import numpy as np
from sklearn.metrics import adjusted_rand_score

from loadclust.datagen import GenSpec, generate_dataset
from loadclust.files import csv_table, fmt, write_text
from loadclust.hierarchy import temporal_cluster
from loadclust.pfr import SimConfig, standard_fault_suite


@click.command()
@click.option("--seeds", type=int, default=10, help="Seeds 0..N-1 per noise level.")
@click.option("--noise", "noises", type=float, multiple=True, help="Relative noise std; repeatable.")
@click.option("--models", type=int, default=500)
@click.option("--basics", type=int, default=10)
@click.option("--nc", type=int, default=10)
@click.option("--basis", type=click.Choice(["pfr", "parameter"]), default="pfr")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=Path("temporal_recovery.csv"))
def main(seeds, noises, models, basics, nc, basis, out):
    suite, cfg = standard_fault_suite(), SimConfig()
    rows = []
    for noise in noises or (0.03,):
        aris, hits = [], 0
        for seed in range(seeds):
            (ds,) = generate_dataset(GenSpec(1, models, basics, noise, seed))
            res = temporal_cluster(ds, nc, suite, cfg, basis=basis)
            ari = adjusted_rand_score(ds.labels, res.membership)
            k = res.clusters.k_effective
            hits += nc <= k <= nc + 2 and ari >= 0.9
            aris.append(ari)
            rows.append([fmt(noise), seed, k, len(res.clusters.outliers), fmt(ari)])
            click.echo(f"noise={noise:g} seed={seed}: k_eff={k} ARI={ari:.4f}")
        click.echo(f"noise={noise:g}: mean ARI {np.mean(aris):.4f}, {hits}/{seeds} runs within target")
    write_text(out, csv_table(["noise", "seed", "k_effective", "n_outliers", "ari"], rows))
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
