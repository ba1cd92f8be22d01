"""Objective over [-3, 3]^2 for one-dimensional latents, plus its minimum clusters.

Writes <out>/scan_seed<k>.csv (h, m, f) per seed and <out>/scan_clusters.csv with
one row per cluster: its least-objective grid point, nearest branch and distance.
"""
import argparse
import csv
import os
from dataclasses import replace

from blinddemod import harness


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--resolution", type=int, default=301)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    rows = []
    for seed in range(args.seeds):
        cfg = replace(harness.default_config("scan"), seed=seed, resolution=args.resolution)
        grid = harness.scan_landscape(cfg)
        with open(os.path.join(args.out, f"scan_seed{seed}.csv"), "w") as fh:
            fh.write(harness.scan_to_csv(grid))
        clusters = harness.cluster_minima(grid.minima)
        for rank, c in enumerate(clusters):
            best = min(c, key=lambda x: x.f)
            rows.append([seed, rank, len(c), best.h, best.m, best.f, best.branch, best.distance])
        print(f"seed {seed}: {len(clusters)} clusters, branches "
              f"{[min(c, key=lambda x: x.f).branch for c in clusters]}")

    with open(os.path.join(args.out, "scan_clusters.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "rank", "size", "h", "m", "f", "branch", "distance"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
