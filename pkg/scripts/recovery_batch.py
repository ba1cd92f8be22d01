"""Recovery rate of the sign-aware descent over random problems.

Runs the batch at each latent dimension in --latents (both networks share it)
and writes <out>/recovery.csv with one summary row per setting.
"""
import argparse
import csv
import os
import statistics
from dataclasses import replace

from blinddemod import harness


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--latents", type=int, nargs="+", default=[10])
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    rows = []
    for n in args.latents:
        base = harness.default_config("recover-batch")
        cfg = replace(base, trials=args.trials, dims1=(n, 25 * n, 250 * n), dims2=(n, 25 * n, 250 * n))
        s = harness.recover_batch(cfg, jobs=args.jobs)
        with open(os.path.join(args.out, f"batch_n{n}.csv"), "w") as fh:
            fh.write(harness.batch_to_csv(s))
        iters = statistics.median(t.iters for t in s.trials)
        on_truth = sum(t.branch == 0 for t in s.successes)
        rows.append([n, args.trials, s.success_rate, on_truth, iters])
        print(f"n={n}: success {s.success_rate:.2f}, {on_truth} on the true branch, median iters {iters}")

    with open(os.path.join(args.out, "recovery.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["latent_dim", "trials", "success_rate", "on_truth_branch", "median_iters"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
