"""Sampled weight-distribution deviations and concentration ratios versus width."""
import argparse
import os
from dataclasses import replace

from blinddemod import harness


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[1000, 5000, 20000])
    ap.add_argument("--latent", type=int, default=5)
    ap.add_argument("--pairs", type=int, default=50)
    ap.add_argument("--out", default="results")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    cfg = replace(harness.default_config("verify"), verify_sizes=tuple(args.sizes),
                  verify_latent=args.latent, verify_pairs=args.pairs)
    rows = harness.verify_sweep(cfg)
    with open(os.path.join(args.out, "verify.csv"), "w") as fh:
        fh.write(harness.verify_to_csv(rows))
    for r in rows:
        bound = "" if r["bound"] is None else f"  bound {r['bound']:.4g}"
        print(f"{r['check']:>22} l={r['size']:>6}  value {r['value']:.4g}{bound}")


if __name__ == "__main__":
    main()
