"""Distribution of per-user protocol compute within one run, as a CCDF table."""
import argparse
import csv
from pathlib import Path

import numpy as np

from lockcoin.harness import Scenario, run_scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--users", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--key-bits", type=int, default=512, choices=(512, 1024, 2048))
    ap.add_argument("--out", type=Path, default=Path("results/runtime_ccdf.csv"))
    args = ap.parse_args()

    rep = run_scenario(Scenario(n_users=args.users, seed=args.seed, omega=1, key_bits=args.key_bits))
    ms = np.sort(np.array(list(rep.compute_seconds.values())) * 1000)
    ccdf = 1.0 - np.arange(len(ms)) / len(ms)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["wall_ms", "fraction_at_least"])
        w.writerows([f"{x:.3f}", f"{y:.4f}"] for x, y in zip(ms, ccdf))
    print(f"{len(ms)} users: median {np.median(ms):.2f} ms, p95 {np.percentile(ms, 95):.2f} ms, "
          f"max {ms[-1]:.2f} ms")


if __name__ == "__main__":
    main()
