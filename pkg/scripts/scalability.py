"""Protocol compute against user count, written as CSV for plotting.

    python scripts/scalability.py --ns 10 50 100 200 --out results/scalability.csv
"""
import argparse
import csv
from pathlib import Path

from lockcoin.harness import scalability


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ns", type=int, nargs="+", default=[10, 50, 100, 200])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--omega", type=int, default=1)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--key-bits", type=int, default=512, choices=(512, 1024, 2048))
    ap.add_argument("--out", type=Path, default=Path("results/scalability.csv"))
    args = ap.parse_args()

    points, slope = scalability(args.ns, args.seed, args.omega, args.workers, args.key_bits)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_users", "wall_ms", "per_user_ms"])
        for n, total, per_user in points:
            w.writerow([n, f"{total * 1000:.3f}", f"{per_user * 1000:.3f}"])
    for n, total, per_user in points:
        print(f"n={n:4d}  total={total:8.3f}s  per-user={per_user * 1000:7.2f}ms")
    print(f"log-log exponent: {slope:.3f}")


if __name__ == "__main__":
    main()
