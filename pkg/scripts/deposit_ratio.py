"""What a user who keeps the payout and never pays the chunk loses, per deposit ratio z."""
import argparse

from lockcoin.harness import deposit_ratio_sweep
from lockcoin.units import fmt


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--z", nargs="+", default=["1.5", "2", "3"])
    ap.add_argument("--v", default="0.1", help="chunk size in BTC")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print("z      user_delta     mixer_delta")
    for z, user, mixer in deposit_ratio_sweep(args.z, args.v, args.seed):
        print(f"{str(z):6s} {fmt(user):>13s} {fmt(mixer):>14s}")


if __name__ == "__main__":
    main()
