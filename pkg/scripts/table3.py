"""Print the Lockcoin comparison row for several confirmation depths."""
import argparse
import tempfile

from lockcoin.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--omega", type=int, nargs="+", default=[1, 3, 6])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    for omega in args.omega:
        with tempfile.TemporaryDirectory() as out:
            cli_main(["table3", "--omega", str(omega), "--seed", str(args.seed), "--out", out])
        print()


if __name__ == "__main__":
    main()
