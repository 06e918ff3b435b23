"""Repeat an experiment over consecutive master seeds and report mean and sd per cell.

    python3 scripts/seed_sweep.py --config configs/smoke.toml --out runs/smoke_sweep --seeds 5

Runs train, eval and baseline for every seed through the CLI, then summarizes.
"""

import argparse
import sys

from auction_forge import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    for command in ("train", "eval", "baseline"):
        status = cli.run([command, "--config", args.config, "--out", args.out, "--seeds", str(args.seeds), "-q"])
        if status:
            sys.exit(status)
    sys.exit(cli.run(["summarize", "--out", args.out]))


if __name__ == "__main__":
    main()
