"""Desk-scale out-of-setting run: train on Setting D at 2 bidders x 5 items, evaluate at 3..7 items.

    python3 scripts/setting_d_oos.py [--config configs/setting_d_oos_desk.toml] [--out artifacts/setting_d_oos_desk]
"""

import argparse
import logging
from pathlib import Path

from auction_forge.config import load_config
from auction_forge.experiments import ensure_trained, summarize, sweep_oos

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "setting_d_oos_desk.toml")
    ap.add_argument("--out", default=ROOT / "artifacts" / "setting_d_oos_desk")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    config = load_config(args.config)
    out = Path(args.out)
    ensure_trained(config, out)
    print(f"{'n':>3} {'m':>3} {'revenue':>9} {'regret':>9}")
    for rep in sweep_oos(config, out):
        print(f"{rep.n:>3} {rep.m:>3} {rep.revenue:>9.4f} {rep.mean_regret:>9.5f}")
    for name, path in summarize(out).items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
