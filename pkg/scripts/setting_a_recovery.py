"""Desk-scale single-item run on Setting A: train, evaluate, and compare with item-wise Myerson.

    python3 scripts/setting_a_recovery.py [--config configs/setting_a_desk.toml] [--out artifacts/setting_a_desk]

An existing run in --out is reused when it was trained with the same settings.
"""

import argparse
import logging
from pathlib import Path

from auction_forge.config import load_config
from auction_forge.env import load_dataset
from auction_forge.experiments import baseline_run, ensure_trained, eval_run

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=ROOT / "configs" / "setting_a_desk.toml")
    ap.add_argument("--out", default=ROOT / "artifacts" / "setting_a_desk")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    config = load_config(args.config)
    out = Path(args.out)
    _, history = ensure_trained(config, out)
    learned = eval_run(config, out)
    base = baseline_run(config, out)
    test = load_dataset(out / "data" / "test.bin")
    print(f"epochs trained      {len(history)}")
    print(f"test samples        {len(test)} (regret on first {learned.regret_samples})")
    print(f"learned revenue     {learned.revenue:.4f}")
    print(f"Myerson revenue     {base.revenue:.4f}")
    print(f"ratio               {learned.revenue / base.revenue:.4f}")
    print(f"learned mean regret {learned.mean_regret:.5f}  per bidder {learned.per_bidder_regret}")
    print(f"Myerson mean regret {base.mean_regret:.2e}")


if __name__ == "__main__":
    main()
