"""Structural checks on mechanism networks: permutation equivariance, feasibility, IR."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import net
from . import tensor as T
from .env import SETTINGS


def random_inputs(cfg: net.NetConfig, B: int, n: int, m: int, rng: np.random.Generator, dtype=np.float64):
    """Uniform bids in [0, 1) with random contexts of the right kind."""
    b = rng.uniform(0, 1, size=(B, n, m)).astype(dtype)
    if cfg.context == "discrete":
        x = rng.integers(1, cfg.bidder_domain + 1, size=(B, n))
        y = rng.integers(1, cfg.item_domain + 1, size=(B, m))
    else:
        x = rng.uniform(-1, 1, size=(B, n, cfg.context_dim)).astype(dtype)
        y = rng.uniform(-1, 1, size=(B, m, cfg.context_dim)).astype(dtype)
    return b, x, y


def equivariance_deviation(cfg: net.NetConfig, params: dict[str, T.Tensor], b, x, y,
                           bidder_perm: np.ndarray, item_perm: np.ndarray) -> float:
    """Max |M(permuted input) - permuted M(input)| over allocations and payments."""
    base = net.forward(cfg, params, b, x, y)
    moved = net.forward(cfg, params, b[:, bidder_perm][:, :, item_perm], x[:, bidder_perm], y[:, item_perm])
    dg = np.abs(moved.g.data - base.g.data[:, bidder_perm][:, :, item_perm]).max()
    dp = np.abs(moved.p.data - base.p.data[:, bidder_perm]).max()
    return float(max(dg, dp))


def feasibility_violations(out: net.Outcome, b: np.ndarray) -> dict[str, int]:
    """Counts of items with total allocation outside (0, 1) and bidders with payment outside [0, g.b]."""
    g = out.g.data.astype(np.float64)
    p = out.p.data.astype(np.float64)
    total = g.sum(axis=1)
    value = (g * b).sum(axis=2)
    return {
        "allocation": int(np.count_nonzero((total <= 0) | (total >= 1))),
        "negative_payment": int(np.count_nonzero(p < 0)),
        "ir": int(np.count_nonzero(p > value)),
    }


@dataclass
class PropertyReport:
    equivariance_cases: int = 0
    max_equivariance_deviation: float = 0.0
    forward_passes: int = 0
    violations: dict[str, int] = field(default_factory=lambda: {"allocation": 0, "negative_payment": 0, "ir": 0})

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())


def equivariance_suite(cases: int, sizes: list[tuple[int, int]], seed: int,
                       settings: tuple[str, ...] = ("D", "G"), batch: int = 2) -> tuple[int, float]:
    """``cases`` fresh (params, input, permutation) triples spread over ``sizes``; returns (count, max deviation)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(cases):
        n, m = sizes[k % len(sizes)]
        spec = SETTINGS[settings[k % len(settings)]]
        cfg = net.NetConfig.for_setting(spec)
        params = {name: T.Tensor(v) for name, v in
                  net.init_params(cfg, np.random.default_rng(rng.integers(2**63)), np.float32).items()}
        b, x, y = random_inputs(cfg, batch, n, m, rng, np.float32)
        worst = max(worst, equivariance_deviation(cfg, params, b, x, y, rng.permutation(n), rng.permutation(m)))
    return cases, worst


def feasibility_suite(passes: int, seed: int, chunk: int = 2000,
                      settings: tuple[str, ...] = ("A", "D", "G")) -> tuple[int, dict[str, int]]:
    """``passes`` single-profile forward passes (batched), with random params, sizes and bids."""
    rng = np.random.default_rng(seed)
    counts = {"allocation": 0, "negative_payment": 0, "ir": 0}
    done = 0
    k = 0
    while done < passes:
        spec = SETTINGS[settings[k % len(settings)]]
        k += 1
        cfg = net.NetConfig.for_setting(spec)
        params = {name: T.Tensor(v) for name, v in
                  net.init_params(cfg, np.random.default_rng(rng.integers(2**63)), np.float32).items()}
        n, m = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        B = min(chunk, passes - done)
        b, x, y = random_inputs(cfg, B, n, m, rng, np.float32)
        # mix in exact zeros and the top of the box
        b[rng.random(b.shape) < 0.05] = 0.0
        b[rng.random(b.shape) < 0.05] = 1.0
        for key, c in feasibility_violations(net.forward(cfg, params, b, x, y), b).items():
            counts[key] += c
        done += B
    return done, counts
