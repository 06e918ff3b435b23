"""Augmented-Lagrangian training of a mechanism network.

Each minibatch: refine the cached misreports by projected gradient ascent
on each bidder's utility, take one Adam step on

    -revenue + sum_i lambda_i rgt_i + rho/2 sum_i rgt_i^2

with the misreports held fixed, and periodically raise the multipliers by
``rho * rgt_i``.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .env import SampleBatch, make_rng
from .mechanisms import misreport_utilities, project, truthful_utilities
from .net import MechanismNet
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    batch_size: int = 500
    epochs: int = 80
    misreport_steps: int = 25
    misreport_lr: float = 0.05
    lr: float = 1e-3
    rho_init: float = 1.0
    rho_increment: float = 5.0
    rho_period: int = 2
    lambda_init: float = 5.0
    lambda_period: int = 2
    lambda_unit: str = "epoch"
    misreport_init_noise: float = 0.1
    seed: int = 0
    checkpoint_every: int = 0

    def validate(self) -> TrainConfig:
        checks = [
            ("batch_size", self.batch_size >= 1),
            ("epochs", self.epochs >= 0),
            ("misreport_steps", self.misreport_steps >= 0),
            ("misreport_lr", self.misreport_lr > 0),
            ("lr", self.lr > 0),
            ("rho_init", self.rho_init > 0),
            ("rho_increment", self.rho_increment >= 0),
            ("rho_period", self.rho_period >= 1),
            ("lambda_period", self.lambda_period >= 1),
            ("lambda_unit", self.lambda_unit in ("epoch", "iteration")),
            ("misreport_init_noise", self.misreport_init_noise >= 0),
            ("checkpoint_every", self.checkpoint_every >= 0),
        ]
        for name, ok in checks:
            if not ok:
                raise ValueError(f"invalid TrainConfig.{name}: {getattr(self, name)!r}")
        return self


@dataclass
class LagrangeState:
    lam: np.ndarray
    rho: float

    def update(self, regret: np.ndarray) -> None:
        self.lam = self.lam + self.rho * np.maximum(regret, 0.0)


@dataclass
class MisreportCache:
    """Per-sample, per-bidder misreports; ``values[l, i]`` is bidder i's report on sample l."""

    values: np.ndarray
    upper: np.ndarray

    @classmethod
    def initial(cls, data: SampleBatch, noise: float, rng: np.random.Generator) -> MisreportCache:
        upper = data.upper_bound()
        jitter = rng.uniform(-noise, noise, size=data.v.shape).astype(np.float32)
        return cls(project(data.v + jitter, upper).astype(np.float32), upper)


def misreport_ascent(mechanism, v, x, y, mis: np.ndarray, upper: np.ndarray,
                     steps: int, lr: float) -> np.ndarray:
    """``steps`` rounds of projected gradient ascent; returns new misreports."""
    mis = mis.copy()
    for _ in range(steps):
        mt = T.Tensor(mis, requires_grad=True)
        u = misreport_utilities(mechanism, v, mt, x, y)
        (grad,) = T.backward(T.sum_(u), [mt])
        mis = project(mis + lr * grad, upper)
    return mis


def empirical_regret(mechanism, v, x, y, mis, params=None) -> T.Tensor:
    """Per-bidder mean of max(0, u at cached misreport - u truthful), shape (n,)."""
    u_true, _ = truthful_utilities(mechanism, v, x, y, params)
    u_mis = misreport_utilities(mechanism, v, T.Tensor(mis), x, y, params)
    return T.mean(T.relu(u_mis - u_true), axis=0)


def lagrangian_loss(mechanism, v, x, y, mis, state: LagrangeState, params=None):
    """Returns (loss, revenue, per-bidder regret) tensors."""
    vt = T.Tensor(v)
    out = mechanism(vt, x, y, params=params) if params is not None else mechanism(vt, x, y)
    u_true = T.sum_(out.g * vt, axis=2) - out.p
    u_mis = misreport_utilities(mechanism, v, T.Tensor(mis), x, y, params)
    rgt = T.mean(T.relu(u_mis - u_true), axis=0)
    revenue = T.mean(T.sum_(out.p, axis=1))
    lam = T.Tensor(state.lam.astype(v.dtype))
    loss = -revenue + T.sum_(lam * rgt) + (state.rho / 2) * T.sum_(rgt * rgt)
    return loss, revenue, rgt


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for r in self.records:
                fh.write(json.dumps(r) + "\n")


def train(mech: MechanismNet, data: SampleBatch, config: TrainConfig,
          history_path: str | Path | None = None, checkpoint_dir: str | Path | None = None,
          state: LagrangeState | None = None) -> tuple[MechanismNet, TrainHistory]:
    config.validate()
    if len(data) == 0:
        raise ValueError("empty training set")
    N, n, _ = data.v.shape
    state = state or LagrangeState(np.full(n, config.lambda_init), config.rho_init)
    cache = MisreportCache.initial(data, config.misreport_init_noise, make_rng(config.seed, "misreport-init"))
    shuffle_rng = make_rng(config.seed, "shuffle")
    adam = AdamState(learning_rate=config.lr)
    history = TrainHistory()
    sink = open(history_path, "w") if history_path else None
    iteration = 0
    try:
        for epoch in range(1, config.epochs + 1):
            t0 = time.perf_counter()
            order = shuffle_rng.permutation(N)
            rev_sum, rgt_sum, loss_sum, batches = 0.0, np.zeros(n), 0.0, 0
            for k, start in enumerate(range(0, N, config.batch_size)):
                idx = np.sort(order[start:start + config.batch_size])
                v, x, y = data.v[idx], data.x[idx], data.y[idx]
                frozen = mech.tensors()
                mis = misreport_ascent(lambda b, xx, yy: mech(b, xx, yy, params=frozen), v, x, y,
                                       cache.values[idx], cache.upper[idx],
                                       config.misreport_steps, config.misreport_lr)
                cache.values[idx] = mis
                leaves = mech.tensors(requires_grad=True)
                loss, revenue, rgt = lagrangian_loss(mech, v, x, y, mis, state, params=leaves)
                if not math.isfinite(loss.item()):
                    raise NumericalError(f"non-finite loss at epoch {epoch}, batch {k + 1}")
                names = list(leaves)
                grads = T.backward(loss, [leaves[nm] for nm in names])
                mech.params = adam_step(mech.params, dict(zip(names, grads)), adam)
                iteration += 1
                rev_sum += revenue.item()
                rgt_sum += rgt.data
                loss_sum += loss.item()
                batches += 1
                if config.lambda_unit == "iteration" and iteration % config.lambda_period == 0:
                    state.update(rgt.data.astype(np.float64))
            per_bidder = rgt_sum / batches
            record = {
                "epoch": epoch,
                "revenue": rev_sum / batches,
                "mean_regret": float(per_bidder.mean()),
                "per_bidder_regret": per_bidder.tolist(),
                "loss": loss_sum / batches,
                "lambda": state.lam.tolist(),
                "rho": state.rho,
            }
            if config.lambda_unit == "epoch" and epoch % config.lambda_period == 0:
                state.update(per_bidder)
            if epoch % config.rho_period == 0:
                state.rho += config.rho_increment
            record["wall_ms"] = (time.perf_counter() - t0) * 1000.0
            history.records.append(record)
            log.info("epoch %d revenue %.4f regret %.5f rho %.1f", epoch, record["revenue"],
                     record["mean_regret"], record["rho"])
            if sink:
                sink.write(json.dumps(record) + "\n")
                sink.flush()
            if checkpoint_dir and config.checkpoint_every and epoch % config.checkpoint_every == 0:
                mech.save(Path(checkpoint_dir) / f"epoch{epoch:03d}.ckpt",
                          extra={"epoch": epoch, "train": asdict(config)})
    finally:
        if sink:
            sink.close()
    return mech, history
