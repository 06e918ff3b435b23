"""Test-time revenue and ex-post regret.

Regret for bidder i on a sample is the best utility gain found over
``restarts`` independent Adam ascents of ``steps`` iterations each,
started uniformly in the misreport box. Every iterate (including the
start) is scored, so the estimate can only grow with more restarts or
more steps.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .env import SampleBatch, SettingSpec, generate_dataset, make_rng
from .mechanisms import misreport_utilities, project, truthful_utilities
from .optim import AdamState, adam_step

CSV_COLUMNS = ["setting", "mechanism", "n", "m", "samples", "regret_samples", "restarts", "steps", "seed",
               "revenue", "mean_regret", "per_bidder_regret"]


@dataclass
class RegretReport:
    per_bidder_regret: list[float]
    mean_regret: float
    revenue: float
    samples: int
    restarts: int
    steps: int
    setting: str = ""
    mechanism: str = "learned"
    n: int = 0
    m: int = 0
    seed: int = 0
    # samples behind the regret estimate, when fewer than those behind revenue
    regret_samples: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RegretReport:
        return cls(**json.loads(text))

    def csv_row(self) -> dict:
        row = {k: getattr(self, k) for k in CSV_COLUMNS}
        row["per_bidder_regret"] = ";".join(f"{r:.8g}" for r in self.per_bidder_regret)
        return row

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        if header:
            w.writeheader()
        w.writerow(self.csv_row())
        return buf.getvalue()


def revenue(mechanism, data: SampleBatch, batch_size: int = 1000) -> float:
    """Mean total payment under truthful bidding."""
    total = 0.0
    for start in range(0, len(data), batch_size):
        sl = slice(start, start + batch_size)
        out = mechanism(T.Tensor(data.v[sl]), data.x[sl], data.y[sl])
        total += float(out.p.data.astype(np.float64).sum())
    return total / len(data)


def _chunk_regret(mechanism, v, x, y, upper, restarts, steps, lr, seed, offset) -> np.ndarray:
    u0, _ = truthful_utilities(mechanism, v, x, y)
    u0 = u0.data.astype(np.float64)
    best = np.zeros_like(u0)
    for r in range(restarts):
        rng = make_rng(seed, f"eval-restart-{r}-{offset}")
        mis = (rng.random(size=v.shape) * upper).astype(v.dtype)
        adam = AdamState(learning_rate=lr)
        for step in range(steps + 1):
            mt = T.Tensor(mis, requires_grad=step < steps)
            u = misreport_utilities(mechanism, v, mt, x, y)
            best = np.maximum(best, u.data.astype(np.float64) - u0)
            if step == steps:
                break
            (grad,) = T.backward(T.sum_(u), [mt])
            mis = project(adam_step({"mis": mis}, {"mis": -grad}, adam)["mis"], upper)
    return best


def evaluate(mechanism, data: SampleBatch, restarts: int = 100, steps: int = 200, lr: float = 0.01,
             seed: int = 0, batch_size: int = 500, tag: str = "learned") -> RegretReport:
    """Revenue and per-bidder regret of ``mechanism`` on ``data``."""
    if restarts < 1 or steps < 0:
        raise ValueError("restarts must be >= 1 and steps >= 0")
    upper = data.upper_bound()
    per_sample = []
    for start in range(0, len(data), batch_size):
        sl = slice(start, start + batch_size)
        per_sample.append(_chunk_regret(mechanism, data.v[sl], data.x[sl], data.y[sl], upper[sl],
                                        restarts, steps, lr, seed, start))
    regret = np.concatenate(per_sample).mean(axis=0)
    return RegretReport(
        per_bidder_regret=regret.tolist(), mean_regret=float(regret.mean()),
        revenue=revenue(mechanism, data, batch_size), samples=len(data),
        restarts=restarts, steps=steps, setting=data.spec.id, mechanism=tag,
        n=data.n, m=data.m, seed=seed, regret_samples=len(data),
    )


def out_of_setting_eval(mechanism, base: SettingSpec, n: int, m: int, count: int, data_seed: int,
                        **kwargs) -> RegretReport:
    """Evaluate unchanged parameters on fresh data drawn at size (n, m); ``kwargs`` go to :func:`evaluate`."""
    spec = base.resized(n, m)
    return evaluate(mechanism, generate_dataset(spec, count, data_seed), **kwargs)
