"""Finite-difference checks for every differentiable op in the tensor core.

Each case builds random float64 inputs, contracts the op output against a
fixed random weighting to get a scalar, and compares autodiff gradients
against central differences.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from . import tensor as T

STEP = 1e-3
ABS_FLOOR = 1e-6


def _positive(rng, shape):
    return rng.uniform(0.5, 2.0, size=shape)


def _away_from_zero(rng, shape):
    # keep relu inputs clear of the kink so central differences are valid
    x = rng.normal(size=shape)
    return np.where(np.abs(x) < 0.05, 0.5, x)


# kind -> (input builders, op)
OP_CASES: dict[str, tuple[list[Callable], Callable]] = {
    "add": ([lambda r: r.normal(size=(3, 4)), lambda r: r.normal(size=(4,))], T.add),
    "sub": ([lambda r: r.normal(size=(2, 3)), lambda r: r.normal(size=(2, 1))], T.sub),
    "mul": ([lambda r: r.normal(size=(2, 3, 2)), lambda r: r.normal(size=(3, 1))], T.mul),
    "div": ([lambda r: r.normal(size=(3, 2)), lambda r: _positive(r, (3, 2))], T.div),
    "neg": ([lambda r: r.normal(size=(4,))], T.neg),
    "exp": ([lambda r: r.normal(size=(3, 3))], T.exp),
    "log": ([lambda r: _positive(r, (5,))], T.log),
    "relu": ([lambda r: _away_from_zero(r, (4, 3))], T.relu),
    "sigmoid": ([lambda r: r.normal(size=(4, 3)) * 3], T.sigmoid),
    "softmax": ([lambda r: r.normal(size=(3, 5))], lambda a: T.softmax(a, axis=-1)),
    "softmax_axis0": ([lambda r: r.normal(size=(4, 2, 3))], lambda a: T.softmax(a, axis=0)),
    "sum": ([lambda r: r.normal(size=(2, 3, 4))], lambda a: T.sum_(a, axis=(0, 2))),
    "mean": ([lambda r: r.normal(size=(2, 3, 4))], lambda a: T.mean(a, axis=1, keepdims=True)),
    "matmul": ([lambda r: r.normal(size=(2, 3, 4)), lambda r: r.normal(size=(4, 5))], T.matmul),
    "linear": ([lambda r: r.normal(size=(2, 3, 4)), lambda r: r.normal(size=(4, 5)),
                lambda r: r.normal(size=(5,))], T.linear),
    "inner": ([lambda r: r.normal(size=(3, 4)), lambda r: r.normal(size=(3, 4))], T.inner),
    "reshape": ([lambda r: r.normal(size=(2, 6))], lambda a: T.reshape(a, (3, 4))),
    "transpose": ([lambda r: r.normal(size=(2, 3, 4))], lambda a: T.transpose(a, (2, 0, 1))),
    "broadcast_to": ([lambda r: r.normal(size=(3, 1))], lambda a: T.broadcast_to(a, (2, 3, 4))),
    "concat": ([lambda r: r.normal(size=(2, 3)), lambda r: r.normal(size=(2, 2))],
               lambda a, b: T.concat([a, b], axis=1)),
    "getitem": ([lambda r: r.normal(size=(3, 4, 2))], lambda a: a[:, 1:3, 0]),
    "take_rows": ([lambda r: r.normal(size=(5, 3))], lambda a: T.take_rows(a, np.array([[0, 2], [2, 4]]))),
}


def relative_error(auto: np.ndarray, num: np.ndarray) -> float:
    diff = np.abs(auto - num).max(initial=0.0)
    scale = np.abs(num).max(initial=0.0)
    if scale < ABS_FLOOR:
        return 0.0 if diff < ABS_FLOOR else float(diff)
    return float(diff / scale)


def check_function(build: Callable[[list[T.Tensor]], T.Tensor], arrays: list[np.ndarray],
                   rng: np.random.Generator, step: float = STEP) -> float:
    """Max relative error of autodiff vs central differences for ``build(inputs)``."""
    arrays = [np.asarray(a, dtype=np.float64) for a in arrays]
    leaves = [T.Tensor(a, requires_grad=True) for a in arrays]
    out = build(leaves)
    weights = rng.normal(size=out.shape)
    loss = T.sum_(T.mul(out, T.Tensor(weights)))
    grads = T.backward(loss, leaves)

    def value():
        res = build([T.Tensor(a) for a in arrays])
        return float((res.data * weights).sum())

    return max(relative_error(g, T.numeric_grad(value, a, step)) for g, a in zip(grads, arrays))


def check_op(kind: str, rng: np.random.Generator) -> float:
    builders, op = OP_CASES[kind]
    arrays = [b(rng) for b in builders]
    return check_function(lambda ts: op(*ts), arrays, rng)


def check_payment_gradient(rng: np.random.Generator, setting: str = "D") -> float:
    """End-to-end d p_i / d b through a freshly initialised float64 network at a random size."""
    from . import net
    from .env import SETTINGS
    from .properties import random_inputs

    cfg = net.NetConfig.for_setting(SETTINGS[setting])
    params = {k: T.Tensor(v) for k, v in net.init_params(cfg, rng, np.float64).items()}
    n, m = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    b, x, y = random_inputs(cfg, 1, n, m, rng)
    bidder = int(rng.integers(n))
    return check_function(lambda ts: net.forward(cfg, params, ts[0], x, y).p[:, bidder], [b], rng)


@dataclass
class GradCheckResult:
    kind: str
    error: float

    @property
    def passed(self) -> bool:
        return self.error < TOLERANCE


TOLERANCE = 1e-3


def run_suite(seed: int = 0, repeats: int = 8, end_to_end: int = 30) -> list[GradCheckResult]:
    """``repeats`` randomized cases per op kind plus ``end_to_end`` payment-gradient cases."""
    rng = np.random.default_rng(seed)
    results = [GradCheckResult(kind, check_op(kind, rng)) for _ in range(repeats) for kind in OP_CASES]
    settings = ("A", "D", "G")
    results += [GradCheckResult(f"payment_grad_{settings[k % 3]}", check_payment_gradient(rng, settings[k % 3]))
                for k in range(end_to_end)]
    return results
