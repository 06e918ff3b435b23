"""Utilities under misreports, and small hand-built mechanisms.

A mechanism is any callable ``mech(b, x, y) -> Outcome`` where ``b`` is a
(B, n, m) :class:`Tensor`. Learned mechanisms also accept ``params=`` so the
caller can choose which parameter tensors carry gradients.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .net import Outcome
from .tensor import Tensor


def call(mechanism, b: Tensor, x, y, params=None) -> Outcome:
    if params is None:
        return mechanism(b, x, y)
    return mechanism(b, x, y, params=params)


def truthful_utilities(mechanism, v: np.ndarray, x, y, params=None) -> tuple[Tensor, Outcome]:
    """u_i(v_i, v) for every bidder, shape (B, n)."""
    vt = Tensor(v)
    out = call(mechanism, vt, x, y, params)
    return T.sum_(out.g * vt, axis=2) - out.p, out


def _tile(a, n: int):
    a = np.asarray(a)
    return np.broadcast_to(a[None], (n,) + a.shape).reshape((n * a.shape[0],) + a.shape[1:])


def misreport_utilities(mechanism, v: np.ndarray, mis, x, y, params=None) -> Tensor:
    """u_i(v_i, (mis_i, v_-i)) for every bidder i, shape (B, n).

    ``mis`` is (B, n, m); row i holds bidder i's report. All n deviations
    are evaluated in one stacked forward of n*B profiles, where profile
    (i, l) is sample l with only row i replaced. Because the copies are
    independent, the gradient of the summed utilities with respect to
    ``mis`` is each bidder's own utility gradient.
    """
    mis = T.as_tensor(mis)
    B, n, m = v.shape
    dtype = mis.dtype
    mask = np.zeros((n, 1, n, 1), dtype=dtype)
    mask[np.arange(n), 0, np.arange(n), 0] = 1
    vv = v.astype(dtype, copy=False)
    # (n, B, 1, m): bidder i's misreports, to be placed in row i of copy i
    own = T.reshape(T.transpose(mis, (1, 0, 2)), (n, B, 1, m))
    bids = T.add(T.mul(own, Tensor(mask)), Tensor(vv[None] * (1 - mask)))
    out = call(mechanism, T.reshape(bids, (n * B, n, m)), _tile(x, n), _tile(y, n), params)
    g = T.reshape(out.g, (n, B, n, m))
    p = T.reshape(out.p, (n, B, n))
    value = T.sum_(g * Tensor(vv[None] * mask), axis=(2, 3))          # (n, B)
    paid = T.sum_(p * Tensor(mask[..., 0]), axis=2)                   # (n, B)
    return T.transpose(value - paid, (1, 0))


def project(mis: np.ndarray, upper: np.ndarray) -> np.ndarray:
    return np.clip(mis, 0.0, upper)


# -- stubs -----------------------------------------------------------------

def _winner_mask(b: np.ndarray) -> np.ndarray:
    """One-hot highest bid per item, lowest index on ties."""
    B, n, m = b.shape
    win = np.argmax(b, axis=1)
    mask = np.zeros_like(b)
    mask[np.arange(B)[:, None], win, np.arange(m)[None, :]] = 1
    return mask


class SecondPrice:
    """Item-wise second-price auction (DSIC)."""

    def __call__(self, b: Tensor, x, y) -> Outcome:
        bd = b.data
        g = _winner_mask(bd)
        second = np.sort(bd, axis=1)[:, -2, :] if bd.shape[1] > 1 else np.zeros(bd.shape[::2])
        p = (g * second[:, None, :]).sum(axis=2)
        return Outcome(g=Tensor(g), p=Tensor(p.astype(bd.dtype)))


class FirstPrice:
    """Item-wise first-price auction; the winner pays their bid, so p depends on b smoothly."""

    def __call__(self, b: Tensor, x, y) -> Outcome:
        g = Tensor(_winner_mask(b.data))
        return Outcome(g=g, p=T.sum_(g * b, axis=2))


class ConstantAllocation:
    """Fixed allocation, optionally a fixed payment; bids are ignored."""

    def __init__(self, share: float = 0.5, payment: float = 0.0):
        self.share = share
        self.payment = payment

    def __call__(self, b: Tensor, x, y) -> Outcome:
        B, n, m = b.shape
        g = np.full((B, n, m), self.share / n, dtype=b.dtype)
        return Outcome(g=Tensor(g), p=Tensor(np.full((B, n), self.payment, dtype=b.dtype)))


class LinearQuadratic:
    """Allocation equal to the bid, payment ``cost * b^2`` (per item, single bidder-relevant).

    Utility ``v b - cost b^2`` is concave in b with maximiser ``v / (2 cost)``.
    """

    def __init__(self, cost: float = 1.0):
        self.cost = cost

    def __call__(self, b: Tensor, x, y) -> Outcome:
        return Outcome(g=b, p=T.sum_(b * b, axis=2) * self.cost)
