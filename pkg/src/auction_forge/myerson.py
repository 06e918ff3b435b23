"""Item-wise Myerson auction from the conditional value laws.

For every (bidder, item) cell the ironed virtual value is tabulated on a
uniform grid over the cell's value support. Each item goes to the bidder
with the largest positive ironed virtual value, who pays the smallest bid
that would still have won.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from . import tensor as T
from .env import SampleBatch, SettingSpec, TruncExponential, TruncNormal, Uniform, conditional_law
from .net import Outcome

GRID_SIZE = 2048
BISECT_TOL = 1e-6


def inverse_hazard(law, t: np.ndarray) -> np.ndarray:
    """(1 - F(t)) / f(t), in closed form where cancellation would bite."""
    if isinstance(law, Uniform):
        return law.hi - t
    if isinstance(law, TruncExponential):
        return -np.expm1(-law.rate * (law.hi - t)) / law.rate
    if isinstance(law, TruncNormal):
        z = (t - law.mu) / law.sd
        zb = (law.hi - law.mu) / law.sd
        # log(Phi(zb) - Phi(z)) through upper tails, minus the log normal density
        la, lb = special.log_ndtr(-z), special.log_ndtr(-zb)
        log_dens = -0.5 * z * z - 0.5 * np.log(2 * np.pi)
        with np.errstate(divide="ignore"):
            log_tail = la + np.log1p(-np.exp(np.minimum(lb - la, 0.0)))
            return law.sd * np.exp(log_tail - log_dens)
    cdf = np.asarray(law.cdf(t), dtype=np.float64)
    pdf = np.asarray(law.pdf(t), dtype=np.float64)
    inner = pdf[..., :-1]
    if np.any(inner <= 0):
        bad = float(np.broadcast_to(t, pdf.shape)[..., :-1][inner <= 0].ravel()[0])
        raise ValueError(f"density is zero inside the support (at t={bad:.6g}); cannot form virtual values")
    out = np.zeros(pdf.shape)
    out[..., :-1] = (1 - cdf[..., :-1]) / inner
    return out


def iron(u: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Monotone virtual values from the convex hull of the integrated virtual value in quantile space."""
    H = np.concatenate([[0.0], np.cumsum(0.5 * (phi[1:] + phi[:-1]) * np.diff(u))])
    hull: list[int] = []
    for k in range(len(u)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it lies on or above the chord a -> k
            if (H[b] - H[a]) * (u[k] - u[a]) >= (H[k] - H[a]) * (u[b] - u[a]):
                hull.pop()
            else:
                break
        hull.append(k)
    out = phi.copy()
    for a, b in zip(hull[:-1], hull[1:]):
        if b > a + 1 and u[b] > u[a]:
            out[a + 1:b] = (H[b] - H[a]) / (u[b] - u[a])
    return np.maximum.accumulate(out)


@dataclass
class VirtualValueTable:
    """K ironed virtual-value curves, each on a uniform grid over [lo_k, hi_k]."""

    lo: np.ndarray
    hi: np.ndarray
    phi: np.ndarray
    phi_raw: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        G = self.phi.shape[1]
        return self.lo[:, None] + (self.hi - self.lo)[:, None] * np.linspace(0, 1, G)[None, :]

    def __len__(self) -> int:
        return len(self.lo)

    def value(self, rows: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Ironed virtual value of row ``rows`` at ``t`` (linear interpolation, clamped to the support)."""
        rows = np.asarray(rows)
        t = np.asarray(t, dtype=np.float64)
        G = self.phi.shape[1]
        lo, hi = self.lo[rows], self.hi[rows]
        span = np.where(hi > lo, hi - lo, 1.0)
        pos = np.clip((t - lo) / span, 0.0, 1.0) * (G - 1)
        k = np.minimum(np.floor(pos).astype(np.int64), G - 2)
        frac = pos - k
        return self.phi[rows, k] * (1 - frac) + self.phi[rows, k + 1] * frac

    def threshold(self, rows: np.ndarray, level: np.ndarray, upper: np.ndarray) -> np.ndarray:
        """Smallest t in [lo, upper] with value(t) >= level, by bisection to BISECT_TOL."""
        rows = np.asarray(rows)
        a = self.lo[rows].astype(np.float64).copy()
        b = np.asarray(upper, dtype=np.float64).copy()
        done = self.value(rows, a) >= level
        b = np.where(done, a, b)
        while np.any(b - a > BISECT_TOL):
            mid = 0.5 * (a + b)
            ok = self.value(rows, mid) >= level
            b = np.where(ok, mid, b)
            a = np.where(ok, a, mid)
        return b

    @classmethod
    def concat(cls, tables: list[VirtualValueTable]) -> VirtualValueTable:
        return cls(*(np.concatenate([getattr(t, f) for t in tables]) for f in ("lo", "hi", "phi", "phi_raw")))


def build_virtual_values(law, grid_size: int = GRID_SIZE) -> VirtualValueTable:
    """Tabulate and iron virtual values for a law with ``support``, ``cdf`` and ``pdf``.

    Laws whose parameters are (K, 1) columns give K rows.
    """
    lo, hi = (np.asarray(s, dtype=np.float64) for s in law.support)
    t = lo + (hi - lo) * np.linspace(0.0, 1.0, grid_size)
    cdf = np.asarray(law.cdf(t), dtype=np.float64)
    shape = np.broadcast_shapes(np.shape(t), cdf.shape)
    t = np.broadcast_to(t, shape).reshape(-1, grid_size)
    cdf = np.broadcast_to(cdf, shape).reshape(-1, grid_size)
    ih = np.broadcast_to(inverse_hazard(law, t.reshape(shape)), shape).reshape(-1, grid_size).copy()
    ih[:, -1] = 0.0
    phi_raw = t - ih
    phi = np.empty_like(phi_raw)
    for k in range(len(phi)):
        row = phi_raw[k]
        phi[k] = row if np.all(np.diff(row) >= -1e-12) else iron(cdf[k], row)
    return VirtualValueTable(t[:, 0].copy(), t[:, -1].copy(), phi, phi_raw)


# -- laws for a whole setting -------------------------------------------------

def _cell_tables(spec: SettingSpec, x: np.ndarray, y: np.ndarray,
                 cache: dict | None = None) -> tuple[VirtualValueTable, np.ndarray]:
    """Tables covering every (sample, bidder, item) cell and the row index of each cell."""
    B, n = x.shape[:2]
    m = y.shape[1]
    if spec.discrete:
        bidder_dep = spec.law == "truncnorm_or_exp" and spec.exp_rate_index == "bidder"
        bid_idx = np.broadcast_to(np.arange(n)[None, :, None], (B, n, m)) if bidder_dep else np.zeros((B, n, m), int)
        keys = np.stack([bid_idx, np.broadcast_to(x[:, :, None], (B, n, m)),
                         np.broadcast_to(y[:, None, :], (B, n, m))], axis=-1).reshape(-1, 3)
        uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
        cache = {} if cache is None else cache
        tables = []
        for key in map(tuple, uniq.tolist()):
            if key not in cache:
                cache[key] = build_virtual_values(conditional_law(spec, key[1], key[2], key[0]))
            tables.append(cache[key])
        return VirtualValueTable.concat(tables), inverse.reshape(B, n, m)
    if spec.law != "uniform_sigmoid":
        raise ValueError(f"no Myerson tables for law {spec.law!r}")
    s = special.expit(np.einsum("bik,bjk->bij", x.astype(np.float64), y.astype(np.float64))).reshape(-1, 1)
    table = build_virtual_values(Uniform(np.zeros_like(s), s))
    return table, np.arange(B * n * m).reshape(B, n, m)


def myerson_outcome(values: np.ndarray, table: VirtualValueTable, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Allocation (B, n, m) in {0, 1} and payments (B, n) for bids ``values``."""
    B, n, m = values.shape
    phi = table.value(rows, values)
    winner = np.argmax(phi, axis=1)                          # lowest index on ties
    top = np.take_along_axis(phi, winner[:, None, :], axis=1)[:, 0, :]
    sold = top > 0
    if n > 1:
        masked = phi.copy()
        np.put_along_axis(masked, winner[:, None, :], -np.inf, axis=1)
        second = masked.max(axis=1)
    else:
        second = np.full((B, m), -np.inf)
    level = np.maximum(second, 0.0)
    bb, jj = np.nonzero(sold)
    ww = winner[bb, jj]
    price = table.threshold(rows[bb, ww, jj], level[bb, jj], values[bb, ww, jj])
    g = np.zeros((B, n, m))
    g[bb, ww, jj] = 1.0
    pay = np.zeros((B, n))
    np.add.at(pay, (bb, ww), price)
    return g, pay


def run_item_wise_myerson(spec: SettingSpec, v: np.ndarray, x: np.ndarray, y: np.ndarray,
                          cache: dict | None = None) -> Outcome:
    table, rows = _cell_tables(spec, x, y, cache)
    g, p = myerson_outcome(np.asarray(v, dtype=np.float64), table, rows)
    return Outcome(g=T.Tensor(g.astype(np.float32)), p=T.Tensor(p.astype(np.float32)))


class ItemWiseMyerson:
    """Mechanism wrapper; outputs are constants, so bid gradients are zero."""

    tag = "item_wise_myerson"

    def __init__(self, spec: SettingSpec):
        self.spec = spec
        self._cache: dict = {}

    def __call__(self, b, x, y) -> Outcome:
        vals = b.data if isinstance(b, T.Tensor) else np.asarray(b)
        spec = self.spec.resized(vals.shape[1], vals.shape[2])
        return run_item_wise_myerson(spec, vals, np.asarray(x), np.asarray(y), self._cache)


def baseline_revenue(spec: SettingSpec, data: SampleBatch, chunk: int = 1000) -> float:
    mech = ItemWiseMyerson(spec)
    total = 0.0
    for start in range(0, len(data), chunk):
        sl = slice(start, start + chunk)
        total += float(mech(data.v[sl], data.x[sl], data.y[sl]).p.data.astype(np.float64).sum())
    return total / len(data)
