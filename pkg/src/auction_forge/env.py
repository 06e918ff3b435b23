"""Contextual auction settings A-I: context samplers, value laws, datasets.

Discrete context ids are 1-based, as in the setting definitions
(``x_i in {1..5}`` for Setting A). Continuous contexts live in
``[-1, 1]^10``.
"""

from __future__ import annotations

import csv
import io
import json
import zlib
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy import special

DISCRETE = "discrete"
CONTINUOUS = "continuous"


@dataclass(frozen=True)
class SettingSpec:
    id: str
    n: int
    m: int
    context: str
    law: str
    bidder_domain: int = 0
    item_domain: int = 0
    context_dim: int = 10
    sd: float = 0.0
    # Setting B only: which index drives the exponential rate i/6 when y = 2
    exp_rate_index: str = "bidder"

    @property
    def discrete(self) -> bool:
        return self.context == DISCRETE

    def resized(self, n: int, m: int) -> SettingSpec:
        """Same context and value law at a different auction size."""
        if n < 1 or m < 1:
            raise ValueError(f"setting {self.id}: cannot extend to n={n}, m={m}")
        if self.law not in _LAWS:
            raise ValueError(f"setting {self.id}: law {self.law!r} does not extend to other sizes")
        return replace(self, n=n, m=m)


SETTINGS: dict[str, SettingSpec] = {
    "A": SettingSpec("A", 3, 1, DISCRETE, "truncnorm_sixth", bidder_domain=5, item_domain=1, sd=0.1),
    "B": SettingSpec("B", 3, 1, DISCRETE, "truncnorm_or_exp", bidder_domain=5, item_domain=2, sd=0.1),
    "C": SettingSpec("C", 5, 1, CONTINUOUS, "uniform_sigmoid"),
    "D": SettingSpec("D", 2, 5, DISCRETE, "truncnorm_mod", bidder_domain=10, item_domain=10, sd=0.05),
    "E": SettingSpec("E", 3, 10, DISCRETE, "truncnorm_mod", bidder_domain=10, item_domain=10, sd=0.05),
    "F": SettingSpec("F", 5, 10, DISCRETE, "truncnorm_mod", bidder_domain=10, item_domain=10, sd=0.05),
    "G": SettingSpec("G", 2, 5, CONTINUOUS, "uniform_sigmoid"),
    "H": SettingSpec("H", 3, 10, CONTINUOUS, "uniform_sigmoid"),
    "I": SettingSpec("I", 5, 10, CONTINUOUS, "uniform_sigmoid"),
}

_LAWS = {"truncnorm_sixth", "truncnorm_or_exp", "uniform_sigmoid", "truncnorm_mod"}


def get_setting(setting_id: str) -> SettingSpec:
    try:
        return SETTINGS[setting_id.upper()]
    except KeyError:
        raise ValueError(f"unknown setting {setting_id!r}; expected one of {', '.join(SETTINGS)}") from None


def make_rng(seed: int, label: str) -> np.random.Generator:
    """Independent generator for a labelled stream under one master seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), zlib.crc32(label.encode())]))


# -- one-dimensional laws on value space ------------------------------------

class TruncNormal:
    """Normal(mu, sd) truncated to [lo, hi]; array-valued parameters broadcast."""

    def __init__(self, mu, sd, lo=0.0, hi=1.0):
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sd = np.asarray(sd, dtype=np.float64)
        self.lo, self.hi = lo, hi
        self._a = special.ndtr((lo - self.mu) / self.sd)
        self._z = special.ndtr((hi - self.mu) / self.sd) - self._a

    @property
    def support(self):
        return self.lo, self.hi

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=np.float64), self.lo, self.hi)
        return np.clip((special.ndtr((t - self.mu) / self.sd) - self._a) / self._z, 0.0, 1.0)

    def pdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        z = (t - self.mu) / self.sd
        dens = np.exp(-0.5 * z * z) / (np.sqrt(2 * np.pi) * self.sd * self._z)
        return np.where((t >= self.lo) & (t <= self.hi), dens, 0.0)

    def ppf(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.clip(self.mu + self.sd * special.ndtri(self._a + u * self._z), self.lo, self.hi)


class TruncExponential:
    """Density proportional to ``rate * exp(-rate t)`` on [0, hi]."""

    def __init__(self, rate, hi=1.0):
        self.rate = np.asarray(rate, dtype=np.float64)
        self.hi = hi
        self._z = -np.expm1(-self.rate * hi)

    @property
    def support(self):
        return 0.0, self.hi

    def cdf(self, t):
        t = np.clip(np.asarray(t, dtype=np.float64), 0.0, self.hi)
        return -np.expm1(-self.rate * t) / self._z

    def pdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        dens = self.rate * np.exp(-self.rate * t) / self._z
        return np.where((t >= 0) & (t <= self.hi), dens, 0.0)

    def ppf(self, u):
        u = np.asarray(u, dtype=np.float64)
        return np.clip(-np.log1p(-u * self._z) / self.rate, 0.0, self.hi)


class Uniform:
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)

    @property
    def support(self):
        return self.lo, self.hi

    def cdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.clip((t - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def pdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        return np.where((t >= self.lo) & (t <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def ppf(self, u):
        return self.lo + np.asarray(u, dtype=np.float64) * (self.hi - self.lo)


def _sigmoid(z):
    return special.expit(z)


def value_upper_bound(spec: SettingSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Upper end of each v_ij's support, shape (..., n, m)."""
    if spec.law == "uniform_sigmoid":
        return _sigmoid(np.einsum("...ik,...jk->...ij", np.asarray(x, np.float64), np.asarray(y, np.float64)))
    x = np.asarray(x)
    y = np.asarray(y)
    return np.ones(x.shape[:-1] + (x.shape[-1], y.shape[-1]))


def conditional_law(spec: SettingSpec, x_i, y_j, bidder: int = 0):
    """Law of v_ij given one bidder context, one item context and the 0-based bidder index."""
    if spec.law == "truncnorm_sixth":
        return TruncNormal(float(x_i) / 6.0, spec.sd)
    if spec.law == "truncnorm_or_exp":
        if int(y_j) == 1:
            return TruncNormal(float(x_i) / 6.0, spec.sd)
        k = bidder + 1 if spec.exp_rate_index == "bidder" else int(x_i)
        return TruncExponential(k / 6.0)
    if spec.law == "truncnorm_mod":
        return TruncNormal(((int(x_i) + int(y_j)) % 10 + 1) / 11.0, spec.sd)
    if spec.law == "uniform_sigmoid":
        s = float(_sigmoid(np.dot(np.asarray(x_i, np.float64), np.asarray(y_j, np.float64))))
        return Uniform(0.0, s)
    raise ValueError(f"no conditional law for setting {spec.id} ({spec.law})")


def conditional_cdf(spec: SettingSpec, x_i, y_j, t, bidder: int = 0):
    return conditional_law(spec, x_i, y_j, bidder).cdf(t)


def conditional_pdf(spec: SettingSpec, x_i, y_j, t, bidder: int = 0):
    return conditional_law(spec, x_i, y_j, bidder).pdf(t)


# -- samplers --------------------------------------------------------------

def sample_contexts(spec: SettingSpec, count: int, rng: np.random.Generator):
    """Draw ``count`` context profiles; returns (x, y) with a leading sample axis."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if spec.discrete:
        x = rng.integers(1, spec.bidder_domain + 1, size=(count, spec.n))
        y = rng.integers(1, spec.item_domain + 1, size=(count, spec.m))
        return x.astype(np.int64), y.astype(np.int64)
    x = rng.uniform(-1.0, 1.0, size=(count, spec.n, spec.context_dim))
    y = rng.uniform(-1.0, 1.0, size=(count, spec.m, spec.context_dim))
    return x.astype(np.float32), y.astype(np.float32)


def sample_valuations(spec: SettingSpec, x: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One value per (sample, bidder, item) by inverse CDF of its conditional law."""
    count = x.shape[0]
    n, m = x.shape[1], y.shape[1]
    u = rng.random(size=(count, n, m))
    if spec.law == "uniform_sigmoid":
        v = u * value_upper_bound(spec, x, y)
    elif spec.law in ("truncnorm_sixth", "truncnorm_or_exp"):
        xs = np.broadcast_to(x[:, :, None], (count, n, m)).astype(np.float64)
        v = TruncNormal(xs / 6.0, spec.sd).ppf(u)
        if spec.law == "truncnorm_or_exp":
            if spec.exp_rate_index == "bidder":
                k = np.broadcast_to(np.arange(1, n + 1)[None, :, None], (count, n, m))
            else:
                k = xs
            v_exp = TruncExponential(k / 6.0).ppf(u)
            v = np.where(y[:, None, :] == 2, v_exp, v)
    elif spec.law == "truncnorm_mod":
        mu = ((x[:, :, None] + y[:, None, :]) % 10 + 1) / 11.0
        v = TruncNormal(mu, spec.sd).ppf(u)
    else:
        raise ValueError(f"no sampler for law {spec.law!r}")
    return np.clip(v, 0.0, None).astype(np.float32)


@dataclass
class SampleBatch:
    spec: SettingSpec
    v: np.ndarray
    x: np.ndarray
    y: np.ndarray
    seed: int

    def __len__(self) -> int:
        return self.v.shape[0]

    @property
    def n(self) -> int:
        return self.v.shape[1]

    @property
    def m(self) -> int:
        return self.v.shape[2]

    def subset(self, index) -> SampleBatch:
        return SampleBatch(self.spec, self.v[index], self.x[index], self.y[index], self.seed)

    def upper_bound(self) -> np.ndarray:
        return value_upper_bound(self.spec, self.x, self.y).astype(np.float32)


def generate_dataset(spec: SettingSpec, count: int, seed: int) -> SampleBatch:
    x, y = sample_contexts(spec, count, make_rng(seed, "contexts"))
    v = sample_valuations(spec, x, y, make_rng(seed, "values"))
    return SampleBatch(spec, v, x, y, seed)


# -- dataset files ---------------------------------------------------------

_MAGIC = "auction-forge-dataset"


def save_dataset(batch: SampleBatch, path: str | Path) -> None:
    """Write a JSON header line, then one float32 little-endian row (x, y, v) per sample."""
    header = {
        "format": _MAGIC, "version": 1, "setting": batch.spec.id,
        "n": batch.n, "m": batch.m, "count": len(batch), "seed": int(batch.seed),
        "spec": asdict(batch.spec),
        "x_shape": list(batch.x.shape[1:]), "y_shape": list(batch.y.shape[1:]),
    }
    count = len(batch)
    rows = np.concatenate([
        batch.x.reshape(count, -1).astype("<f4"),
        batch.y.reshape(count, -1).astype("<f4"),
        batch.v.reshape(count, -1).astype("<f4"),
    ], axis=1)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(rows.tobytes())


def load_dataset(path: str | Path) -> SampleBatch:
    raw = Path(path).read_bytes()
    cut = raw.index(b"\n")
    header = json.loads(raw[:cut])
    if header.get("format") != _MAGIC:
        raise ValueError(f"{path}: not an auction-forge dataset")
    spec = SettingSpec(**header["spec"])
    count, n, m = header["count"], header["n"], header["m"]
    xs, ys = tuple(header["x_shape"]), tuple(header["y_shape"])
    rows = np.frombuffer(raw[cut + 1:], dtype="<f4").reshape(count, -1)
    nx, ny = int(np.prod(xs)), int(np.prod(ys))
    x = rows[:, :nx].reshape((count,) + xs)
    y = rows[:, nx:nx + ny].reshape((count,) + ys)
    v = rows[:, nx + ny:].reshape(count, n, m).astype(np.float32)
    if spec.discrete:
        x = np.rint(x).astype(np.int64)
        y = np.rint(y).astype(np.int64)
    else:
        x = x.astype(np.float32)
        y = y.astype(np.float32)
    return SampleBatch(spec, v, x, y, header["seed"])


def dataset_csv(batch: SampleBatch) -> str:
    """Flattened CSV view: one row per sample, columns x*, y*, v_i_j."""
    count = len(batch)
    xf = batch.x.reshape(count, -1)
    yf = batch.y.reshape(count, -1)
    cols = ([f"x{k}" for k in range(xf.shape[1])] + [f"y{k}" for k in range(yf.shape[1])]
            + [f"v_{i}_{j}" for i in range(batch.n) for j in range(batch.m)])
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(cols)
    for k in range(count):
        w.writerow([*xf[k].tolist(), *yf[k].tolist(), *batch.v[k].reshape(-1).tolist()])
    return buf.getvalue()
