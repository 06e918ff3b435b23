"""Context-integrated transformer mechanism.

Maps bids ``b`` (B, n, m), bidder contexts and item contexts to an
allocation ``g`` (B, n, m) and payments ``p`` (B, n). Every weight acts
per bidder-item cell or per token, so the parameter set does not depend
on n or m and the mechanism is equivariant to bidder and item permutations.

Discrete contexts are 1-based ids of shape (B, n) / (B, m); continuous
contexts are (B, n, d_x) / (B, m, d_y) arrays used as-is.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import tensor as T
from .env import SettingSpec
from .tensor import Tensor


@dataclass(frozen=True)
class NetConfig:
    context: str = "discrete"
    bidder_domain: int = 0
    item_domain: int = 0
    context_dim: int = 10
    embed_dim: int = 16
    d: int = 64
    d_h: int = 64
    heads: int = 4
    conv_hidden: int = 64
    layers: int = 2

    def __post_init__(self):
        if self.d != self.d_h:
            raise ValueError(f"d ({self.d}) must equal d_h ({self.d_h})")
        if self.d_h % self.heads:
            raise ValueError(f"d_h ({self.d_h}) must be divisible by heads ({self.heads})")
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.context not in ("discrete", "continuous"):
            raise ValueError(f"unknown context kind {self.context!r}")

    @classmethod
    def for_setting(cls, spec: SettingSpec, **overrides) -> NetConfig:
        base = dict(context=spec.context, bidder_domain=spec.bidder_domain,
                    item_domain=spec.item_domain, context_dim=spec.context_dim)
        base.update(overrides)
        return cls(**base)

    @property
    def bidder_feature_dim(self) -> int:
        return self.embed_dim if self.context == "discrete" else self.context_dim

    @property
    def item_feature_dim(self) -> int:
        return self.embed_dim if self.context == "discrete" else self.context_dim


def param_shapes(cfg: NetConfig) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    if cfg.context == "discrete":
        shapes["embed.bidder"] = (cfg.bidder_domain, cfg.embed_dim)
        shapes["embed.item"] = (cfg.item_domain, cfg.embed_dim)
    e_dim = 1 + cfg.bidder_feature_dim + cfg.item_feature_dim
    shapes["input.conv1.w"] = (e_dim, cfg.conv_hidden)
    shapes["input.conv1.b"] = (cfg.conv_hidden,)
    shapes["input.conv2.w"] = (cfg.conv_hidden, cfg.d - 1)
    shapes["input.conv2.b"] = (cfg.d - 1,)
    for k in range(cfg.layers):
        pre = f"layer{k}"
        for side in ("row", "col"):
            for w in ("query", "key", "value"):
                shapes[f"{pre}.{side}.{w}"] = (cfg.d, cfg.d_h)
            shapes[f"{pre}.{side}.mlp1.w"] = (cfg.d_h, cfg.d_h)
            shapes[f"{pre}.{side}.mlp1.b"] = (cfg.d_h,)
            shapes[f"{pre}.{side}.mlp2.w"] = (cfg.d_h, cfg.d_h)
            shapes[f"{pre}.{side}.mlp2.b"] = (cfg.d_h,)
        d_out = 3 if k == cfg.layers - 1 else cfg.d
        shapes[f"{pre}.conv3.w"] = (2 * cfg.d_h + cfg.d, cfg.conv_hidden)
        shapes[f"{pre}.conv3.b"] = (cfg.conv_hidden,)
        shapes[f"{pre}.conv4.w"] = (cfg.conv_hidden, d_out)
        shapes[f"{pre}.conv4.b"] = (d_out,)
    return shapes


def init_params(cfg: NetConfig, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    """Uniform(+-sqrt(1/fan_in)) matrices, zero biases.

    Embedding tables count as one-hot linear maps, so their fan-in is the
    table size.
    """
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            bound = np.sqrt(1.0 / shape[0])
            params[name] = rng.uniform(-bound, bound, size=shape).astype(dtype)
    return params


@dataclass
class Outcome:
    """Allocation and payments plus the intermediates they were built from."""

    g: Tensor
    p: Tensor
    h: Tensor | None = None
    q: Tensor | None = None
    p_frac: Tensor | None = None
    extras: dict = field(default_factory=dict)


# -- building blocks ---------------------------------------------------------

def embed_contexts(cfg: NetConfig, params: dict[str, Tensor], x, y) -> tuple[Tensor, Tensor]:
    """Continuous contexts pass through; discrete ids index learned tables."""
    if cfg.context == "continuous":
        x = np.asarray(x)
        y = np.asarray(y)
        if x.shape[-1] != cfg.context_dim or y.shape[-1] != cfg.context_dim:
            raise T.ShapeError("embed_contexts", x.shape, y.shape,
                               detail=f"expected trailing dim {cfg.context_dim}")
        dtype = params["input.conv1.w"].dtype
        return Tensor(x.astype(dtype, copy=False)), Tensor(y.astype(dtype, copy=False))
    x = np.asarray(x)
    y = np.asarray(y)
    if x.dtype.kind not in "iu":
        x = np.rint(x).astype(np.int64)
    if y.dtype.kind not in "iu":
        y = np.rint(y).astype(np.int64)
    return T.take_rows(params["embed.bidder"], x - 1), T.take_rows(params["embed.item"], y - 1)


def input_layer(cfg: NetConfig, params: dict[str, Tensor], b: Tensor, e_x: Tensor, f_y: Tensor) -> Tensor:
    """I = [b; Conv2(ReLU(Conv1([b; e_x; f_y])))] with shape (B, n, m, d)."""
    B, n, m = b.shape
    if e_x.shape[:2] != (B, n) or f_y.shape[:2] != (B, m):
        raise T.ShapeError("input_layer", b.shape, e_x.shape, f_y.shape)
    bids = T.reshape(b, (B, n, m, 1))
    ex = T.broadcast_to(T.reshape(e_x, (B, n, 1, e_x.shape[-1])), (B, n, m, e_x.shape[-1]))
    fy = T.broadcast_to(T.reshape(f_y, (B, 1, m, f_y.shape[-1])), (B, n, m, f_y.shape[-1]))
    E = T.concat([bids, ex, fy], axis=-1)
    hidden = T.relu(T.linear(E, params["input.conv1.w"], params["input.conv1.b"]))
    E2 = T.linear(hidden, params["input.conv2.w"], params["input.conv2.b"])
    return T.concat([bids, E2], axis=-1)


def attention(tokens: Tensor, w_query: Tensor, w_key: Tensor, w_value: Tensor,
              heads: int) -> tuple[Tensor, Tensor]:
    """Multi-head key-value self-attention over axis -2.

    Scores are plain inner products of projected query and key (no
    1/sqrt(d') scaling). Returns the concatenated head outputs
    (..., L, d_h) and the attention weights (..., H, L, L).
    """
    *lead, L, _ = tokens.shape
    d_h = w_query.shape[1]
    dp = d_h // heads

    def split(t):
        return T.transpose(T.reshape(t, (*lead, L, heads, dp)),
                           tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2))

    q = split(T.linear(tokens, w_query))
    k = split(T.linear(tokens, w_key))
    v = split(T.linear(tokens, w_value))
    k_t = k.swapaxes(-1, -2)
    alpha = T.softmax(T.matmul(q, k_t), axis=-1)
    mixed = T.matmul(alpha, v)
    nl = len(lead)
    merged = T.reshape(T.transpose(mixed, tuple(range(nl)) + (nl + 1, nl, nl + 2)), (*lead, L, d_h))
    return merged, alpha


def transformer(tokens: Tensor, params: dict[str, Tensor], prefix: str, heads: int) -> Tensor:
    mixed, _ = attention(tokens, params[f"{prefix}.query"], params[f"{prefix}.key"],
                         params[f"{prefix}.value"], heads)
    hidden = T.relu(T.linear(mixed, params[f"{prefix}.mlp1.w"], params[f"{prefix}.mlp1.b"]))
    return T.linear(hidden, params[f"{prefix}.mlp2.w"], params[f"{prefix}.mlp2.b"])


def interaction_layer(cfg: NetConfig, params: dict[str, Tensor], I: Tensor, k: int) -> Tensor:
    pre = f"layer{k}"
    B, n, m, d = I.shape
    row = transformer(I, params, f"{pre}.row", cfg.heads)
    col = transformer(I.swapaxes(1, 2), params, f"{pre}.col", cfg.heads).swapaxes(1, 2)
    glob = T.broadcast_to(T.mean(I, axis=(1, 2), keepdims=True), (B, n, m, d))
    joined = T.concat([row, col, glob], axis=-1)
    hidden = T.relu(T.linear(joined, params[f"{pre}.conv3.w"], params[f"{pre}.conv3.b"]))
    return T.linear(hidden, params[f"{pre}.conv4.w"], params[f"{pre}.conv4.b"])


def output_layer(F: Tensor, b: Tensor) -> Outcome:
    h = T.softmax(F[..., 0], axis=1)
    q = T.sigmoid(F[..., 1])
    g = q * h
    p_frac = T.sigmoid(T.mean(F[..., 2], axis=2))
    p = p_frac * T.sum_(g * b, axis=2)
    return Outcome(g=g, p=p, h=h, q=q, p_frac=p_frac)


def forward(cfg: NetConfig, params: dict[str, Tensor], b, x, y) -> Outcome:
    b = T.as_tensor(b)
    if b.ndim == 2:
        b = T.reshape(b, (1,) + b.shape)
        x = np.asarray(x)[None]
        y = np.asarray(y)[None]
    if len(x) != b.shape[0] or len(y) != b.shape[0]:
        raise T.ShapeError("forward", b.shape, np.shape(x), np.shape(y), detail="batch sizes differ")
    e_x, f_y = embed_contexts(cfg, params, x, y)
    I = input_layer(cfg, params, b, e_x, f_y)
    for k in range(cfg.layers):
        I = interaction_layer(cfg, params, I, k)
    return output_layer(I, b)


class MechanismNet:
    """Parameters plus config; calling it runs :func:`forward`."""

    def __init__(self, cfg: NetConfig, params: dict[str, np.ndarray] | None = None, seed: int = 0):
        self.cfg = cfg
        if params is None:
            params = init_params(cfg, np.random.default_rng(seed))
        expected = param_shapes(cfg)
        if set(params) != set(expected):
            raise ValueError(f"parameter names mismatch: {sorted(set(params) ^ set(expected))}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ValueError(f"{name}: shape {params[name].shape}, expected {shape}")
        self.params = params

    def tensors(self, requires_grad: bool = False) -> dict[str, Tensor]:
        return {k: Tensor(v, requires_grad=requires_grad) for k, v in self.params.items()}

    def __call__(self, b, x, y, params: dict[str, Tensor] | None = None) -> Outcome:
        return forward(self.cfg, params if params is not None else self.tensors(), b, x, y)

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def save(self, path: str | Path, extra: dict | None = None) -> None:
        save_checkpoint(path, self.params, {"net": asdict(self.cfg), **(extra or {})})

    @classmethod
    def load(cls, path: str | Path) -> MechanismNet:
        params, meta = load_checkpoint(path)
        return cls(NetConfig(**meta["net"]), params)


# -- checkpoint container ------------------------------------------------------

_CKPT_MAGIC = "auction-forge-checkpoint"


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], meta: dict) -> None:
    """One JSON manifest line (name, shape, byte offset per tensor), then a float32 LE blob."""
    entries = []
    offset = 0
    for name in sorted(params):
        arr = params[name]
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 4
    manifest = {"format": _CKPT_MAGIC, "version": 1, "meta": meta, "tensors": entries, "nbytes": offset}
    with open(path, "wb") as fh:
        fh.write((json.dumps(manifest, sort_keys=True) + "\n").encode())
        for name in sorted(params):
            fh.write(np.ascontiguousarray(params[name], dtype="<f4").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    cut = raw.index(b"\n")
    manifest = json.loads(raw[:cut])
    if manifest.get("format") != _CKPT_MAGIC:
        raise ValueError(f"{path}: not an auction-forge checkpoint")
    blob = raw[cut + 1:]
    if len(blob) != manifest["nbytes"]:
        raise ValueError(f"{path}: blob has {len(blob)} bytes, manifest says {manifest['nbytes']}")
    params = {}
    for e in manifest["tensors"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=e["offset"])
        params[e["name"]] = arr.reshape(e["shape"]).astype(np.float32)
    return params, manifest["meta"]
