"""Adam with bias correction, over named numpy arrays."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> dict[str, np.ndarray]:
    """One Adam update. Returns new parameter arrays; ``state`` is advanced in place.

    Moments are created lazily (zeros) the first time a name is seen.
    """
    for name, p in params.items():
        if name not in grads:
            raise KeyError(f"adam_step: no gradient for parameter {name!r}")
        if grads[name].shape != p.shape:
            raise ValueError(f"adam_step: gradient for {name!r} has shape "
                             f"{grads[name].shape}, parameter has {p.shape}")
        m = state.first_moment.get(name)
        if m is not None and m.shape != p.shape:
            raise ValueError(f"adam_step: moment for {name!r} has shape {m.shape}, parameter has {p.shape}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    new = {}
    for name, p in params.items():
        g = grads[name]
        m = state.first_moment.get(name)
        v = state.second_moment.get(name)
        if m is None:
            m = np.zeros_like(p)
            v = np.zeros_like(p)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * (g * g)
        state.first_moment[name] = m
        state.second_moment[name] = v
        update = state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        new[name] = (p - update).astype(p.dtype, copy=False)
    return new
