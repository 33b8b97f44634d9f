"""Adam with bias correction, written as a pure update."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray], **hyper) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **hyper,
        )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    """One Adam update. Inputs are left untouched; new dicts are returned."""
    if params.keys() != grads.keys() or params.keys() != state.m.keys():
        raise ValueError("adam_step: parameter, gradient and state names differ")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    new_params, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape or state.m[k].shape != p.shape:
            raise ValueError(
                f"adam_step: shape mismatch for {k!r}: param {p.shape}, "
                f"grad {g.shape}, moment {state.m[k].shape}"
            )
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * (g * g)
        new_params[k] = p - (state.lr / c1) * m / (np.sqrt(v) * (1.0 / math.sqrt(c2)) + state.eps)
        new_m[k] = m
        new_v[k] = v
    return new_params, replace(state, m=new_m, v=new_v, t=t)
