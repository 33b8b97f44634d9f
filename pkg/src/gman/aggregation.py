"""Combining per-discriminator values into the generator's objective.

Soft kinds are softmax-weighted arithmetic, geometric and harmonic means of
negative values, with temperature ``lam``; ``lam = 0`` gives the plain mean
and ``lam -> inf`` approaches the max. ``max`` is the hard maximum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Graph, Tensor

KINDS = ("max", "am", "gm", "hm")
SOFT_KINDS = ("am", "gm", "hm")
LAMBDA_MODES = ("fixed", "learned")


@dataclass(frozen=True)
class AggregationConfig:
    kind: str = "am"
    lambda_mode: str = "fixed"
    lam: float = 0.0
    Lambda_init: float = -2.0
    c: float = 0.001

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown aggregation kind {self.kind!r}")
        if self.lambda_mode not in LAMBDA_MODES:
            raise ValueError(f"unknown lambda mode {self.lambda_mode!r}")
        if self.lambda_mode == "fixed" and self.lam < 0:
            raise ValueError(f"fixed lambda must be >= 0, got {self.lam}")
        if self.lambda_mode == "learned":
            if self.kind not in SOFT_KINDS:
                raise ValueError("a learned temperature needs a soft aggregation kind")
            if self.c <= 0:
                raise ValueError(f"regulation constant c must be > 0, got {self.c}")

    @property
    def learned(self) -> bool:
        return self.lambda_mode == "learned"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lambda_mode": self.lambda_mode,
            "lam": self.lam,
            "Lambda_init": self.Lambda_init,
            "c": self.c,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AggregationConfig":
        return cls(**d)


def lambda_reparam(Lambda):
    """Softplus ``log(1 + e^Lambda)``; always positive."""
    return np.logaddexp(0.0, Lambda)


def lambda_reparam_grad(Lambda):
    """Derivative of :func:`lambda_reparam`, the logistic function."""
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(Lambda, dtype=np.float64)))


def _check_values(V: np.ndarray, kind: str) -> None:
    if V.ndim != 1 or V.size == 0:
        raise ValueError("aggregation needs a non-empty vector of values")
    if kind in SOFT_KINDS and np.any(V >= 0):
        raise ValueError(f"soft aggregation requires every V_i < 0, got {V.tolist()}")


def softmax_weights(V, lam: float) -> np.ndarray:
    """``w_i = exp(lam V_i) / sum_j exp(lam V_j)`` with max-subtraction."""
    V = np.asarray(V, dtype=np.float64)
    _check_values(V, "am")
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    z = lam * V
    e = np.exp(z - z.max())
    return e * (1.0 / e.sum())


def weights_node(g: Graph, V: Tensor, lam: Tensor) -> Tensor:
    z = g.mul(V, lam)
    e = g.exp(g.sub(z, g.constant(z.data.max())))
    return g.mul(e, g.reciprocal(g.sum(e)))


def aggregate_node(g: Graph, V: Tensor, kind: str, lam) -> Tensor:
    """Differentiable aggregate of the 1-D tensor ``V``.

    ``lam`` may be a float or a scalar tensor (learned temperature).
    """
    _check_values(V.data, kind)
    if kind == "max":
        return g.max(V)
    if not isinstance(lam, Tensor):
        if lam < 0:
            raise ValueError(f"lambda must be >= 0, got {lam}")
        lam = g.constant(lam)
    w = weights_node(g, V, lam)
    if kind == "am":
        return g.sum(g.mul(w, V))
    if kind == "gm":
        logs = g.log(g.neg(V))
        return g.neg(g.exp(g.sum(g.mul(w, logs))))
    if kind == "hm":
        return g.reciprocal(g.sum(g.mul(w, g.reciprocal(V))))
    raise ValueError(f"unknown aggregation kind {kind!r}")


def aggregate(V, kind: str, lam: float = 0.0) -> float:
    """Plain-number aggregate.

    Performs the same floating-point operations, in the same order, as
    :func:`aggregate_node`, so both give identical results without the cost
    of building a graph.
    """
    V = np.asarray(V, dtype=np.float64)
    _check_values(V, kind)
    if kind == "max":
        return float(V.max())
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam}")
    z = V * np.float64(lam)
    e = np.exp(z - z.max())
    w = e * (1.0 / e.sum())
    if kind == "am":
        return float((w * V).sum())
    if kind == "gm":
        return float(-np.exp((w * np.log(-V)).sum()))
    if kind == "hm":
        return float(1.0 / (w * (1.0 / V)).sum())
    raise ValueError(f"unknown aggregation kind {kind!r}")


def gman_star_node(g: Graph, V: Tensor, Lambda: Tensor, c: float, kind: str) -> tuple[Tensor, Tensor]:
    """``F(V, softplus(Lambda)) - c * softplus(Lambda)`` and the temperature node."""
    if kind not in SOFT_KINDS:
        raise ValueError("the learned-temperature objective needs a soft kind")
    lam = g.softplus(Lambda)
    F = aggregate_node(g, V, kind, lam)
    return g.sub(F, g.mul(g.constant(c), lam)), lam


def gman_star_objective(V, Lambda: float, c: float, kind: str) -> float:
    g = Graph()
    out, _ = gman_star_node(g, g.constant(np.asarray(V, dtype=np.float64)),
                            g.constant(Lambda), c, kind)
    return out.item()
