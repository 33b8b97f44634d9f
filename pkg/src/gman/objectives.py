"""Minimax value, generator losses and the optimal-discriminator oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import rel_entr

from .autodiff import Graph, Tensor, _sigmoid

LOG4 = np.log(4.0)
LOSS_MODES = ("original", "modified")


def squashed_sigmoid(z, eps: float = 0.01):
    """Logistic sigmoid affinely compressed into ``[eps, 1 - eps]``."""
    _check_eps(eps)
    return eps + (1.0 - 2.0 * eps) * _sigmoid(np.asarray(z, dtype=np.float64))


def squash(g: Graph, logits: Tensor, eps: float = 0.01) -> Tensor:
    """Graph version of :func:`squashed_sigmoid`."""
    _check_eps(eps)
    return g.squashed_sigmoid(logits, eps)


def _check_eps(eps: float) -> None:
    if not 0.0 <= eps < 0.5:
        raise ValueError(f"squashing eps must lie in [0, 0.5), got {eps}")


def _check_open_unit(p: np.ndarray, what: str) -> None:
    if p.size and (p.min() <= 0.0 or p.max() >= 1.0):
        raise ValueError(f"{what}: discriminator outputs must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class ValueEstimate:
    v: float
    real_term: float
    fake_term: float


def value_estimate(d_real, d_fake) -> ValueEstimate:
    """Batch estimate of ``E log D(x) + E log(1 - D(G(z)))``."""
    d_real = np.asarray(d_real, dtype=np.float64)
    d_fake = np.asarray(d_fake, dtype=np.float64)
    _check_open_unit(d_real, "value_estimate")
    _check_open_unit(d_fake, "value_estimate")
    real_term = float(np.mean(np.log(d_real)))
    fake_term = float(np.mean(np.log1p(-d_fake)))
    return ValueEstimate(real_term + fake_term, real_term, fake_term)


def value_node(g: Graph, d_real: Tensor, d_fake: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Differentiable ``(v, real_term, fake_term)`` from squashed outputs."""
    _check_open_unit(d_real.data, "value_node")
    _check_open_unit(d_fake.data, "value_node")
    real_term = g.mean(g.log(d_real))
    fake_term = g.mean(g.log(g.sub(g.constant(1.0), d_fake)))
    return g.add(real_term, fake_term), real_term, fake_term


def generator_loss(g: Graph, d_fake: Tensor, mode: str = "original") -> Tensor:
    """Generator loss on discriminator outputs for generated samples.

    ``original`` is ``mean log(1 - D)``; ``modified`` is ``mean -log D``.
    The generator descends either one.
    """
    _check_open_unit(d_fake.data, "generator_loss")
    if mode == "original":
        return g.mean(g.log(g.sub(g.constant(1.0), d_fake)))
    if mode == "modified":
        return g.neg(g.mean(g.log(d_fake)))
    raise ValueError(f"unknown generator loss mode {mode!r}")


@dataclass(frozen=True)
class DiscreteDistPair:
    p_data: np.ndarray
    p_g: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_data, dtype=np.float64)
        q = np.asarray(self.p_g, dtype=np.float64)
        for name, vec in (("p_data", p), ("p_g", q)):
            if vec.ndim != 1 or vec.size == 0:
                raise ValueError(f"{name} must be a non-empty vector")
            if np.any(vec < 0) or abs(vec.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} is not a probability vector")
        if p.shape != q.shape:
            raise ValueError("p_data and p_g must share a support")
        object.__setattr__(self, "p_data", p)
        object.__setattr__(self, "p_g", q)


def jsd(p, q) -> float:
    """Jensen-Shannon divergence in nats, via the mixture KL form."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)
    return float(0.5 * rel_entr(p, m).sum() + 0.5 * rel_entr(q, m).sum())


def optimal_discriminator_value(pair: DiscreteDistPair) -> tuple[float, float]:
    """Value of the game at ``D* = p_data / (p_data + p_g)`` and the JSD.

    Points outside both supports are skipped. Returns ``(v_star, jsd)``;
    the two satisfy ``v_star = -log 4 + 2 jsd``.
    """
    p, q = pair.p_data, pair.p_g
    v_star = 0.0
    for pi, qi in zip(p, q):
        total = pi + qi
        if total == 0.0:
            continue
        d = pi / total
        if pi > 0.0:
            v_star += pi * np.log(d)
        if qi > 0.0:
            v_star += qi * np.log(qi / total)
    return float(v_star), jsd(p, q)
