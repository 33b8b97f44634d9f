"""Building diverse discriminator ensembles and routing minibatches to them."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import streams
from .nn import MLP, NetworkSpec
from .optim import AdamState

SPLIT_MODES = ("shared", "disjoint")


@dataclass(frozen=True)
class EnsembleConfig:
    n: int = 1
    dropout_range: tuple[float, float] = (0.3, 0.7)
    width_divisors: tuple[int, ...] = (1, 2)
    depth_variants: tuple[bool, ...] = (False,)
    split_mode: str = "disjoint"

    def __post_init__(self):
        object.__setattr__(self, "dropout_range", tuple(float(r) for r in self.dropout_range))
        object.__setattr__(self, "width_divisors", tuple(int(d) for d in self.width_divisors))
        object.__setattr__(self, "depth_variants", tuple(bool(d) for d in self.depth_variants))
        lo, hi = self.dropout_range
        if self.n < 1:
            raise ValueError(f"ensemble size must be >= 1, got {self.n}")
        if not (0.0 <= lo <= hi < 1.0):
            raise ValueError(f"dropout range must satisfy 0 <= lo <= hi < 1, got {self.dropout_range}")
        if not self.width_divisors or any(d < 1 for d in self.width_divisors):
            raise ValueError("width divisors must be positive integers")
        if not self.depth_variants:
            raise ValueError("depth_variants must not be empty")
        if self.split_mode not in SPLIT_MODES:
            raise ValueError(f"unknown split mode {self.split_mode!r}")

    def dropout_rate(self, i: int) -> float:
        lo, hi = self.dropout_range
        return lo + i * (hi - lo) / max(self.n - 1, 1)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "dropout_range": list(self.dropout_range),
            "width_divisors": list(self.width_divisors),
            "depth_variants": list(self.depth_variants),
            "split_mode": self.split_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class DiscriminatorSlot:
    index: int
    net: MLP
    adam: AdamState
    rng: np.random.Generator = field(repr=False)


def slot_spec(base: NetworkSpec, config: EnsembleConfig, i: int) -> NetworkSpec:
    """Network spec for discriminator ``i`` derived from ``base``."""
    divisor = config.width_divisors[i % len(config.width_divisors)]
    hidden = list(base.hidden)
    if config.depth_variants[i % len(config.depth_variants)]:
        if len(hidden) < 2:
            raise ValueError("cannot drop a hidden layer from a network with fewer than two")
        hidden = hidden[:-1]
    new_hidden = []
    for w in hidden:
        if w // divisor == 0:
            raise ValueError(f"width {w} divided by {divisor} leaves an empty layer")
        new_hidden.append(w // divisor)
    rate = config.dropout_rate(i)
    return NetworkSpec(
        widths=(base.widths[0], *new_hidden, base.widths[-1]),
        output_activation=base.output_activation,
        dropout=(rate,) * len(new_hidden),
        batchnorm=(False,) * len(new_hidden),
    )


def build_ensemble(base: NetworkSpec, config: EnsembleConfig, master_seed: int,
                   **adam_hyper) -> list[DiscriminatorSlot]:
    """Instantiate ``config.n`` independently initialized discriminators.

    Slot ``i`` draws its weights from init stream ``i + 1`` (stream 0 belongs
    to the generator) and its dropout masks from dropout stream ``i``.
    """
    slots = []
    for i in range(config.n):
        spec = slot_spec(base, config, i)
        net = MLP.init(spec, streams.stream(master_seed, streams.INIT, i + 1))
        slots.append(DiscriminatorSlot(
            index=i,
            net=net,
            adam=AdamState.zeros_like(net.params, **adam_hyper),
            rng=streams.stream(master_seed, streams.DROPOUT, i),
        ))
    return slots


def split_minibatch(batch: np.ndarray, n: int, mode: str = "disjoint") -> list[np.ndarray]:
    """Views of ``batch`` for ``n`` discriminators.

    ``shared`` hands every slot the whole batch; ``disjoint`` hands slot ``i``
    the ``i``-th contiguous block of ``len(batch) // n`` rows.
    """
    if mode == "shared":
        return [batch] * n
    if mode != "disjoint":
        raise ValueError(f"unknown split mode {mode!r}")
    size = len(batch)
    if size % n:
        raise ValueError(f"batch of {size} cannot be split evenly across {n} discriminators")
    step = size // n
    return [batch[i * step:(i + 1) * step] for i in range(n)]
