"""Multilayer perceptrons, dropout and batch normalization on top of the tape."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, ShapeError, Tensor

BN_EPS = 1e-5
BN_MOMENTUM = 0.9

OUTPUT_ACTIVATIONS = ("tanh", "identity")


@dataclass(frozen=True)
class NetworkSpec:
    """Layer-wise description of an MLP.

    ``widths`` lists input, hidden and output sizes. ``dropout`` and
    ``batchnorm`` hold one entry per hidden layer. Hidden units use ReLU.
    """

    widths: tuple[int, ...]
    output_activation: str = "identity"
    dropout: tuple[float, ...] = ()
    batchnorm: tuple[bool, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        n_hidden = len(self.widths) - 2
        if len(self.widths) < 2:
            raise ValueError("a network needs at least input and output widths")
        if any(w <= 0 for w in self.widths):
            raise ValueError(f"layer widths must be positive, got {self.widths}")
        dropout = tuple(float(r) for r in self.dropout) or (0.0,) * n_hidden
        batchnorm = tuple(bool(b) for b in self.batchnorm) or (False,) * n_hidden
        if len(dropout) != n_hidden or len(batchnorm) != n_hidden:
            raise ValueError(
                f"expected {n_hidden} dropout/batchnorm entries, "
                f"got {len(dropout)}/{len(batchnorm)}"
            )
        for r in dropout:
            check_rate(r)
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        object.__setattr__(self, "dropout", dropout)
        object.__setattr__(self, "batchnorm", batchnorm)

    @property
    def n_layers(self) -> int:
        return len(self.widths) - 1

    @property
    def hidden(self) -> tuple[int, ...]:
        return self.widths[1:-1]

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "output_activation": self.output_activation,
            "dropout": list(self.dropout),
            "batchnorm": list(self.batchnorm),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(
            widths=tuple(d["widths"]),
            output_activation=d.get("output_activation", "identity"),
            dropout=tuple(d.get("dropout", ())),
            batchnorm=tuple(d.get("batchnorm", ())),
        )


def check_rate(rate: float) -> None:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")


def dropout_apply(g: Graph, x: Tensor, rate: float, rng: np.random.Generator | None,
                  train: bool) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1/(1-rate)`` at train time."""
    check_rate(rate)
    if not train or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = rng.random(x.shape) >= rate
    return g.mul(x, g.constant(keep / (1.0 - rate)))


def batchnorm_forward(g: Graph, x: Tensor, gamma: Tensor, beta: Tensor,
                      running_mean: np.ndarray, running_var: np.ndarray, train: bool,
                      momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
    """Batch normalization.

    Returns ``(out, running_mean, running_var)``; the running statistics are
    new arrays in train mode and the inputs unchanged in eval mode.
    """
    if train:
        if x.shape[0] < 2:
            raise ShapeError("train-mode batch normalization needs a batch of at least 2")
        out = g.batchnorm(x, gamma, beta, eps)
        aux = g.nodes[out.node].aux
        new_mean = momentum * running_mean + (1.0 - momentum) * aux["batch_mean"]
        new_var = momentum * running_var + (1.0 - momentum) * aux["batch_var"]
        return out, new_mean, new_var
    scale = g.constant(1.0 / np.sqrt(running_var + eps))
    xhat = g.mul(g.sub(x, g.constant(running_mean)), scale)
    return g.add(g.mul(xhat, gamma), beta), running_mean, running_var


@dataclass
class MLP:
    """An MLP's spec together with its learned parameters and BN buffers."""

    spec: NetworkSpec
    params: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, spec: NetworkSpec, rng: np.random.Generator) -> "MLP":
        params: dict[str, np.ndarray] = {}
        buffers: dict[str, np.ndarray] = {}
        for i in range(spec.n_layers):
            fan_in, fan_out = spec.widths[i], spec.widths[i + 1]
            # U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases; He-normal
            # weights start the ring generator too wide to ever find a mode
            bound = 1.0 / np.sqrt(fan_in)
            params[f"l{i}.w"] = rng.uniform(-bound, bound, (fan_in, fan_out))
            params[f"l{i}.b"] = rng.uniform(-bound, bound, fan_out)
            if i < spec.n_layers - 1 and spec.batchnorm[i]:
                params[f"l{i}.gamma"] = np.ones(fan_out)
                params[f"l{i}.beta"] = np.zeros(fan_out)
                buffers[f"l{i}.running_mean"] = np.zeros(fan_out)
                buffers[f"l{i}.running_var"] = np.ones(fan_out)
        return cls(spec, params, buffers)

    def bind(self, g: Graph, trainable: bool = True) -> dict[str, Tensor]:
        """Place every parameter on ``g``, as differentiable leaves or constants."""
        if trainable:
            return {k: g.variable(v, name=k) for k, v in self.params.items()}
        return {k: g.constant(v) for k, v in self.params.items()}

    def forward(self, g: Graph, x, bound: dict[str, Tensor] | None = None, *,
                train: bool, rng: np.random.Generator | None = None,
                update_stats: bool = True) -> Tensor:
        if not isinstance(x, Tensor):
            x = g.constant(x)
        if x.data.ndim != 2 or x.shape[1] != self.spec.widths[0]:
            raise ShapeError(
                f"input shape {x.shape} does not match network input width {self.spec.widths[0]}"
            )
        if bound is None:
            bound = self.bind(g)
        h = x
        last = self.spec.n_layers - 1
        for i in range(self.spec.n_layers):
            h = g.linear(h, bound[f"l{i}.w"], bound[f"l{i}.b"])
            if i == last:
                break
            if self.spec.batchnorm[i]:
                h, rm, rv = batchnorm_forward(
                    g, h, bound[f"l{i}.gamma"], bound[f"l{i}.beta"],
                    self.buffers[f"l{i}.running_mean"], self.buffers[f"l{i}.running_var"],
                    train,
                )
                if train and update_stats:
                    self.buffers[f"l{i}.running_mean"] = rm
                    self.buffers[f"l{i}.running_var"] = rv
            h = g.relu(h)
            h = dropout_apply(g, h, self.spec.dropout[i], rng, train)
        if self.spec.output_activation == "tanh":
            h = g.tanh(h)
        return h

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode forward pass returning a plain array."""
        return self.forward(Graph(), x, train=False).data

    def state(self) -> dict[str, np.ndarray]:
        return {**self.params, **self.buffers}

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        for k in self.params:
            self.params[k] = np.array(tensors[k], dtype=np.float64)
        for k in self.buffers:
            self.buffers[k] = np.array(tensors[k], dtype=np.float64)

    def copy(self) -> "MLP":
        return MLP(
            self.spec,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
        )
