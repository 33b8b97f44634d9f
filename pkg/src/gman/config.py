"""Run configuration: the training config, variant roster and JSON round-trip.

A config file is a JSON object. ``variant`` picks the aggregation kind,
temperature mode and generator loss; ``n`` the ensemble size. Everything
else has a default suitable for the 8-mode ring benchmark::

    {"variant": "GMAN-0", "n": 5, "seed": 0, "iterations": 10000,
     "dataset": {"kind": "ring", "k": 8, "radius": 2.0, "sigma": 0.02}}

Recognized variants: ``GAN``, ``mod-GAN`` (both force ``n = 1``),
``GMAN-max``, ``GMAN*`` and ``GMAN-<lam>`` for any fixed ``lam >= 0``
(``GMAN-0``, ``GMAN-1``, ...).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .aggregation import AggregationConfig
from .ensemble import EnsembleConfig
from .nn import NetworkSpec
from .objectives import LOSS_MODES

DATASET_KINDS = ("ring", "grid", "points1d", "idx")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


def resolve_variant(name: str) -> tuple[AggregationConfig, str, int | None]:
    """Map a variant name to ``(aggregation, loss_mode, forced_n)``."""
    if name == "GAN":
        return AggregationConfig("am", "fixed", 0.0), "original", 1
    if name == "mod-GAN":
        return AggregationConfig("am", "fixed", 0.0), "modified", 1
    if name == "GMAN-max":
        return AggregationConfig("max", "fixed", 0.0), "original", None
    if name == "GMAN*":
        return AggregationConfig("am", "learned"), "original", None
    m = re.fullmatch(r"GMAN-(\d+(?:\.\d+)?)", name)
    if m:
        return AggregationConfig("am", "fixed", float(m.group(1))), "original", None
    raise ConfigError(f"variant: unknown variant {name!r}")


def default_dataset() -> dict:
    return {"kind": "ring", "k": 8, "radius": 2.0, "sigma": 0.02}


def dataset_dim(dataset: dict) -> int:
    kind = dataset.get("kind")
    if kind in ("ring", "grid"):
        return 2
    if kind == "points1d":
        return 1
    if kind == "idx":
        if "rows" not in dataset or "cols" not in dataset:
            raise ConfigError("dataset: idx datasets need 'rows' and 'cols' after downsampling")
        return int(dataset["rows"]) * int(dataset["cols"])
    raise ConfigError(f"dataset.kind: expected one of {DATASET_KINDS}, got {kind!r}")


@dataclass(frozen=True)
class TrainConfig:
    variant: str = "GMAN-0"
    dataset: dict = field(default_factory=default_dataset)
    latent_dim: int = 64
    generator: NetworkSpec | None = None
    discriminator: NetworkSpec | None = None
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    loss_mode: str = "original"
    batch_size: int = 100
    iterations: int = 10000
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    squash_eps: float = 0.01
    seed: int = 0
    log_every: int = 1
    checkpoint_every: int = 0
    disc_steps: int = 1
    fresh_generator_noise: bool = True
    record_wallclock: bool = False

    def __post_init__(self):
        dim = dataset_dim(self.dataset)
        if self.generator is None:
            out_act = "tanh" if self.dataset["kind"] == "idx" else "identity"
            object.__setattr__(self, "generator", NetworkSpec(
                (self.latent_dim, 128, 128, dim), out_act, (0.0,) * 2, (True,) * 2))
        if self.discriminator is None:
            object.__setattr__(self, "discriminator", NetworkSpec((dim, 64, 64, 1)))
        self.validate()

    def validate(self) -> None:
        dim = dataset_dim(self.dataset)
        if self.iterations <= 0:
            raise ConfigError("iterations: must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size: must be at least 2")
        if self.ensemble.split_mode == "disjoint" and self.batch_size % self.ensemble.n:
            raise ConfigError(
                f"batch_size: {self.batch_size} is not divisible by n={self.ensemble.n} "
                "in disjoint split mode"
            )
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss_mode: expected one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.loss_mode == "modified" and self.aggregation.kind not in ("am", "max"):
            raise ConfigError("loss_mode: the modified loss supports only am or max aggregation")
        if self.loss_mode == "modified" and self.aggregation.learned:
            raise ConfigError("loss_mode: the modified loss cannot drive a learned temperature")
        g, d = self.generator, self.discriminator
        if g.widths[0] != self.latent_dim:
            raise ConfigError(f"generator.widths: input width {g.widths[0]} != latent_dim {self.latent_dim}")
        if g.widths[-1] != dim:
            raise ConfigError(f"generator.widths: output width {g.widths[-1]} != data dimension {dim}")
        if d.widths[0] != dim or d.widths[-1] != 1:
            raise ConfigError(f"discriminator.widths: must map {dim} inputs to 1 output")
        if not 0.0 <= self.squash_eps < 0.5:
            raise ConfigError("squash_eps: must lie in [0, 0.5)")
        if self.log_every < 1 or self.disc_steps < 1 or self.checkpoint_every < 0:
            raise ConfigError("log_every/disc_steps must be >= 1 and checkpoint_every >= 0")

    @property
    def n(self) -> int:
        return self.ensemble.n

    @property
    def adam_hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.adam_eps}

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.to_dict() if hasattr(v, "to_dict") else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)} | {"n"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"{unknown[0]}: unknown field")
        variant = d.get("variant", "GMAN-0")
        agg, loss, forced_n = resolve_variant(variant)
        ens_raw = d.pop("ensemble", {})
        try:
            ens = EnsembleConfig.from_dict(ens_raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"ensemble: {e}") from e
        if "n" in d:
            n = int(d.pop("n"))
            if "n" in ens_raw and ens_raw["n"] != n:
                raise ConfigError("n: conflicts with ensemble.n")
            try:
                ens = replace(ens, n=n)
            except ValueError as e:
                raise ConfigError(f"n: {e}") from e
        if forced_n is not None and ens.n != forced_n:
            if ens.n != 1:
                raise ConfigError(f"n: variant {variant} requires n={forced_n}")
            ens = replace(ens, n=forced_n)
        given = d.pop("aggregation", None)
        if given is not None:
            for key in ("kind", "lambda_mode"):
                if key in given and given[key] != getattr(agg, key):
                    raise ConfigError(f"aggregation.{key}: conflicts with variant {variant}")
            if agg.lambda_mode == "fixed" and "lam" in given and given["lam"] != agg.lam:
                raise ConfigError(f"aggregation.lam: conflicts with variant {variant}")
            agg = replace(agg, **{k: given[k] for k in ("Lambda_init", "c") if k in given})
        if "loss_mode" in d and d["loss_mode"] != loss:
            raise ConfigError(f"loss_mode: conflicts with variant {variant}")
        d["loss_mode"] = loss
        for key in ("generator", "discriminator"):
            if key in d and d[key] is not None:
                try:
                    d[key] = NetworkSpec.from_dict(d[key])
                except (KeyError, ValueError) as e:
                    raise ConfigError(f"{key}: {e}") from e
        try:
            return cls(ensemble=ens, aggregation=agg, **d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(f"config: {e}") from e


def dumps(config: TrainConfig) -> str:
    return json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"


def loads(text: str) -> TrainConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: not valid JSON ({e})") from e
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    return TrainConfig.from_dict(raw)


def load(path) -> TrainConfig:
    return loads(Path(path).read_text())


def family(config: TrainConfig) -> str:
    """Label grouping seeds of the same experiment, e.g. ``GMAN-0 N=5``."""
    return f"{config.variant} N={config.n}"
