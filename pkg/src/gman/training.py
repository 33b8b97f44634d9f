"""Alternating multi-discriminator training and the per-iteration run log."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint, streams
from .aggregation import aggregate_node, gman_star_node, lambda_reparam, softmax_weights
from .autodiff import Graph
from .config import TrainConfig, dumps as dump_config
from .datasets import (MixtureSpec, downsample, grid2d, idx_load, pointset1d, ring2d,
                       sample_mixture)
from .ensemble import DiscriminatorSlot, build_ensemble, split_minibatch
from .nn import MLP
from .objectives import value_node
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    """A loss or value went non-finite; ``record`` holds the offending step."""

    def __init__(self, message: str, record: dict):
        super().__init__(message)
        self.record = record


# data


class DataSource:
    """Infinite minibatch stream over a synthetic mixture or an image set."""

    def __init__(self, dataset: dict, rng: np.random.Generator):
        self.rng = rng
        self.mixture: MixtureSpec | None = None
        self.images: np.ndarray | None = None
        kind = dataset["kind"]
        if kind == "ring":
            self.mixture = ring2d(dataset.get("k", 8), dataset.get("radius", 2.0),
                                  dataset.get("sigma", 0.02))
        elif kind == "grid":
            self.mixture = grid2d(dataset.get("side", 5), dataset.get("spacing", 1.0),
                                  dataset.get("sigma", 0.02))
        elif kind == "points1d":
            self.mixture = pointset1d(dataset.get("points", pointset1d().centers.ravel()),
                                      dataset.get("sigma", 0.02))
        elif kind == "idx":
            images = idx_load(dataset["path"], "images").pixels
            limit = dataset.get("limit")
            if limit:
                images = images[:limit]
            factor = int(dataset.get("downsample", 1))
            small = downsample(images, factor)
            if small.shape[1:] != (dataset["rows"], dataset["cols"]):
                raise ValueError(
                    f"downsampled images are {small.shape[1:]}, config says "
                    f"{(dataset['rows'], dataset['cols'])}"
                )
            self.images = (small / 127.5 - 1.0).reshape(len(small), -1)
            self._order = np.empty(0, dtype=np.int64)
        else:
            raise ValueError(f"unknown dataset kind {kind!r}")

    def sample(self, n: int) -> np.ndarray:
        if self.mixture is not None:
            return sample_mixture(self.mixture, n, self.rng)
        if len(self._order) < n:
            self._order = np.concatenate([self._order, self.rng.permutation(len(self.images))])
        idx, self._order = self._order[:n], self._order[n:]
        return self.images[idx]


def make_mixture(dataset: dict) -> MixtureSpec | None:
    return DataSource(dataset, np.random.default_rng(0)).mixture if dataset["kind"] != "idx" else None


def sample_latent(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """Uniform noise on the open cube (-1, 1)^dim."""
    z = rng.uniform(-1.0, 1.0, (n, dim))
    # uniform() is half-open; nudge the measure-zero endpoint inside
    return np.where(z == -1.0, np.nextafter(-1.0, 0.0), z)


# run log


@dataclass
class RunLog:
    n: int
    learned: bool
    config: dict = field(default_factory=dict)
    seed: int = 0
    records: list[dict] = field(default_factory=list)
    checkpoints: list[str] = field(default_factory=list)
    trainer: "Trainer | None" = field(default=None, repr=False, compare=False)

    @property
    def columns(self) -> list[str]:
        cols = ["iter", "F", "lambda", *[f"V_{i + 1}" for i in range(self.n)], "ms"]
        if self.learned:
            cols.append("Lambda")
        return cols

    def iterations(self) -> np.ndarray:
        return np.array([r["iter"] for r in self.records], dtype=np.int64)

    def series(self, key: str = "F") -> np.ndarray:
        return np.array([r[key] for r in self.records], dtype=np.float64)

    def V(self) -> np.ndarray:
        return np.array([r["V"] for r in self.records], dtype=np.float64).reshape(-1, self.n)

    def at(self, iteration: int) -> dict:
        for r in self.records:
            if r["iter"] == iteration:
                return r
        raise KeyError(f"iteration {iteration} not in run log")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.records:
            row = [r["iter"], repr(r["F"]), "" if r["lambda"] is None else repr(r["lambda"])]
            row += [repr(v) for v in r["V"]]
            row.append("" if r["ms"] is None else repr(r["ms"]))
            if self.learned:
                row.append(repr(r["Lambda"]))
            w.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, config: dict | None = None) -> "RunLog":
        rows = list(csv.reader(io.StringIO(text)))
        header = rows[0]
        n = sum(1 for c in header if c.startswith("V_"))
        learned = "Lambda" in header
        out = cls(n=n, learned=learned, config=config or {},
                  seed=(config or {}).get("seed", 0))
        pos = {c: i for i, c in enumerate(header)}
        for row in rows[1:]:
            if row and row[0].startswith("#"):
                continue
            rec = {
                "iter": int(row[pos["iter"]]),
                "F": float(row[pos["F"]]),
                "lambda": float(row[pos["lambda"]]) if row[pos["lambda"]] else None,
                "V": [float(row[pos[f"V_{i + 1}"]]) for i in range(n)],
                "ms": float(row[pos["ms"]]) if row[pos["ms"]] else None,
            }
            if learned:
                rec["Lambda"] = float(row[pos["Lambda"]])
            out.records.append(rec)
        return out


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# training


class Trainer:
    """Holds the generator, the discriminator ensemble and all RNG streams."""

    def __init__(self, config: TrainConfig):
        self.config = config
        seed = config.seed
        self.data = DataSource(config.dataset, streams.stream(seed, streams.DATA))
        self.noise_rng = streams.stream(seed, streams.NOISE)
        self.gen = MLP.init(config.generator, streams.stream(seed, streams.INIT, 0))
        self.Lambda = float(config.aggregation.Lambda_init) if config.aggregation.learned else None
        self.gen_adam = AdamState.zeros_like(self._gen_params(), **config.adam_hyper)
        self.slots: list[DiscriminatorSlot] = build_ensemble(
            config.discriminator, config.ensemble, seed, **config.adam_hyper)
        self.iteration = 0

    def _gen_params(self) -> dict[str, np.ndarray]:
        params = dict(self.gen.params)
        if self.Lambda is not None:
            params["Lambda"] = np.array(self.Lambda)
        return params

    @property
    def lam(self) -> float | None:
        if self.Lambda is not None:
            return float(lambda_reparam(self.Lambda))
        return None

    def _generate(self, z: np.ndarray) -> np.ndarray:
        g = Graph()
        return self.gen.forward(g, z, self.gen.bind(g, trainable=False), train=True,
                                update_stats=False).data

    def discriminator_phase(self, real: np.ndarray) -> None:
        """Each discriminator takes one ascent step on its own value, G frozen."""
        cfg = self.config
        z = sample_latent(self.noise_rng, cfg.batch_size, cfg.latent_dim)
        fake = self._generate(z)
        reals = split_minibatch(real, cfg.n, cfg.ensemble.split_mode)
        fakes = split_minibatch(fake, cfg.n, cfg.ensemble.split_mode)
        for slot, r, f in zip(self.slots, reals, fakes):
            g = Graph()
            bound = slot.net.bind(g)
            out = slot.net.forward(g, np.concatenate([r, f]), bound, train=True, rng=slot.rng)
            d = g.squashed_sigmoid(out, cfg.squash_eps)
            v, _, _ = value_node(g, g.rows(d, 0, len(r)), g.rows(d, len(r), len(r) + len(f)))
            if not math.isfinite(v.item()):
                raise TrainingAborted(
                    f"discriminator {slot.index} value is non-finite at iteration {self.iteration + 1}",
                    {"iter": self.iteration + 1, "phase": "discriminator", "slot": slot.index},
                )
            grads = g.backward(g.neg(v))
            slot.net.params, slot.adam = adam_step(
                slot.net.params, {k: grads[t] for k, t in bound.items()}, slot.adam)

    def generator_phase(self, real: np.ndarray) -> dict:
        """One descent step for G (and Lambda) on the aggregated objective."""
        cfg = self.config
        agg = cfg.aggregation
        z = sample_latent(self.noise_rng, cfg.batch_size, cfg.latent_dim)
        g = Graph()
        gbound = {k: g.variable(v, name=k) for k, v in self._gen_params().items()}
        fake = self.gen.forward(g, z, gbound, train=True)
        reals = split_minibatch(real, cfg.n, cfg.ensemble.split_mode)
        if cfg.ensemble.split_mode == "shared":
            fakes = [fake] * cfg.n
        else:
            step = cfg.batch_size // cfg.n
            fakes = [g.rows(fake, i * step, (i + 1) * step) for i in range(cfg.n)]

        values, fake_terms = [], []
        for slot, r, f in zip(self.slots, reals, fakes):
            x = g.concat([g.constant(r), f], axis=0)
            out = slot.net.forward(g, x, slot.net.bind(g, trainable=False), train=True, rng=slot.rng)
            d = g.squashed_sigmoid(out, cfg.squash_eps)
            d_real = g.rows(d, 0, len(r))
            d_fake = g.rows(d, len(r), d.shape[0])
            v, _, _ = value_node(g, d_real, d_fake)
            values.append(v)
            fake_terms.append(d_fake)
        V = g.stack_scalars(values)
        V_data = V.data.copy()
        record = {"iter": self.iteration + 1, "V": V_data.tolist(), "lambda": None}
        if not np.all(np.isfinite(V_data)):
            raise TrainingAborted(f"non-finite V at iteration {record['iter']}", record)

        if agg.learned:
            loss, lam = gman_star_node(g, V, gbound["Lambda"], agg.c, agg.kind)
            F = loss.item() + agg.c * lam.item()
            record["lambda"] = lam.item()
            record["Lambda"] = self.Lambda
        else:
            F_node = aggregate_node(g, V, agg.kind, agg.lam)
            F = F_node.item()
            if cfg.loss_mode == "original":
                loss = F_node
            else:
                # weights are held fixed; each D_i contributes mean -log D_i(G(z))
                if agg.kind == "max":
                    w = np.zeros(cfg.n)
                    w[int(np.argmax(V_data))] = 1.0
                else:
                    w = softmax_weights(V_data, agg.lam)
                terms = [g.neg(g.mean(g.log(df))) for df in fake_terms]
                loss = g.sum(g.mul(g.constant(w), g.stack_scalars(terms)))
        record["F"] = F
        if not (math.isfinite(F) and math.isfinite(loss.item())):
            raise TrainingAborted(f"non-finite objective at iteration {record['iter']}", record)

        grads = g.backward(loss)
        new, self.gen_adam = adam_step(
            self._gen_params(), {k: grads[t] for k, t in gbound.items()}, self.gen_adam)
        if self.Lambda is not None:
            self.Lambda = float(new.pop("Lambda"))
        self.gen.params = new
        return record

    def step(self) -> dict:
        t0 = time.perf_counter()
        cfg = self.config
        real = self.data.sample(cfg.batch_size)
        for _ in range(cfg.disc_steps):
            self.discriminator_phase(real)
        record = self.generator_phase(real)
        self.iteration += 1
        record["ms"] = (time.perf_counter() - t0) * 1e3 if cfg.record_wallclock else None
        return record

    # persistence

    def generator_state(self) -> dict[str, np.ndarray]:
        state = self.gen.state()
        if self.Lambda is not None:
            state["Lambda"] = np.array(self.Lambda)
        return state

    def save_checkpoint(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        checkpoint.save(directory / "gen.ckpt", self.generator_state())
        for slot in self.slots:
            checkpoint.save(directory / f"disc_{slot.index + 1}.ckpt", slot.net.state())


def train(config: TrainConfig, out_dir=None) -> RunLog:
    """Run ``config.iterations`` steps; write artifacts to ``out_dir`` if given.

    On a non-finite abort the partial log is written before re-raising.
    """
    trainer = Trainer(config)
    runlog = RunLog(n=config.n, learned=config.aggregation.learned,
                    config=config.to_dict(), seed=config.seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write(out / "config.json", dump_config(config))
    try:
        for _ in range(config.iterations):
            rec = trainer.step()
            it = trainer.iteration
            if it % config.log_every == 0 or it == config.iterations:
                runlog.records.append(rec)
            if out is not None and config.checkpoint_every and it % config.checkpoint_every == 0:
                ck = out / "checkpoints" / f"iter_{it:07d}"
                trainer.save_checkpoint(ck)
                runlog.checkpoints.append(str(ck.relative_to(out)))
    except TrainingAborted as e:
        log.error("training aborted: %s", e)
        runlog.records.append({**e.record, "aborted": True})
        if out is not None:
            _atomic_write(out / "runlog.csv", _csv_safe(runlog))
        raise
    if out is not None:
        trainer.save_checkpoint(out / "final")
        runlog.checkpoints.append("final")
        _atomic_write(out / "runlog.csv", runlog.to_csv())
    runlog.trainer = trainer
    return runlog


def _csv_safe(runlog: RunLog) -> str:
    """CSV of the completed records; the aborting record goes to the end as-is."""
    done = RunLog(runlog.n, runlog.learned, runlog.config, runlog.seed,
                  [r for r in runlog.records if not r.get("aborted")])
    text = done.to_csv()
    bad = runlog.records[-1]
    return text + f"# aborted: {bad}\n"
