"""GMAM pairwise scoring, convergence diagnostics and mode coverage."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import checkpoint, streams
from .aggregation import AggregationConfig, aggregate, lambda_reparam
from .config import TrainConfig, family, load as load_config
from .datasets import MixtureSpec
from .nn import MLP
from .objectives import squashed_sigmoid, value_estimate
from .training import DataSource, RunLog, sample_latent

STEADY_STATE_RULE = 0.1


# GMAM


@dataclass(frozen=True)
class GmamResult:
    """Score and its four aggregate components.

    ``fa_gb`` is side a's aggregate when its discriminators judge G_b, and so
    on. Positive scores favour b.
    """

    score: float
    fa_gb: float
    fa_ga: float
    fb_ga: float
    fb_gb: float
    n_samples: int = 0

    @property
    def components(self) -> tuple[float, float, float, float]:
        return (self.fa_gb, self.fa_ga, self.fb_ga, self.fb_gb)


def _log_ratio(num: float, den: float) -> float:
    if num >= 0 or den >= 0:
        raise ValueError(f"GMAM needs negative aggregates, got {num} and {den}")
    return math.log(num / den)


def gmam_score(fa_gb: float, fa_ga: float, fb_ga: float, fb_gb: float) -> float:
    """``log[(F^a(G_b)/F^a(G_a)) / (F^b(G_a)/F^b(G_b))]``."""
    return _log_ratio(fa_gb, fa_ga) - _log_ratio(fb_ga, fb_gb)


def gmam_from_components(fa_gb, fa_ga, fb_ga, fb_gb, n_samples: int = 0) -> GmamResult:
    return GmamResult(gmam_score(fa_gb, fa_ga, fb_ga, fb_gb), fa_gb, fa_ga, fb_ga, fb_gb, n_samples)


@dataclass
class TrainedSystem:
    """A finished run: generator, discriminators and how it aggregates."""

    config: TrainConfig
    generator: MLP
    discriminators: list[MLP]
    Lambda: float | None = None
    log: RunLog | None = None
    path: Path | None = None

    @property
    def aggregation(self) -> AggregationConfig:
        return self.config.aggregation

    @property
    def lam(self) -> float:
        if self.Lambda is not None:
            return float(lambda_reparam(self.Lambda))
        return self.aggregation.lam

    @property
    def label(self) -> str:
        return family(self.config)

    @classmethod
    def from_trainer(cls, trainer, log: RunLog | None = None) -> "TrainedSystem":
        return cls(trainer.config, trainer.gen, [s.net for s in trainer.slots],
                   trainer.Lambda, log)

    def generate(self, z: np.ndarray) -> np.ndarray:
        return self.generator(z)

    def judge(self, real: np.ndarray, fake: np.ndarray) -> float:
        """Aggregate of this system's discriminators on ``(real, fake)``, eval mode."""
        eps = self.config.squash_eps
        V = []
        for d in self.discriminators:
            V.append(value_estimate(squashed_sigmoid(d(real), eps),
                                    squashed_sigmoid(d(fake), eps)).v)
        return aggregate(V, self.aggregation.kind, self.lam)


def load_run(run_dir, which: str = "final") -> TrainedSystem:
    run_dir = Path(run_dir)
    config = load_config(run_dir / "config.json")
    ck = run_dir / which
    gen = MLP.init(config.generator, np.random.default_rng(0))
    gstate = checkpoint.load(ck / "gen.ckpt")
    gen.load_state(gstate)
    from .ensemble import slot_spec

    discs = []
    for i in range(config.n):
        net = MLP.init(slot_spec(config.discriminator, config.ensemble, i), np.random.default_rng(0))
        net.load_state(checkpoint.load(ck / f"disc_{i + 1}.ckpt"))
        discs.append(net)
    Lambda = float(gstate["Lambda"]) if "Lambda" in gstate else None
    log = None
    if (run_dir / "runlog.csv").exists():
        log = RunLog.from_csv((run_dir / "runlog.csv").read_text(), config.to_dict())
    return TrainedSystem(config, gen, discs, Lambda, log, run_dir)


@dataclass
class EvalBatches:
    """Shared evaluation inputs: one held-out real block and one noise block per batch."""

    real: list[np.ndarray]
    noise: list[np.ndarray]

    @classmethod
    def draw(cls, config: TrainConfig, n_batches: int = 10, seed: int = 0) -> "EvalBatches":
        data = DataSource(config.dataset, streams.stream(seed, streams.EVAL, 0))
        noise_rng = streams.stream(seed, streams.EVAL, 1)
        b = config.batch_size
        return cls([data.sample(b) for _ in range(n_batches)],
                   [sample_latent(noise_rng, b, config.latent_dim) for _ in range(n_batches)])

    @property
    def n_samples(self) -> int:
        return sum(len(z) for z in self.noise)


def _compatible(a: TrainedSystem, b: TrainedSystem) -> None:
    if a.config.generator.widths[-1] != b.config.generator.widths[-1]:
        raise ValueError("runs generate data of different dimensions")
    if a.config.latent_dim != b.config.latent_dim:
        raise ValueError("runs use different latent dimensions")


def cross_aggregates(systems: list[TrainedSystem], batches: EvalBatches) -> np.ndarray:
    """``M[r, s]``: system r's aggregate judging system s's generator, batch-averaged."""
    for s in systems[1:]:
        _compatible(systems[0], s)
    k = len(systems)
    M = np.zeros((k, k))
    for real, z in zip(batches.real, batches.noise):
        fakes = [s.generate(z) for s in systems]
        for r, judge in enumerate(systems):
            for s in range(k):
                M[r, s] += judge.judge(real, fakes[s])
    return M / len(batches.real)


def gmam(a: TrainedSystem, b: TrainedSystem, n_batches: int = 10, seed: int = 0) -> GmamResult:
    """Score two trained systems against each other; positive favours ``b``."""
    _compatible(a, b)
    batches = EvalBatches.draw(a.config, n_batches, seed)
    M = cross_aggregates([a, b], batches)
    return gmam_from_components(M[0, 1], M[0, 0], M[1, 0], M[1, 1], batches.n_samples)


def gmam_matrix(M: np.ndarray) -> np.ndarray:
    """Pairwise scores from shared cross aggregates; ``out[i, j] = -out[j, i]`` exactly."""
    k = M.shape[0]
    half = np.zeros((k, k))
    for r in range(k):
        for s in range(k):
            half[r, s] = _log_ratio(M[r, s], M[r, r])
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i != j:
                out[i, j] = half[i, j] - half[j, i]
    return out


@dataclass
class Tournament:
    """Table of pairwise scores; cell ``[i][j]`` > 0 means column j beat row i."""

    labels: list[str]
    mean: np.ndarray
    std: np.ndarray
    n_seeds: int
    per_seed: list[np.ndarray] = field(default_factory=list)

    @property
    def scores(self) -> np.ndarray:
        """Column sums of the mean matrix."""
        return self.mean.sum(axis=0)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["score", "variant", *self.labels])
        order = np.argsort(-self.scores, kind="stable")
        for i in order:
            row = [f"{self.scores[i]:.6f}", self.labels[i]]
            for j in range(len(self.labels)):
                row.append("-" if i == j else f"{self.mean[i, j]:.6f} ± {self.std[i, j]:.6f}")
            w.writerow(row)
        return buf.getvalue()


def tournament(groups: dict[str, list[TrainedSystem]], n_batches: int = 10,
               seed: int = 0) -> Tournament:
    """Round-robin GMAM; seed ``s`` of each variant meets seed ``s`` of the others."""
    labels = list(groups)
    n_seeds = min(len(v) for v in groups.values())
    if n_seeds < 1:
        raise ValueError("every variant needs at least one run")
    first = groups[labels[0]][0]
    batches = EvalBatches.draw(first.config, n_batches, seed)
    mats = []
    for s in range(n_seeds):
        M = cross_aggregates([groups[l][s] for l in labels], batches)
        mats.append(gmam_matrix(M))
    stack = np.stack(mats)
    std = stack.std(axis=0, ddof=1) if n_seeds > 1 else np.zeros_like(stack[0])
    return Tournament(labels, stack.mean(axis=0), std, n_seeds, mats)


# convergence


def sliding_stdev(series, window: int) -> np.ndarray:
    """Population stdev over each length-``window`` window; ``len - window + 1`` values.

    Windows are shifted by their first entry before the two-pass variance, so
    a constant window gives exactly zero.
    """
    x = np.asarray(series, dtype=np.float64)
    if window < 2:
        raise ValueError("window must be at least 2")
    if window > len(x):
        raise ValueError(f"window {window} exceeds series length {len(x)}")
    win = sliding_window_view(x, window)
    d = win - win[:, :1]
    m = d.mean(axis=1, keepdims=True)
    return np.sqrt(((d - m) ** 2).mean(axis=1))


def steady_state_index(stdev, threshold: float) -> int | None:
    """First index from which ``stdev`` stays below ``threshold``; None if never."""
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    below = np.asarray(stdev) < threshold
    if not below.size or not below[-1]:
        return None
    above = np.flatnonzero(~below)
    return 0 if above.size == 0 else int(above[-1]) + 1


@dataclass(frozen=True)
class ConvergenceReport:
    stdev: np.ndarray
    window: int
    threshold: float
    steady_state: int | None  # iteration at the end of the first steady window

    @property
    def reached(self) -> bool:
        return self.steady_state is not None


def convergence_report(series, window: int = 500, threshold: float | None = None,
                       rule: float = STEADY_STATE_RULE) -> ConvergenceReport:
    """Sliding stdev plus steady-state detection.

    Without an explicit ``threshold`` the cutoff is ``rule`` times the first
    window's stdev, which keeps it scale-free across variants.
    """
    sd = sliding_stdev(series, window)
    if threshold is None:
        threshold = rule * sd[0]
    idx = steady_state_index(sd, threshold) if threshold > 0 else None
    return ConvergenceReport(sd, window, threshold, None if idx is None else idx + window)


def family_threshold(series_list, window: int = 500, rule: float = STEADY_STATE_RULE) -> float:
    """``rule`` times the mean first-window stdev over the runs of one family."""
    firsts = [sliding_stdev(np.asarray(s)[:window], window)[0] for s in series_list]
    if not firsts:
        raise ValueError("a family needs at least one run")
    return rule * float(np.mean(firsts))


def run_variance(logs: list[RunLog], iteration: int) -> float:
    """Sample variance of F across runs at ``iteration``."""
    if len(logs) < 2:
        raise ValueError("cross-run variance needs at least two runs")
    values = [log.at(iteration)["F"] for log in logs]
    return float(np.var(values, ddof=1))


# mode coverage


@dataclass(frozen=True)
class ModeCoverage:
    covered: int
    counts: np.ndarray
    radius_mult: float
    high_quality: float


def mode_coverage(samples, mixture: MixtureSpec, radius_mult: float = 3.0,
                  min_count: int = 20) -> ModeCoverage:
    """Count modes holding at least ``min_count`` samples within ``radius_mult`` sigmas.

    Each sample is assigned to its nearest center; ``counts`` holds, per mode,
    the assigned samples that fall inside the radius.
    """
    x = np.asarray(samples, dtype=np.float64).reshape(-1, mixture.dim)
    if len(x) == 0:
        raise ValueError("mode coverage needs at least one sample")
    dist = np.linalg.norm(x[:, None, :] - mixture.centers[None, :, :], axis=2)
    nearest = dist.argmin(axis=1)
    close = dist[np.arange(len(x)), nearest] <= radius_mult * mixture.sigma
    counts = np.bincount(nearest[close], minlength=mixture.k)
    return ModeCoverage(int((counts >= min_count).sum()), counts, radius_mult, float(close.mean()))


def generator_samples(system: TrainedSystem, n: int = 10_000, seed: int = 0) -> np.ndarray:
    rng = streams.stream(seed, streams.EVAL, 2)
    return system.generate(sample_latent(rng, n, system.config.latent_dim))


def default_min_count(batch_size: int) -> int:
    return max(20, int(0.1 * batch_size))
