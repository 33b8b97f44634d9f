"""Executable checks of the mathematical identities the library relies on.

Each check draws seeded random instances, measures a per-instance error and
returns a :class:`CheckReport`. A report fails exactly when its worst error
exceeds its declared tolerance. Strict inequalities are scored with a 0/1
indicator against tolerance 0.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .aggregation import SOFT_KINDS, aggregate, aggregate_node, gman_star_node
from .autodiff import Graph, Tensor
from .objectives import (LOG4, DiscreteDistPair, generator_loss, optimal_discriminator_value,
                         squashed_sigmoid, value_node)

TOL_ALGEBRAIC = 1e-12
TOL_ORACLE = 1e-9
TOL_GRADIENT = 1e-4
FD_STEP = 1e-5
LAMBDA_GRID = (0.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)


@dataclass(frozen=True)
class CheckReport:
    check_id: str
    instances: int
    worst_error: float
    tolerance: float
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return bool(self.worst_error <= self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"{status}  {self.check_id:<38} n={self.instances:<6} "
                f"worst={self.worst_error:.3e}  tol={self.tolerance:.0e}  {self.seconds:.2f}s")


class _Tally:
    """Accumulates per-instance errors for one check id."""

    def __init__(self, check_id: str, tolerance: float):
        self.check_id = check_id
        self.tolerance = tolerance
        self.count = 0
        self.worst = 0.0

    def add(self, err: float) -> None:
        self.count += 1
        err = float(err)
        if not err <= self.worst:  # NaN counts as a failure
            self.worst = err if np.isfinite(err) else np.inf

    def report(self, seconds: float = 0.0) -> CheckReport:
        return CheckReport(self.check_id, self.count, self.worst, self.tolerance, seconds)


def reports_to_csv(reports: list[CheckReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "instances", "worst_error", "tolerance", "passed"])
    for r in reports:
        w.writerow([r.check_id, r.instances, repr(r.worst_error), repr(r.tolerance),
                    "pass" if r.passed else "fail"])
    return buf.getvalue()


def reports_to_text(reports: list[CheckReport]) -> str:
    lines = [r.line() for r in reports]
    failed = sum(not r.passed for r in reports)
    lines.append(f"{len(reports) - failed}/{len(reports)} checks passed")
    return "\n".join(lines) + "\n"


# optimal discriminator


def _random_simplex(rng: np.random.Generator, k: int, zero_prob: float) -> np.ndarray:
    p = rng.dirichlet(np.ones(k))
    p[rng.random(k) < zero_prob] = 0.0
    if p.sum() == 0.0:
        p[rng.integers(k)] = 1.0
    p = p / p.sum()
    # push the rounding residue into the largest entry so the sum is 1 to an ulp
    p[np.argmax(p)] += 1.0 - p.sum()
    return p


def check_optimal_discriminator_identity(trials: int = 100, max_support: int = 16,
                                         seed: int = 0) -> CheckReport:
    """Value at the optimal discriminator equals ``-log 4 + 2 JSD``.

    Besides the random pairs, the equal-distribution case (value ``-log 4``)
    and the disjoint-support case (value 0) are always included and are
    compared against those constants as well.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    tally = _Tally("optimal_discriminator_identity", TOL_ORACLE)
    for t in range(trials):
        k = int(rng.integers(1, max_support + 1))
        p = _random_simplex(rng, k, 0.2)
        if t == 0:
            q, forced = p.copy(), -LOG4
        elif t == 1:
            k = max(k, 2)
            half = k // 2
            p = np.r_[_random_simplex(rng, half, 0.0), np.zeros(k - half)]
            q = np.r_[np.zeros(half), _random_simplex(rng, k - half, 0.0)]
            forced = 0.0
        else:
            q, forced = _random_simplex(rng, k, 0.2), None
        v_star, div = optimal_discriminator_value(DiscreteDistPair(p, q))
        err = abs(v_star - (-LOG4 + 2.0 * div))
        if forced is not None:
            err = max(err, abs(v_star - forced), abs(-LOG4 + 2.0 * div - forced))
        tally.add(err)
    return tally.report(time.perf_counter() - t0)


# soft means


def _random_values(rng: np.random.Generator, n: int) -> np.ndarray:
    """Negative values with pairwise gaps of at least 0.1, in random order.

    The gap keeps ``lam = 100`` large relative to ``1 / gap``, which is the
    regime where the near-max law is meaningful.
    """
    top = -rng.uniform(0.05, 2.0)
    V = top - np.r_[0.0, np.cumsum(0.1 + rng.uniform(0.0, 1.0, n - 1))]
    return rng.permutation(V)


def _closed_form(V: np.ndarray, kind: str) -> float:
    n = len(V)
    if kind == "am":
        return float(V.sum() / n)
    if kind == "gm":
        return float(-np.prod(-V) ** (1.0 / n))
    if kind == "hm":
        return float(n / np.sum(1.0 / V))
    raise ValueError(kind)


def check_softmean_laws(trials: int = 1000, seed: int = 0) -> list[CheckReport]:
    """Boundedness, closed forms, limits, monotonicity, ordering and symmetry of the soft means."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    bounded = _Tally("softmean.bounded", TOL_ALGEBRAIC)
    closed = _Tally("softmean.closed_form_lam0", TOL_ALGEBRAIC)
    near_max = _Tally("softmean.near_max_lam100", 1e-3)
    monotone = _Tally("softmean.strictly_increasing_in_lam", 0.0)
    ordering = _Tally("softmean.am_lt_gm_lt_hm_lt_max", 0.0)
    perm = _Tally("softmean.permutation_invariant", TOL_ALGEBRAIC)

    fixture = np.array([-1.0, -2.0])
    for kind, want in (("am", -1.5), ("gm", -np.sqrt(2.0)), ("hm", -4.0 / 3.0)):
        closed.add(abs(aggregate(fixture, kind, 0.0) - want))

    for t in range(trials):
        n = int(rng.integers(2, 9))
        constant = t < 10
        V = np.full(n, -rng.uniform(0.05, 3.0)) if constant else _random_values(rng, n)
        lo, hi = V.min(), V.max()
        at0 = {}
        for kind in SOFT_KINDS:
            curve = np.array([aggregate(V, kind, lam) for lam in LAMBDA_GRID])
            at0[kind] = curve[0]
            bounded.add(max(0.0, (lo - curve).max(), (curve - hi).max()))
            closed.add(abs(curve[0] - _closed_form(V, kind)))
            p = rng.permutation(n)
            lam = float(rng.uniform(0.0, 10.0))
            perm.add(abs(aggregate(V, kind, lam) - aggregate(V[p], kind, lam)))
            if constant:
                closed.add(np.abs(curve - V[0]).max())
                continue
            near_max.add(abs(hi - curve[-1]) / (hi - lo))
            # once the curve equals max(V) to float64 precision there is nothing left to increase
            saturated = np.abs(curve - hi) <= TOL_ALGEBRAIC * abs(hi)
            stalled = (np.diff(curve) <= 0.0) & ~(saturated[:-1] & saturated[1:])
            monotone.add(float(np.any(stalled)))
        if not constant:
            ordering.add(float(not (at0["am"] < at0["gm"] < at0["hm"] < aggregate(V, "max"))))
    dt = time.perf_counter() - t0
    return [x.report(dt) for x in (bounded, closed, near_max, monotone, ordering, perm)]


# product form of the original generator objective


def check_product_form_identity(trials: int = 1000, eps: float = 0.01,
                                seed: int = 0) -> CheckReport:
    """``(1/N) sum_i log(1 - D_i) == (1/N) log prod_i (1 - D_i)`` per sample."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    tally = _Tally("product_form_identity", TOL_ALGEBRAIC)
    for t in range(trials):
        n = 1 if t == 0 else int(rng.integers(1, 9))
        D = squashed_sigmoid(rng.normal(0.0, 4.0, (16, n)), eps)
        if t == 1:
            n = 5
            D = np.full((16, n), eps + 1e-9)
            D[:, 0] = 1.0 - eps - 1e-9
        lhs = np.log1p(-D).sum(axis=1) / n
        rhs = np.log(np.prod(1.0 - D, axis=1)) / n
        tally.add(np.abs(lhs - rhs).max())
    return tally.report(time.perf_counter() - t0)


# gradients


def numeric_gradient(f: Callable[[list[np.ndarray]], float], inputs: list[np.ndarray],
                     h: float = FD_STEP) -> list[np.ndarray]:
    """Central differences of the scalar ``f`` with respect to every input entry."""
    out = []
    for i, x in enumerate(inputs):
        grad = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            old = x[idx]
            x[idx] = old + h
            up = f(inputs)
            x[idx] = old - h
            down = f(inputs)
            x[idx] = old
            grad[idx] = (up - down) / (2.0 * h)
        out.append(grad)
    return out


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / scale)


def gradcheck(fn: Callable[..., Tensor], inputs: list[np.ndarray],
              rng: np.random.Generator, h: float = FD_STEP) -> float:
    """Worst relative error of reverse-mode gradients of ``fn`` against finite differences.

    The output is contracted with fixed random weights so every output entry
    contributes to the scalar being differentiated.
    """
    inputs = [np.array(x, dtype=np.float64) for x in inputs]
    g = Graph()
    leaves = [g.variable(x.copy()) for x in inputs]
    out = fn(g, *leaves)
    weights = rng.normal(size=out.shape)
    grads = g.backward(g.sum(g.mul(out, g.constant(weights))))

    def scalar(xs):
        g2 = Graph()
        o = fn(g2, *[g2.constant(x.copy()) for x in xs])
        return float(np.sum(o.data * weights))

    numeric = numeric_gradient(scalar, inputs, h)
    return max(relative_error(grads[t], n) for t, n in zip(leaves, numeric))


def _dims(rng, k):
    return tuple(int(d) for d in rng.integers(1, 9, size=k))


def _away_from_zero(rng, shape, lo=0.2, hi=2.0):
    return rng.uniform(lo, hi, shape) * rng.choice([-1.0, 1.0], shape)


def _away_from_kinks(rng, shape):
    # keep relu/max inputs at least 10 steps from their kinks
    return _away_from_zero(rng, shape, 1e-3, 2.0)


def _negative_values(rng):
    return -rng.uniform(0.1, 3.0, int(rng.integers(1, 9)))


def _gradient_cases(rng: np.random.Generator):
    """``(name, fn, inputs)`` for one random instance of every differentiable operation."""
    m, n = _dims(rng, 2)
    k = int(rng.integers(1, 9))
    a, b = rng.normal(size=(m, n)), rng.normal(size=(m, n))
    yield "add", lambda g, x, y: g.add(x, y), [a, b]
    yield "add_broadcast", lambda g, x, y: g.add(x, y), [a, rng.normal(size=n)]
    yield "sub", lambda g, x, y: g.sub(x, y), [a, b]
    yield "mul", lambda g, x, y: g.mul(x, y), [a, b]
    yield "mul_broadcast", lambda g, x, y: g.mul(x, y), [a, rng.normal(size=(1, n))]
    yield "matmul", lambda g, x, y: g.matmul(x, y), [a, rng.normal(size=(n, k))]
    yield "neg", lambda g, x: g.neg(x), [a]
    yield "reciprocal", lambda g, x: g.reciprocal(x), [_away_from_zero(rng, (m, n))]
    yield "relu", lambda g, x: g.relu(x), [_away_from_kinks(rng, (m, n))]
    yield "tanh", lambda g, x: g.tanh(x), [a]
    yield "exp", lambda g, x: g.exp(x), [a]
    yield "log", lambda g, x: g.log(x), [rng.uniform(0.2, 3.0, (m, n))]
    yield "sigmoid", lambda g, x: g.sigmoid(x), [a]
    yield "softplus", lambda g, x: g.softplus(x), [3.0 * a]
    yield "sqrt", lambda g, x: g.sqrt(x), [rng.uniform(0.2, 3.0, (m, n))]
    yield "sum", lambda g, x: g.sum(x), [a]
    yield "sum_axis0", lambda g, x: g.sum(x, axis=0), [a]
    yield "mean", lambda g, x: g.mean(x), [a]
    yield "mean_axis1", lambda g, x: g.mean(x, axis=1), [a]
    yield "reshape", lambda g, x: g.reshape(x, (n, m)), [a]
    yield "concat", lambda g, x, y: g.concat([x, y], axis=0), [a, rng.normal(size=(k, n))]
    yield "stack_scalars", lambda g, x, y: g.stack_scalars([g.sum(x), g.mean(y)]), [a, b]
    lo = int(rng.integers(0, m))
    hi = int(rng.integers(lo + 1, m + 1))
    yield "rows", lambda g, x: g.rows(x, lo, hi), [a]
    v = rng.normal(size=k)
    j = int(rng.integers(0, k))
    yield "index", lambda g, x: g.index(x, j), [v]
    spread = rng.permutation(k) * 0.1 + rng.uniform(0, 0.01, k)
    yield "max", lambda g, x: g.max(x), [spread]
    yield "linear", lambda g, x, w, c: g.linear(x, w, c), [a, rng.normal(size=(n, k)), rng.normal(size=k)]
    rows_bn = max(m, 2)
    yield ("batchnorm", lambda g, x, ga, be: g.batchnorm(x, ga, be, 1e-5),
           [rng.normal(size=(rows_bn, n)), rng.uniform(0.5, 2.0, n), rng.normal(size=n)])
    yield "squashed_sigmoid", lambda g, x: g.squashed_sigmoid(x, 0.01), [3.0 * a]

    d_real = rng.normal(size=(m, 1))
    d_fake = rng.normal(size=(k, 1))

    def value(g, r, f):
        return value_node(g, g.squashed_sigmoid(r, 0.01), g.squashed_sigmoid(f, 0.01))[0]

    yield "minimax_value", value, [d_real, d_fake]
    for mode in ("original", "modified"):
        yield (f"generator_loss.{mode}",
               lambda g, f, mode=mode: generator_loss(g, g.squashed_sigmoid(f, 0.01), mode),
               [d_fake])

    V = _negative_values(rng)
    lam = float(rng.uniform(0.0, 5.0))
    for kind in SOFT_KINDS:
        yield f"aggregate.{kind}.dV", lambda g, x, kind=kind: aggregate_node(g, x, kind, lam), [V]
        yield (f"aggregate.{kind}.dlam",
               lambda g, x, kind=kind: aggregate_node(g, g.constant(V), kind, x),
               [np.array(lam)])
        Lam = float(rng.uniform(-4.0, 4.0))
        yield (f"gman_star.{kind}",
               lambda g, x, L, kind=kind: gman_star_node(g, x, L, 0.001, kind)[0],
               [V, np.array(Lam)])
    spaced = -(0.1 + rng.permutation(len(V)) * 0.1 + rng.uniform(0, 0.01, len(V)))
    yield "aggregate.max.dV", lambda g, x: aggregate_node(g, x, "max", 0.0), [spaced]


def check_gradients(instances: int = 100, seed: int = 0) -> list[CheckReport]:
    """Reverse-mode gradients of every differentiable operation against central differences."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    tallies: dict[str, _Tally] = {}

    fixture = gradcheck(lambda g, x: aggregate_node(g, x, "am", 1.0), [np.array([-1.0, -2.0])], rng)
    tallies["fixture.am_lam1"] = _Tally("gradient.fixture.am_lam1", TOL_GRADIENT)
    tallies["fixture.am_lam1"].add(fixture)

    zero = _Tally("gradient.constant_loss_is_zero", 0.0)
    for _ in range(instances):
        for name, fn, inputs in _gradient_cases(rng):
            tally = tallies.setdefault(name, _Tally(f"gradient.{name}", TOL_GRADIENT))
            tally.add(gradcheck(fn, inputs, rng))
        g = Graph()
        x = g.variable(rng.normal(size=_dims(rng, 2)))
        grads = g.backward(g.sum(g.constant(rng.normal(size=3))))
        zero.add(np.abs(grads[x]).max())
    dt = time.perf_counter() - t0
    return [t.report(dt) for t in tallies.values()] + [zero.report(dt)]


def run_all(seed: int = 0) -> list[CheckReport]:
    reports = [check_optimal_discriminator_identity(seed=seed)]
    reports += check_softmean_laws(seed=seed)
    reports.append(check_product_form_identity(seed=seed))
    reports += check_gradients(seed=seed)
    return reports
