"""Command-line entry point: train, gmam, report, sweep and check.

Exit codes: 0 on success, 2 for configuration or input errors, 3 when a run
aborts at runtime (non-finite values, unreadable data). ``check`` exits 1
when any property check fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .checks import reports_to_csv, reports_to_text, run_all
from .config import ConfigError, TrainConfig, family, load as _load_config, resolve_variant
from .datasets import IdxFormatError
from .evaluation import (TrainedSystem, convergence_report, default_min_count, family_threshold,
                         generator_samples, gmam, load_run, mode_coverage, tournament)
from .training import RunLog, TrainingAborted, make_mixture, train

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("gman")


class InputError(Exception):
    """Bad command-line input other than a config file (exit code 2)."""


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def load_config(path) -> TrainConfig:
    if not Path(path).is_file():
        raise InputError(f"config file {path} does not exist")
    return _load_config(path)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_id(config: TrainConfig) -> str:
    name = config.variant.replace("*", "star")
    return re.sub(r"[^A-Za-z0-9_.-]", "_", f"{name}_n{config.n}_seed{config.seed}")


def write_manifest(out: Path, config: TrainConfig, runlog: RunLog, started: str) -> dict:
    artifacts = {"config": "config.json", "runlog": "runlog.csv", "checkpoints": runlog.checkpoints}
    for rel in [artifacts["config"], artifacts["runlog"], *runlog.checkpoints]:
        if not (out / rel).exists():
            raise FileNotFoundError(f"manifest artifact {rel} is missing in {out}")
    manifest = {
        "run_id": run_id(config),
        "family": family(config),
        "config": config.to_dict(),
        "artifacts": artifacts,
        "iterations_logged": len(runlog.records),
        "started": started,
        "finished": _now(),
        "tool_version": __version__,
    }
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _apply_overrides(config: TrainConfig, args) -> TrainConfig:
    raw = config.to_dict()
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "iterations", None) is not None:
        raw["iterations"] = args.iterations
    return TrainConfig.from_dict(raw)


def _train_one(config: TrainConfig, out: Path) -> dict:
    started = _now()
    runlog = train(config, out)
    return write_manifest(out, config, runlog, started)


# subcommands


def cmd_train(args) -> int:
    config = _apply_overrides(load_config(args.config), args)
    out = Path(args.out)
    manifest = _train_one(config, out)
    print(f"{manifest['run_id']}: {manifest['iterations_logged']} iterations logged to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    base = load_config(args.config).to_dict()
    root = Path(args.out)
    status = EXIT_OK
    entries = []
    for variant in args.variants:
        forced_n = resolve_variant(variant)[2]
        for seed in args.seeds:
            raw = dict(base, variant=variant, seed=seed)
            raw.pop("aggregation", None)
            raw.pop("loss_mode", None)
            raw["ensemble"] = dict(raw["ensemble"], n=forced_n or base["ensemble"]["n"])
            if args.iterations is not None:
                raw["iterations"] = args.iterations
            config = TrainConfig.from_dict(raw)
            out = root / run_id(config)
            try:
                _train_one(config, out)
                entries.append({"run": out.name, "status": "ok"})
                print(f"{out.name}: done")
            except TrainingAborted as e:
                entries.append({"run": out.name, "status": f"aborted: {e}"})
                print(f"{out.name}: aborted ({e})", file=sys.stderr)
                status = EXIT_RUNTIME
    atomic_write(root / "sweep.json", json.dumps({"runs": entries, "finished": _now(),
                                                  "tool_version": __version__}, indent=2) + "\n")
    return status


def _group(systems: list[TrainedSystem]) -> dict[str, list[TrainedSystem]]:
    groups: dict[str, list[TrainedSystem]] = defaultdict(list)
    for s in sorted(systems, key=lambda s: (s.label, s.config.seed)):
        groups[s.label].append(s)
    return dict(groups)


def cmd_gmam(args) -> int:
    systems = [load_run(d) for d in args.runs]
    if len(systems) < 2:
        raise InputError("gmam needs at least two run directories")
    buf = io.StringIO()
    if len(systems) == 2:
        a, b = systems
        try:
            res = gmam(a, b, n_batches=args.batches, seed=args.eval_seed)
        except ValueError as e:
            raise InputError(str(e)) from e
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run_a", "run_b", "score", "Fa_Gb", "Fa_Ga", "Fb_Ga", "Fb_Gb", "n_samples"])
        w.writerow([args.runs[0], args.runs[1], repr(res.score), *map(repr, res.components),
                    res.n_samples])
        verdict = "b is better" if res.score > 0 else "a is better" if res.score < 0 else "tie"
        summary = f"GMAM(a={a.label}, b={b.label}) = {res.score:+.6f} ({verdict})"
    else:
        groups = _group(systems)
        if len(groups) < 2:
            groups = {f"{s.label} seed={s.config.seed}": [s] for s in systems}
        try:
            table = tournament(groups, n_batches=args.batches, seed=args.eval_seed)
        except ValueError as e:
            raise InputError(str(e)) from e
        buf.write(table.to_csv())
        order = np.argsort(-table.scores, kind="stable")
        summary = "\n".join(f"{table.scores[i]:+.4f}  {table.labels[i]}" for i in order)
    if args.out:
        atomic_write(Path(args.out), buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    print(summary, file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


def _family_curves(logs: list[RunLog], key: str):
    grids = {tuple(l.iterations()) for l in logs}
    if len(grids) != 1:
        raise InputError("runs in the same family have mismatched iteration grids")
    data = np.stack([l.series(key) for l in logs])
    std = data.std(axis=0, ddof=1) if len(logs) > 1 else np.zeros(data.shape[1])
    return np.array(grids.pop()), data.mean(axis=0), std


def cmd_report(args) -> int:
    systems = []
    for d in args.runs:
        d = Path(d)
        config = load_config(d / "config.json")
        if not (d / "runlog.csv").exists():
            raise InputError(f"{d} has no runlog.csv")
        runlog = RunLog.from_csv((d / "runlog.csv").read_text(), config.to_dict())
        system = load_run(d) if (d / "final").exists() else TrainedSystem(config, None, [], log=runlog, path=d)
        systems.append(system)
    out = Path(args.out)
    groups = _group(systems)

    curves = io.StringIO()
    cw = csv.writer(curves, lineterminator="\n")
    cw.writerow(["family", "iter", "F_mean", "F_std", "sliding_stdev_mean", "lambda_mean", "n_runs"])
    steady = io.StringIO()
    sw = csv.writer(steady, lineterminator="\n")
    sw.writerow(["family", "run", "seed", "window", "threshold", "steady_state_iter"])
    cover = io.StringIO()
    vw = csv.writer(cover, lineterminator="\n")
    vw.writerow(["family", "run", "seed", "covered", "modes", "high_quality", "counts"])
    prov = io.StringIO()
    pw = csv.writer(prov, lineterminator="\n")
    pw.writerow(["family", "run", "seed"])

    plot_data = {}
    for label, members in groups.items():
        logs = [s.log for s in members]
        iters, f_mean, f_std = _family_curves(logs, "F")
        sds = []
        try:
            threshold = family_threshold([s.log.series("F") for s in members], args.window, args.rule)
        except ValueError as e:
            raise InputError(f"{label}: {e}") from e
        for s in members:
            rep = convergence_report(s.log.series("F"), args.window, threshold)
            sds.append(rep.stdev)
            sw.writerow([label, s.path.name, s.config.seed, args.window, repr(rep.threshold),
                         rep.steady_state if rep.reached else "not-reached"])
            pw.writerow([label, s.path.name, s.config.seed])
            mixture = make_mixture(s.config.dataset)
            if s.generator is not None and mixture is not None:
                cov = mode_coverage(generator_samples(s), mixture, args.radius_mult,
                                    default_min_count(s.config.batch_size))
                vw.writerow([label, s.path.name, s.config.seed, cov.covered, mixture.k,
                             repr(cov.high_quality), " ".join(map(str, cov.counts))])
        sd_mean = np.mean(sds, axis=0)
        lam = _family_curves(logs, "lambda")[1] if members[0].config.aggregation.learned else None
        for t in range(len(iters)):
            sd = repr(sd_mean[t - args.window + 1]) if t >= args.window - 1 else ""
            cw.writerow([label, iters[t], repr(f_mean[t]), repr(f_std[t]), sd,
                         "" if lam is None else repr(lam[t]), len(members)])
        plot_data[label] = (iters, f_mean, f_std, sd_mean, lam)

    atomic_write(out / "curves.csv", curves.getvalue())
    atomic_write(out / "steady_state.csv", steady.getvalue())
    atomic_write(out / "coverage.csv", cover.getvalue())
    atomic_write(out / "provenance.csv", prov.getvalue())
    if not args.no_plots:
        _plots(out, plot_data, args.window, args.deterministic_plots)
    print(f"report for {len(systems)} runs in {len(groups)} families written to {out}")
    return EXIT_OK


def _plots(out: Path, data: dict, window: int, deterministic: bool) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    meta = {"Date": None, "Creator": None} if deterministic else {}
    if deterministic:
        matplotlib.rcParams["svg.hashsalt"] = "gman"

    def save(fig, name):
        tmp = out / f".{name}.tmp.svg"
        fig.savefig(tmp, format="svg", metadata=meta)
        os.replace(tmp, out / name)
        plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4))
    for label, (it, m, s, _, _) in data.items():
        ax.plot(it, m, lw=0.8, label=label)
        ax.fill_between(it, m - s, m + s, alpha=0.25)
    ax.set_xlabel("iteration")
    ax.set_ylabel("F")
    ax.legend()
    save(fig, "F_mean.svg")

    fig, ax = plt.subplots(figsize=(7, 4))
    for label, (it, _, _, sd, _) in data.items():
        ax.plot(it[window - 1:], sd, lw=0.8, label=label)
    ax.set_xlabel("iteration")
    ax.set_ylabel(f"stdev of F over {window} iterations")
    ax.set_yscale("log")
    ax.legend()
    save(fig, "sliding_stdev.svg")

    learned = {k: v for k, v in data.items() if v[4] is not None}
    if learned:
        fig, ax = plt.subplots(figsize=(7, 4))
        for label, (it, _, _, _, lam) in learned.items():
            ax.plot(it, lam, lw=0.8, label=label)
        ax.set_xlabel("iteration")
        ax.set_ylabel("lambda")
        ax.legend()
        save(fig, "lambda.svg")


def cmd_check(args) -> int:
    reports = run_all(seed=args.seed)
    sys.stdout.write(reports_to_text(reports))
    if args.out:
        atomic_write(Path(args.out), reports_to_csv(reports))
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK_FAILED


# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gman", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one configuration")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True, help="run directory")
    t.add_argument("--seed", type=int, help="override the master seed")
    t.add_argument("--iterations", type=int, help="override the iteration count")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="train every variant x seed combination")
    s.add_argument("--config", required=True, help="base configuration")
    s.add_argument("--out", required=True, help="parent directory for the runs")
    s.add_argument("--variants", nargs="+", required=True)
    s.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2, 3, 4])
    s.add_argument("--iterations", type=int)
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("gmam", help="score runs against each other")
    g.add_argument("runs", nargs="+", help="two run directories, or more for a tournament")
    g.add_argument("--out", help="CSV destination (default stdout)")
    g.add_argument("--batches", type=int, default=10, help="evaluation batches of the training batch size")
    g.add_argument("--eval-seed", type=int, default=0)
    g.set_defaults(func=cmd_gmam)

    r = sub.add_parser("report", help="curves, steady state and mode coverage")
    r.add_argument("runs", nargs="+")
    r.add_argument("--out", required=True)
    r.add_argument("--window", type=int, default=500)
    r.add_argument("--rule", type=float, default=0.1,
                   help="steady-state threshold as a fraction of the first window's stdev")
    r.add_argument("--radius-mult", type=float, default=3.0)
    r.add_argument("--deterministic-plots", action="store_true",
                   help="omit timestamps and random ids from SVG output")
    r.add_argument("--no-plots", action="store_true")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("check", help="run the property suite")
    c.add_argument("--out", help="CSV destination")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_check)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingAborted as e:
        print(f"training aborted: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except (IdxFormatError, OSError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
