"""Command-line harness: data generation, H estimation, experiment grids, reports.

Exit codes: 0 success, 1 usage, 2 data/parse error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io
from .autodiff import make_rng
from .hopkins import HopkinsConfig, hopkins_statistic
from .metrics import METRIC_NAMES, get_metric
from .models import AutoencoderSpec, MLPClassifierSpec, save_params
from .stats import mann_whitney_u, mean_ci95
from .synth import SynthSpec, generate
from .train import (AUTOENCODER_LR, CLASSIFIER_LR, Dataset, RunRecord, Split, TrainConfig,
                    fit, run_autoencoder, run_classifier)

EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    text = text.strip()
    if text.lower() in ("", "none"):
        return []
    try:
        return [float(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# ---------------------------------------------------------------------------
# experiment configuration
# ---------------------------------------------------------------------------

@dataclass
class ExperimentConfig:
    task: str                      # "classify" | "autoencode"
    targets: list[float]
    weight: float = 0.75
    bottlenecks: list[int] = field(default_factory=lambda: [32, 8, 2])
    repeats: int = 1
    seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    workers: int = 1

    def validate(self, input_dim: int):
        if self.repeats < 1:
            raise UsageError("--repeats must be at least 1")
        if any(not 0.0 <= t <= 1.0 for t in self.targets):
            raise UsageError("every target H must lie in [0, 1]")
        if not 0.0 <= self.weight <= 1.0:
            raise UsageError("--weight must lie in [0, 1]")
        if self.task == "autoencode":
            bad = [b for b in self.bottlenecks if not 0 < b < input_dim]
            if bad:
                raise UsageError(f"bottleneck sizes must be in (0, {input_dim}): {bad}")

    def jobs(self) -> list[tuple[int | None, float | None, int]]:
        """(bottleneck, target or None for baseline, seed) in grid order."""
        bs = self.bottlenecks if self.task == "autoencode" else [None]
        conds = [None, *self.targets]
        return [(b, t, self.seed + r) for b in bs for t in conds for r in range(self.repeats)]


def run_id(bottleneck, target, seed) -> str:
    parts = [] if bottleneck is None else [f"B{bottleneck}"]
    parts.append("baseline" if target is None else f"HT{target:g}")
    parts.append(f"s{seed}")
    return "-".join(parts)


def _job_config(exp: ExperimentConfig, target, seed) -> TrainConfig:
    if target is None:
        return replace(exp.train, weight=1.0, seed=seed)
    hop = replace(exp.train.hopkins, target=target)
    return replace(exp.train, weight=exp.weight, hopkins=hop, seed=seed)


def _run_job(args):
    exp, data, (bottleneck, target, seed), out_dir = args
    cfg = _job_config(exp, target, seed)
    rid = run_id(bottleneck, target, seed)
    log_lines = []
    if exp.task == "classify":
        params, rec = run_classifier(data, cfg, log_lines.append)
        probe = None
    else:
        probe_cfg = replace(cfg, weight=1.0)
        params, probe, rec = run_autoencoder(data, bottleneck, cfg, probe_cfg, log_lines.append)
    if out_dir is not None:
        out = Path(out_dir)
        with open(out / "logs" / f"{rid}.jsonl", "w") as f:
            for line in log_lines:
                f.write(json.dumps(line, sort_keys=True) + "\n")
        save_params(out / "models" / f"{rid}.bin", params)
        if probe is not None:
            save_params(out / "models" / f"{rid}.probe.bin", probe)
    return rid, rec


def run_grid(exp: ExperimentConfig, data: Dataset, out_dir=None) -> list[RunRecord]:
    """Run every (bottleneck, condition, seed) job; optionally persist records and a manifest."""
    exp.validate(data.train.x.shape[1])
    if exp.task == "classify" and (data.train.y is None or data.num_classes < 2):
        raise io.DataError("classification needs a label column with at least 2 classes")
    if out_dir is not None:
        out = Path(out_dir)
        (out / "logs").mkdir(parents=True, exist_ok=True)
        (out / "models").mkdir(parents=True, exist_ok=True)
    jobs = [(exp, data, j, out_dir) for j in exp.jobs()]
    if exp.workers > 1:
        with ProcessPoolExecutor(exp.workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    records = [r for _, r in results]
    if out_dir is not None:
        out = Path(out_dir)
        with open(out / "records.jsonl", "w") as f:
            for _, rec in results:
                f.write(rec.to_json() + "\n")
        manifest = {
            "task": exp.task,
            "grid_size": len(results),
            "conditions": sorted({r.condition for r in records}),
            "runs": [{"id": rid, "condition": r.condition, "seed": r.seed,
                      "config_hash": r.config_hash} for rid, r in results],
        }
        tmp = out / "manifest.json.tmp"
        tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, out / "manifest.json")
    return records


# ---------------------------------------------------------------------------
# data loading
# ---------------------------------------------------------------------------

def _add_data_args(p: argparse.ArgumentParser):
    g = p.add_argument_group("data source (choose one)")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--csv", type=Path, help="feature CSV with an optional 'label' column")
    src.add_argument("--idx", nargs=2, type=Path, metavar=("IMAGES", "LABELS"),
                     help="IDX image and label files (pixels mapped to [-1, 1])")
    src.add_argument("--synth", choices=("grid", "uniform", "clusters"),
                     help="generate a synthetic dataset")
    g.add_argument("--idx-test", nargs=2, type=Path, metavar=("IMAGES", "LABELS"),
                   help="held-out IDX test files; the --idx data is then split 5:1 train/val")
    g.add_argument("--n", type=int, default=3000)
    g.add_argument("--d", type=int, default=16)
    g.add_argument("--clusters", type=int, default=3)
    g.add_argument("--spread", type=float, default=0.05)
    g.add_argument("--jitter", type=float, default=0.1)
    g.add_argument("--data-seed", type=int, default=0)
    g.add_argument("--split", type=_floats, default=[0.6, 0.2, 0.2],
                   help="train,val,test fractions (default 0.6,0.2,0.2)")
    g.add_argument("--split-seed", type=int, default=0)
    g.add_argument("--zscore", action="store_true",
                   help="standardise features with training-split statistics")


def load_data(args) -> Dataset:
    groups = None
    if args.csv is not None:
        table = io.read_features(args.csv)
        x, labels, groups = table.x, table.labels, table.groups
    elif args.idx is not None:
        x, labels = io.read_idx(*args.idx)
    else:
        spec = SynthSpec(args.synth, args.n, args.d, seed=args.data_seed, jitter=args.jitter,
                         num_clusters=args.clusters, spread=args.spread,
                         labelled=args.synth == "clusters")
        x, labels = generate(spec)
    if args.idx is not None and args.idx_test is not None:
        tx, ty = io.read_idx(*args.idx_test)
        tr, va, _ = io.split_indices(x.shape[0], (5 / 6, 1 / 6, 0.0), args.split_seed)
        data = Dataset(Split(x[tr], labels[tr]), Split(x[va], labels[va]), Split(tx, ty),
                       int(max(labels.max(), ty.max())) + 1)
    else:
        data = io.make_dataset(x, labels, args.split, args.split_seed, groups)
    if labels is not None and data.num_classes:
        for s in (data.train, data.val, data.test):
            if s.y is not None and s.y.size and s.y.max() >= data.num_classes:
                raise io.DataError("label out of range")
    return io.zscore(data) if args.zscore else data


def _train_config(args, task: str) -> TrainConfig:
    lr = args.lr if args.lr is not None else (CLASSIFIER_LR if task == "classify" else AUTOENCODER_LR)
    metric = get_metric(args.metric) if args.metric != "mahalanobis" else None
    if metric is None:
        raise UsageError("mahalanobis is not supported for training runs")
    return TrainConfig(lr=lr, batch_size=args.batch_size, max_epochs=args.max_epochs,
                       hopkins=HopkinsConfig(k=args.k, metric=metric),
                       val_hopkins=not args.val_without_hopkins)


def _add_train_args(p, ae: bool):
    p.add_argument("--targets", type=_floats, default=[0.01, 0.5, 0.99],
                   help="comma-separated target H values; '' for baseline only")
    p.add_argument("--weight", type=float, default=0.75,
                   help="weight of the primary loss when the Hopkins term is used")
    if ae:
        p.add_argument("--bottleneck", type=_ints, default=[32, 8, 2])
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-epochs", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=1024)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--metric", choices=METRIC_NAMES, default="chebyshev")
    p.add_argument("--k", type=float, default=0.05)
    p.add_argument("--val-without-hopkins", action="store_true",
                   help="select models on the primary validation loss only")
    p.add_argument("--workers", type=int, default=1)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_gen(args) -> int:
    spec = SynthSpec(args.kind, args.n, args.d, seed=args.seed, jitter=args.jitter,
                     num_clusters=args.clusters, spread=args.spread, labelled=args.labelled)
    x, labels = generate(spec)
    io.write_features(args.out, x, labels)
    h = hopkins_statistic(x, HopkinsConfig(), make_rng(args.seed)).H if x.shape[0] >= 2 else 0.5
    print(f"wrote {x.shape[0]} rows x {x.shape[1]} features to {args.out}")
    print(f"H = {h:.6f}")
    return 0


def cmd_hopkins(args) -> int:
    table = io.read_features(args.file)
    if table.x.shape[0] < 2:
        raise io.DataError(f"{args.file}: need at least 2 rows")
    metric = get_metric(args.metric, table.x)
    cfg = HopkinsConfig(k=args.k, metric=metric)
    hs = []
    for t in range(args.trials):
        h = hopkins_statistic(table.x, cfg, make_rng(args.seed + t)).H
        hs.append(h)
        print(f"trial {t}: H = {h:.10f}")
    if len(hs) >= 2:
        mean, half = mean_ci95(hs)
        print(f"mean H = {mean:.6f} +- {half:.6f} (95% CI, {len(hs)} trials)")
    return 0


def _cmd_train(args, task: str) -> int:
    data = load_data(args)
    exp = ExperimentConfig(task=task, targets=args.targets, weight=args.weight,
                           bottlenecks=getattr(args, "bottleneck", [None]),
                           repeats=args.repeats, seed=args.seed,
                           train=_train_config(args, task), workers=args.workers)
    records = run_grid(exp, data, args.out)
    for rec in records:
        acc = "n/a" if rec.accuracy is None else f"{rec.accuracy:.4f}"
        print(f"{rec.condition:<22} seed={rec.seed:<4} acc={acc} H={rec.hopkins:.4f} "
              f"epochs={rec.epochs}")
    print(f"{len(records)} runs written to {args.out}")
    return 0


def read_records(run_dir) -> list[RunRecord]:
    path = Path(run_dir) / "records.jsonl"
    if not path.exists():
        raise io.DataError(f"{path}: no run records found")
    out = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if line.strip():
            try:
                out.append(RunRecord.from_json(line))
            except (ValueError, TypeError) as e:
                raise io.DataError(f"{path}:{lineno}: bad record ({e})") from None
    return out


def _fmt(v, digits=6):
    return "" if v is None else f"{v:.{digits}f}"


def report(records: list[RunRecord]) -> tuple[list[dict], list[dict]]:
    """Per-condition summary rows and box-plot quantile rows."""
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.bottleneck if r.bottleneck is not None else -1,
                           -1.0 if r.target is None else r.target), []).append(r)
    bottlenecks = sorted({k[0] for k in groups}, reverse=True)
    summary, quantiles = [], []
    for b in bottlenecks:
        conds = sorted(k for k in groups if k[0] == b)
        base = groups.get((b, -1.0))
        if base is None and conds:
            name = "baseline" if b == -1 else f"B={b} baseline"
            raise io.DataError(f"missing baseline condition '{name}'")
        compare = len(conds) > 1
        base_acc = np.array([r.accuracy for r in base if r.accuracy is not None])
        base_h = np.array([r.hopkins for r in base])
        for key in conds:
            runs = groups[key]
            acc = np.array([r.accuracy for r in runs if r.accuracy is not None])
            hs = np.array([r.hopkins for r in runs])
            row = {"condition": runs[0].condition,
                   "bottleneck": "" if b == -1 else b,
                   "target": "" if key[1] < 0 else f"{key[1]:g}",
                   "runs": len(runs),
                   "acc_mean": _fmt(acc.mean()) if acc.size else "",
                   "acc_ci95": _fmt(mean_ci95(acc)[1]) if acc.size >= 2 else "",
                   "H_mean": _fmt(hs.mean()),
                   "H_ci95": _fmt(mean_ci95(hs)[1]) if hs.size >= 2 else ""}
            if compare:
                if key[1] >= 0 and acc.size and base_acc.size:
                    c = mann_whitney_u(acc, base_acc)
                    row.update(U=f"{c.U:g}", p=f"{c.p_two_sided:.6g}", stars=c.stars)
                    t = key[1]
                    row["H_shift"] = _fmt(abs(base_h.mean() - t) - abs(hs.mean() - t))
                else:
                    row.update(U="", p="", stars="", H_shift="")
            summary.append(row)
            for metric, vals in (("accuracy", acc), ("hopkins", hs)):
                if vals.size:
                    q = np.quantile(vals, [0, 0.25, 0.5, 0.75, 1])
                    quantiles.append({"condition": row["condition"], "metric": metric,
                                      "min": _fmt(q[0]), "q1": _fmt(q[1]),
                                      "median": _fmt(q[2]), "q3": _fmt(q[3]),
                                      "max": _fmt(q[4])})
    return summary, quantiles


def _write_csv(path, rows):
    fields = []
    for r in rows:
        fields += [k for k in r if k not in fields]
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fields, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_report(args) -> int:
    records = read_records(args.run_dir)
    summary, quantiles = report(records)
    out = Path(args.out or args.run_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "summary.csv", summary)
    _write_csv(out / "quantiles.csv", quantiles)
    for row in summary:
        sig = f"  p={row['p']} {row['stars']}" if row.get("p") else ""
        ci = f" +- {row['H_ci95']}" if row["H_ci95"] else ""
        print(f"{row['condition']:<22} n={row['runs']:<4} acc={row['acc_mean'] or 'n/a'} "
              f"H={row['H_mean']}{ci}{sig}")
    return 0


def bench_epochs(data: Dataset, task: str, cfg: TrainConfig, epochs: int, weight: float,
                 bottleneck: int = 2) -> dict:
    """Epoch durations (ms) of a fixed-length run without and with the Hopkins term."""
    if epochs <= 0:
        return {}
    if task == "classify":
        spec = MLPClassifierSpec(data.train.x.shape[1], data.num_classes)
    else:
        spec = AutoencoderSpec(data.train.x.shape[1], bottleneck)
    base = replace(cfg, max_epochs=epochs, early_stopping=False)
    out = {}
    for name, w in (("baseline", 1.0), ("hopkins", weight)):
        _, rec = fit(spec, data.train, data.val, replace(base, weight=w))
        out[name] = np.array(rec.epoch_ms)
    return out


def cmd_bench_epoch(args) -> int:
    task = "classify" if args.task == "classify" else "autoencode"
    data = load_data(args)
    if task == "classify" and data.train.y is None:
        raise io.DataError("classification benchmark needs labels")
    cfg = replace(_train_config(args, task), seed=args.seed,
                  hopkins=HopkinsConfig(k=args.k, metric=get_metric(args.metric),
                                        target=args.target))
    timings = bench_epochs(data, task, cfg, args.epochs, args.weight, args.bottleneck)
    print("condition  epochs  mean_ms  sd_ms")
    if not timings:
        return 0
    for name, t in timings.items():
        sd = t.std(ddof=1) if t.size > 1 else 0.0
        print(f"{name:<10} {t.size:>6}  {t.mean():7.2f}  {sd:5.2f}")
    base, hop = timings["baseline"].mean(), timings["hopkins"].mean()
    print(f"overhead: {100.0 * (hop - base) / base:+.1f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hopkinsloss", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic dataset as CSV")
    g.add_argument("--kind", choices=("grid", "uniform", "clusters"), required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--jitter", type=float, default=0.1)
    g.add_argument("--clusters", type=int, default=5)
    g.add_argument("--spread", type=float, default=0.02)
    g.add_argument("--labelled", action="store_true")
    g.add_argument("--out", type=Path, required=True)
    g.set_defaults(func=cmd_gen)

    h = sub.add_parser("hopkins", help="estimate H for a feature CSV")
    h.add_argument("file", type=Path)
    h.add_argument("--metric", choices=METRIC_NAMES, default="chebyshev")
    h.add_argument("--k", type=float, default=0.05)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--trials", type=int, default=1)
    h.set_defaults(func=cmd_hopkins)

    for name, ae in (("train-classify", False), ("train-ae", True)):
        t = sub.add_parser(name, help=f"run the {'autoencoder' if ae else 'classifier'} grid")
        _add_data_args(t)
        _add_train_args(t, ae)
        t.add_argument("--out", type=Path, required=True)
        t.set_defaults(func=(lambda a, task="autoencode" if ae else "classify":
                             _cmd_train(a, task)))

    r = sub.add_parser("report", help="aggregate run records into CSV tables")
    r.add_argument("run_dir", type=Path)
    r.add_argument("--out", type=Path, default=None)
    r.set_defaults(func=cmd_report)

    b = sub.add_parser("bench-epoch", help="compare epoch durations with and without L_H")
    _add_data_args(b)
    b.add_argument("--task", choices=("classify", "ae"), default="classify")
    b.add_argument("--epochs", type=int, default=10)
    b.add_argument("--weight", type=float, default=0.75)
    b.add_argument("--target", type=float, default=0.5)
    b.add_argument("--bottleneck", type=int, default=2)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--max-epochs", type=int, default=1000, help=argparse.SUPPRESS)
    b.add_argument("--batch-size", type=int, default=1024)
    b.add_argument("--lr", type=float, default=None)
    b.add_argument("--metric", choices=METRIC_NAMES[:4], default="chebyshev")
    b.add_argument("--k", type=float, default=0.05)
    b.add_argument("--val-without-hopkins", action="store_true")
    b.set_defaults(func=cmd_bench_epoch)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"hopkinsloss: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (io.DataError, FileNotFoundError) as e:
        print(f"hopkinsloss: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        print(f"hopkinsloss: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        print(f"hopkinsloss: runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
