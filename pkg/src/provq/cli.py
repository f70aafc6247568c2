"""Command-line front end.

    provq train   --config exp.ini --out runs/a [--seed 7] [--variant provq]
    provq compare --config exp.ini --out runs/cmp --variants vanilla_vq,soft_only,provq --seeds 0-4
    provq plot    runs/a/snapshots/*.json --out runs/a/plots
    provq dataset --dataset-out topodisc.csv

Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import config as configmod
from . import trainer
from .errors import ConfigError, NumericError, ProVQError, SchemaError
from .plot import plot_snapshots
from .topodisc import save_csv

log = logging.getLogger("provq")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3

COMPARE_METRICS = ("mse_hard", "mse_hard_disk", "mse_hard_tri")


class UsageError(ProVQError):
    pass


# -- config -----------------------------------------------------------------


def build_config(args) -> configmod.ExperimentConfig:
    overrides = configmod.parse_overrides(getattr(args, "set", None))
    flags = {}
    if getattr(args, "seed", None) is not None:
        flags["seed"] = args.seed
    if getattr(args, "variant", None) is not None:
        flags["variant"] = args.variant
    if flags:
        overrides.setdefault("run", {}).update(flags)
    if args.config:
        return configmod.load(args.config, overrides)
    return configmod.from_dict(overrides)


# -- train ------------------------------------------------------------------


def snapshot_name(step):
    return f"step_{step:06d}.json"


def train_to_dir(cfg, out: Path, resume=None) -> trainer.RunResult:
    """Run one experiment and write all artifacts under ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    state = None
    if resume is not None:
        state, _ = trainer.load_checkpoint(resume, cfg)
    result = trainer.run_experiment(cfg, state=state)
    trainer.write_metrics_csv(result.series, out / "metrics.csv")
    for step, snap in sorted(result.snapshots.items()):
        trainer.save_snapshot(snap, out / "snapshots" / snapshot_name(step))
    trainer.save_checkpoint(result.state, cfg, out / "checkpoint.json")
    (out / "config.ini").write_text(configmod.dumps(cfg))
    summary = {
        "config": result.config,
        "final": {k: result.final[k] for k in ("step", "stage", "alpha", "omega", "losses", "metrics")},
        "series": result.series,
        "seconds": result.seconds,
    }
    (out / "result.json").write_text(json.dumps(summary, indent=1))
    return result


def summary_line(result) -> str:
    m = result.final["metrics"]
    return (f"step={result.final['step']} stage={result.final['stage']} "
            f"mse_hard={m['mse_hard']:.6g} disk={m['mse_hard_disk']:.6g} "
            f"tri={m['mse_hard_tri']:.6g} perplexity={m['perplexity']:.4g} "
            f"utilization={m['utilization']:.4g} pairdist={m['pairdist']:.4g}")


def cmd_train(args) -> int:
    cfg = build_config(args)
    out = Path(args.out)
    if args.dataset_out:
        save_csv(trainer.load_dataset(cfg), args.dataset_out)
    result = train_to_dir(cfg, out, resume=args.resume)
    print(summary_line(result))
    return EXIT_OK


# -- compare ----------------------------------------------------------------


@dataclass
class CompareReport:
    variants: list
    seeds: list
    raw: dict  # variant -> {metric: [per-seed values]}
    failures: list = field(default_factory=list)
    baseline: str = "vanilla_vq"

    def mean(self, variant, metric):
        vals = self.raw.get(variant, {}).get(metric, [])
        return float(np.mean(vals)) if vals else float("nan")

    def std(self, variant, metric):
        vals = self.raw.get(variant, {}).get(metric, [])
        return float(np.std(vals)) if vals else float("nan")

    def improvement(self, variant, metric):
        """Percent improvement of ``variant`` over the baseline (positive = lower MSE)."""
        base = self.mean(self.baseline, metric)
        return 100.0 * (base - self.mean(variant, metric)) / base

    def rows(self):
        for v in self.variants:
            row = {"variant": v, "n_ok": len(self.raw.get(v, {}).get("mse_hard", []))}
            for m in COMPARE_METRICS:
                row[f"{m}_mean"] = self.mean(v, m)
                row[f"{m}_std"] = self.std(v, m)
            for m, label in zip(COMPARE_METRICS, ("overall", "disk", "tri")):
                row[f"improve_{label}_pct"] = self.improvement(v, m)
            for m in ("utilization", "norm_perplexity", "pairdist"):
                row[f"{m}_mean"] = self.mean(v, m)
            yield row

    def format(self) -> str:
        lines = [f"{'variant':<12} {'n':>2} {'mse_hard':>20} {'disk':>20} {'tri':>20} "
                 f"{'d_all%':>7} {'d_disk%':>7} {'d_tri%':>7}"]
        for r in self.rows():
            cells = [f"{r[m + '_mean']:.5f}±{r[m + '_std']:.5f}" for m in COMPARE_METRICS]
            lines.append(
                f"{r['variant']:<12} {r['n_ok']:>2} {cells[0]:>20} {cells[1]:>20} {cells[2]:>20} "
                f"{r['improve_overall_pct']:>+7.1f} {r['improve_disk_pct']:>+7.1f} "
                f"{r['improve_tri_pct']:>+7.1f}"
            )
        for f in self.failures:
            lines.append(f"FAILED {f['variant']} seed={f['seed']}: {f['error']}")
        return "\n".join(lines)

    def write_csv(self, path):
        rows = list(self.rows())
        with open(path, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=list(rows[0]))
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _compare_job(cfg_dict, out_dir):
    cfg = configmod.from_dict(cfg_dict)
    try:
        result = train_to_dir(cfg, Path(out_dir))
    except ProVQError as exc:
        return cfg.variant, cfg.seed, None, f"{type(exc).__name__}: {exc}"
    return cfg.variant, cfg.seed, result.final["metrics"], None


def thread_cap():
    raw = os.environ.get("PROVQ_THREADS")
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"PROVQ_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def run_compare(base_cfg, variants, seeds, out: Path, workers=1) -> CompareReport:
    if len(variants) < 2:
        raise UsageError("compare needs at least two variants")
    unknown = [v for v in variants if v not in configmod.VARIANTS]
    if unknown:
        raise ConfigError(f"unknown variant(s) {unknown}; choose from {configmod.VARIANTS}")
    baseline = "vanilla_vq" if "vanilla_vq" in variants else variants[0]
    jobs = []
    for v in variants:
        for s in seeds:
            cfg = replace(base_cfg, variant=v, seed=s)
            jobs.append((configmod.to_dict(cfg), str(out / v / f"seed_{s}")))

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_compare_job, *zip(*jobs)))
    else:
        results = [_compare_job(*j) for j in jobs]

    raw = {v: {} for v in variants}
    failures = []
    for variant, seed, metrics, err in results:
        if err is not None:
            failures.append({"variant": variant, "seed": seed, "error": err})
            continue
        for k, val in metrics.items():
            raw[variant].setdefault(k, []).append(val)
    return CompareReport(list(variants), list(seeds), raw, failures, baseline)


def parse_seeds(text):
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError("no seeds given")
    return seeds


def cmd_compare(args) -> int:
    cfg = build_config(args)
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    try:
        seeds = parse_seeds(args.seeds)
    except ValueError as exc:
        raise ConfigError(f"bad --seeds value {args.seeds!r}: {exc}") from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_compare(cfg, variants, seeds, out, workers=thread_cap())
    print(report.format())
    report.write_csv(out / "compare.csv")
    return EXIT_RUNTIME if report.failures else EXIT_OK


# -- plot / dataset ---------------------------------------------------------


def cmd_plot(args) -> int:
    if not args.snapshots:
        raise UsageError("plot needs at least one snapshot path")
    snaps = [trainer.load_snapshot(p) for p in args.snapshots]
    out = Path(args.out)
    paths = [out / (Path(p).stem + ".svg") for p in args.snapshots]
    for p in plot_snapshots(snaps, paths):
        print(p)
    return EXIT_OK


def cmd_dataset(args) -> int:
    cfg = build_config(args)
    target = args.dataset_out or (Path(args.out) / "topodisc.csv" if args.out else None)
    if target is None:
        raise UsageError("dataset needs --dataset-out or --out")
    data = trainer.load_dataset(cfg)
    save_csv(data, target)
    print(f"{target}: {len(data)} points")
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def _add_shared(p, out_required=True):
    p.add_argument("--config", help="INI experiment config (defaults used when omitted)")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=configmod.VARIANTS)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override a config key (repeatable)")


def build_parser():
    parser = argparse.ArgumentParser(prog="provq", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run one experiment")
    _add_shared(p)
    p.add_argument("--dataset-out", help="also write the dataset as CSV")
    p.add_argument("--resume", help="checkpoint file to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="run variants x seeds and tabulate")
    _add_shared(p)
    p.add_argument("--variants", default="vanilla_vq,soft_only,provq")
    p.add_argument("--seeds", default="0-4", help="e.g. 0-4 or 0,3,7")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", help="render snapshot JSONs to SVG")
    p.add_argument("snapshots", nargs="*")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("dataset", help="write the TopoDisc dataset as CSV")
    _add_shared(p, out_required=False)
    p.add_argument("--dataset-out")
    p.set_defaults(func=cmd_dataset)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SchemaError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"I/O failure: {exc.filename or ''} {exc.strerror or exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
