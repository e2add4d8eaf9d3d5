"""Command-line entry point: ``fusionval {simulate,campaign,metric,validate,report}``.

Exit codes: 0 success, 1 usage or bad input data, 2 invalid config,
3 run failure (budget exceeded for campaigns).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

from . import harness
from .logs import SERIES_COLUMNS, CsvLog, fmt
from .metrics import MetricError, MetricSpec, metric_series
from .validation import (
    PairedError,
    TiePolicy,
    Type1Params,
    Type2Params,
    ValidationError,
    type1_validate,
    type2_validate,
)
from .worldsim import ConfigError

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNS = 0, 1, 2, 3

log = logging.getLogger("fusionval")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fusionval", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def campaign_opts(sp):
        sp.add_argument("--config", type=Path, help="campaign config (TOML); packaged default if omitted")
        sp.add_argument("--seed", type=_u64, help="base seed (run i uses seed + i)")
        sp.add_argument("--out", type=Path, help="output directory")

    sp = sub.add_parser("simulate", help="one paired run")
    campaign_opts(sp)

    sp = sub.add_parser("campaign", help="N paired runs, verdicts and figures")
    campaign_opts(sp)
    sp.add_argument("--runs", type=int, help="number of runs")

    sp = sub.add_parser("metric", help="recompute a metric series from a run's logs")
    sp.add_argument("run_dir", type=Path)
    sp.add_argument("--metric", choices=("cep", "l1", "l2", "linf", "prohorov"), default="cep")
    sp.add_argument("--coverage", type=float, default=0.5)
    sp.add_argument("--cell", type=float, default=50.0, help="grid cell size (m) for distribution metrics")
    sp.add_argument("--area", type=float, nargs=2, default=(2000.0, 2000.0), metavar=("W", "H"))
    sp.add_argument("--engine", action="append", help="engine name(s); all found if omitted")
    sp.add_argument("--out", type=Path, help="output CSV (default: RUN_DIR/series_<metric>.csv)")

    sp = sub.add_parser("validate", help="verdicts from metric series files")
    sp.add_argument("series", type=Path, nargs="+", help="series CSVs (time_s,engine,metric,value), one per run")
    sp.add_argument("--config", type=Path, help="campaign config supplying [type1]/[type2]")
    sp.add_argument("--metric", help="metric label to validate (default: first found)")
    sp.add_argument("--delta", type=float)
    sp.add_argument("--theta", type=float)
    sp.add_argument("--vartheta", type=float)
    sp.add_argument("--tie-policy", choices=[t.value for t in TiePolicy])
    sp.add_argument("--out", type=Path)

    sp = sub.add_parser("report", help="figures and verdict table from a campaign summary")
    sp.add_argument("summary", type=Path)
    sp.add_argument("--out", type=Path)
    return p


def _campaign_config(args, runs: int | None = None):
    path = args.config or harness.default_campaign_path()
    overrides = {"base_seed": args.seed, "n_runs": runs}
    if args.out is not None:
        overrides["output_dir"] = str(args.out.resolve())
    return harness.load_campaign(Path(path), overrides)


def cmd_simulate(args) -> int:
    cfg = _campaign_config(args, runs=1)
    run = harness.run_one(cfg, 0)
    same = len(set(run.stream_digests.values())) == 1
    print(f"{run.run_id}: seed {run.seed}, logs in {run.directory}, paired stream identical: {same}")
    return EXIT_OK


def cmd_campaign(args) -> int:
    cfg = _campaign_config(args, runs=args.runs)
    summary = harness.run_campaign(cfg)
    print((Path(cfg.output_dir) / "verdicts.txt").read_text(), end="")
    if summary["failed_runs"]:
        print(f"{len(summary['failed_runs'])} run(s) failed and were excluded", file=sys.stderr)
    return EXIT_OK


def cmd_metric(args) -> int:
    spec = MetricSpec(
        kind=args.metric, coverage=args.coverage, cell_size_m=args.cell, area_width_m=args.area[0], area_height_m=args.area[1]
    )
    engines = args.engine or sorted(p.stem.split("_", 1)[1] for p in args.run_dir.glob("estimates_*.csv"))
    if not engines:
        raise MetricError(f"no estimate logs in {args.run_dir}")
    out = args.out or args.run_dir / f"series_{spec.label}.csv"
    with CsvLog(out, SERIES_COLUMNS) as w:
        for name in engines:
            series = metric_series(
                args.run_dir / "ground_truth.csv", args.run_dir / f"estimates_{name}.csv", spec, engine=name
            )
            for pt in series:
                w.write(fmt(pt.time_s), name, spec.label, fmt(pt.value))
    print(out)
    return EXIT_OK


def cmd_validate(args) -> int:
    t1 = t2 = None
    if args.config:
        cfg = harness.load_campaign(args.config)
        t1, t2 = cfg.type1, cfg.type2
    if args.delta is not None or args.theta is not None:
        if args.delta is None or args.theta is None:
            raise ConfigError("--delta and --theta go together", key="type1")
        t1 = Type1Params(args.delta, args.theta)
    if args.vartheta is not None or args.tie_policy is not None:
        t2 = Type2Params(
            args.vartheta if args.vartheta is not None else (t2.vartheta if t2 else 0.5),
            tie_policy=args.tie_policy or (t2.tie_policy if t2 else TiePolicy.COUNT_AGAINST),
        )
    if t2 is None:
        t2 = Type2Params(0.5)

    errors: dict[str, list[float]] = defaultdict(list)
    pairs: list[PairedError] = []
    metric = args.metric
    for path in args.series:
        per_engine: dict[str, dict[float, float]] = defaultdict(dict)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                if metric is None:
                    metric = row["metric"]
                if row["metric"] != metric:
                    continue
                per_engine[row["engine"]][float(row["time_s"])] = float(row["value"])
        for name, s in per_engine.items():
            errors[name] += [s[t] for t in sorted(s)]
        if "F" in per_engine and "G" in per_engine:
            f, g = per_engine["F"], per_engine["G"]
            if set(f) != set(g):
                raise ValidationError(f"{path}: F and G series cover different ticks")
            pairs += [PairedError(f[t], g[t], str(path), str(path)) for t in sorted(f)]
    if not errors:
        raise ValidationError(f"no samples for metric {metric!r}")

    rows, lines = [], []
    if t1 is not None:
        for name in sorted(errors):
            v = type1_validate(errors[name], t1)
            rows.append({"metric": metric, "engine": name, **v.as_row()})
            lines.append(f"[{metric}] {name}: {v.describe()}")
    if pairs:
        v = type2_validate(pairs, t2)
        rows.append({"metric": metric, "engine": "F_vs_G", **v.as_row()})
        lines.append(f"[{metric}] F_vs_G: {v.describe()}")
    print("\n".join(lines))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        with open(args.out / "verdicts.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        (args.out / "verdicts.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    summary = json.loads(args.summary.read_text())
    out = args.out or args.summary.parent
    for path in harness.report(summary, out).values():
        print(path)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "campaign": cmd_campaign,
    "metric": cmd_metric,
    "validate": cmd_validate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (harness.CampaignFailure, harness.RunError) as exc:
        print(f"run failure: {exc}", file=sys.stderr)
        return EXIT_RUNS
    except (MetricError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
