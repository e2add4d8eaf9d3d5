"""Paired control/test campaign runner.

Every run drives one simulated world and hands the same observation stream to
the engine under test (``F``) and to the standard engine (``G``). Errors of
both against ground truth feed the Type-1/Type-2 verdicts and the trend and
cumulative-probability outputs.
"""
from __future__ import annotations

import json
import logging
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from . import analysis, rng as rngmod
from .fusion import FusionEngine, make_engine, strip
from .logs import (
    ESTIMATE_COLUMNS,
    GROUND_TRUTH_COLUMNS,
    INGEST_COLUMNS,
    REPORT_COLUMNS,
    SERIES_COLUMNS,
    CsvLog,
    estimate_rows,
    fmt,
    ingest_row,
    report_row,
    truth_rows,
)
from .metrics import MetricError, MetricSpec, evaluate, grid_for_area, read_estimates, read_ground_truth, rasterize, uniform_distribution
from .validation import (
    PairedError,
    Snapshot,
    Type1Params,
    Type2Params,
    ValidationVerdict,
    type1_validate,
    type2_validate,
)
from .worldsim import (
    RED,
    ConfigError,
    Scenario,
    apply_deception,
    blue_positions,
    init_world,
    initial_intel,
    observe,
    scenario_from_mapping,
    step_world,
)
from .worldsim.scenario import parse_toml

log = logging.getLogger(__name__)

TICK_S = 60.0
FAILURE_BUDGET = 0.10
Q_READ = 0.6
X_READ_M = 50.0


class RunError(RuntimeError):
    pass


class CampaignFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    scenario: Scenario
    engines: Mapping[str, Mapping[str, Any]]
    n_runs: int = 50
    base_seed: int = 0
    metrics: tuple[MetricSpec, ...] = (MetricSpec(),)
    type1: Type1Params | None = None
    type2: Type2Params = Type2Params(vartheta=0.5)
    output_dir: Path = Path("campaign_out")
    workers: int = 1
    lowess_frac: float = 0.3
    lowess_iters: int = 2

    def __post_init__(self):
        if self.n_runs < 1:
            raise ConfigError("n_runs must be >= 1", key="n_runs")
        if set(self.engines) != {"F", "G"}:
            raise ConfigError("engines must define exactly F (under test) and G (standard)", key="engines")
        for name, spec in self.engines.items():
            if "kind" not in spec:
                raise ConfigError(f"engines.{name}.kind is required", key=f"engines.{name}.kind")
            try:
                make_engine(spec, name, self.scenario.area_width_m, self.scenario.area_height_m)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"engines.{name}: {exc}", key=f"engines.{name}") from exc
        if not self.metrics:
            raise ConfigError("at least one metric is required", key="metrics")

    def run_seed(self, run_index: int) -> int:
        return self.base_seed + run_index

    @property
    def primary(self) -> MetricSpec:
        return self.metrics[0]


def _metric_specs(names, coverage: float, cell_size_m: float, scenario: Scenario) -> tuple[MetricSpec, ...]:
    specs = []
    for name in names:
        try:
            specs.append(
                MetricSpec(
                    kind=name,
                    coverage=coverage,
                    cell_size_m=cell_size_m,
                    area_width_m=scenario.area_width_m,
                    area_height_m=scenario.area_height_m,
                )
            )
        except MetricError as exc:
            raise ConfigError(str(exc), key="metrics") from exc
    return tuple(specs)


_CAMPAIGN_KEYS = {
    "scenario", "engines", "n_runs", "base_seed", "metrics", "coverage", "cell_size_m",
    "type1", "type2", "output_dir", "workers", "lowess_frac", "lowess_iters",
}


def load_campaign(source: str | Path, overrides: Mapping[str, Any] | None = None) -> CampaignConfig:
    """Read a campaign config file (or text).

    ``scenario`` is either a path (relative to the campaign file) or an inline
    table. ``overrides`` replace top-level keys after parsing.
    """
    base_dir = Path(".")
    if isinstance(source, Path):
        base_dir = source.parent
        source = source.read_text()
    data = parse_toml(source)
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(data) - _CAMPAIGN_KEYS
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown config key {key}", key=key)
    sc = data.get("scenario", {})
    if isinstance(sc, str):
        path = Path(sc) if Path(sc).is_absolute() else base_dir / sc
        if not path.exists():
            packaged = resources.files("fusionval") / "data" / sc
            if not packaged.is_file():
                raise ConfigError(f"scenario file not found: {path}", key="scenario")
            sc = packaged.read_text()
        else:
            sc = path.read_text()
        scenario = scenario_from_mapping(parse_toml(sc))
    elif isinstance(sc, Mapping):
        scenario = scenario_from_mapping(sc)
    else:
        raise ConfigError("scenario must be a path or a table", key="scenario")
    try:
        t1 = Type1Params(**data["type1"]) if "type1" in data else None
        t2 = Type2Params(**data.get("type2", {"vartheta": 0.5}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"validation parameters: {exc}", key="type1/type2") from exc
    out = Path(data.get("output_dir", "campaign_out"))
    names = data.get("metrics", ["cep"])
    if isinstance(names, str):
        names = [names]
    return CampaignConfig(
        scenario=scenario,
        engines={k: dict(v) for k, v in data.get("engines", default_engines()).items()},
        n_runs=int(data.get("n_runs", 50)),
        base_seed=int(data.get("base_seed", scenario.rng_seed)),
        metrics=_metric_specs(names, float(data.get("coverage", 0.5)), float(data.get("cell_size_m", 50.0)), scenario),
        type1=t1,
        type2=t2,
        output_dir=out if out.is_absolute() else base_dir / out,
        workers=int(data.get("workers", 1)),
        lowess_frac=float(data.get("lowess_frac", 0.3)),
        lowess_iters=int(data.get("lowess_iters", 2)),
    )


def default_engines() -> dict[str, dict]:
    return {"F": {"kind": "grid_bayes"}, "G": {"kind": "staff_surrogate"}}


def default_scenario_text() -> str:
    return (resources.files("fusionval") / "data" / "default_scenario.toml").read_text()


def default_campaign_path() -> Path:
    return Path(str(resources.files("fusionval") / "data" / "default_campaign.toml"))


# ---------------------------------------------------------------------------
# one run


@dataclass
class RunArtifacts:
    run_id: str
    seed: int
    directory: Path
    ground_truth_log: Path
    report_log: Path
    estimate_logs: dict[str, Path]
    ingest_logs: dict[str, Path]
    series_log: Path
    stream_digests: dict[str, str]
    # engine -> metric label -> [(time_s, value, substituted)]
    series: dict[str, dict[str, list[tuple[float, float, bool]]]] = field(default_factory=dict)


def run_one(config: CampaignConfig, run_index: int, out_dir: Path | None = None) -> RunArtifacts:
    """Simulate one paired run and write its logs under ``out_dir``."""
    seed = config.run_seed(run_index)
    run_id = f"run{run_index:03d}"
    directory = Path(out_dir or config.output_dir) / run_id
    directory.mkdir(parents=True, exist_ok=True)
    scenario = config.scenario.with_seed(seed)
    n_ticks = int(math.floor(scenario.duration_s / TICK_S + 1e-9))

    engines: dict[str, FusionEngine] = {
        name: make_engine(spec, name, scenario.area_width_m, scenario.area_height_m, seed)
        for name, spec in sorted(config.engines.items())
    }
    paths = {
        "truth": directory / "ground_truth.csv",
        "reports": directory / "reports.csv",
        "series": directory / "series.csv",
    }
    est_paths = {n: directory / f"estimates_{n}.csv" for n in engines}
    ing_paths = {n: directory / f"ingest_{n}.csv" for n in engines}
    series: dict[str, dict[str, list]] = {n: {m.label: [] for m in config.metrics} for n in engines}

    logs = [CsvLog(paths["truth"], GROUND_TRUTH_COLUMNS), CsvLog(paths["reports"], REPORT_COLUMNS)]
    est_logs = {n: CsvLog(p, ESTIMATE_COLUMNS) for n, p in est_paths.items()}
    ing_logs = {n: CsvLog(p, INGEST_COLUMNS) for n, p in ing_paths.items()}
    truth_log, report_log = logs
    stage = "init_world"
    tick = 0
    try:
        state = init_world(scenario, rngmod.substream(seed, rngmod.INIT))
        stage = "initial_intel"
        intel = initial_intel(scenario, state, rngmod.substream(seed, rngmod.INTEL))
        period = scenario.observer.report_period_s
        for tick in range(n_ticks + 1):
            t = tick * TICK_S
            if tick:
                stage = "step_world"
                state = step_world(state, TICK_S, rngmod.substream(seed, rngmod.ATTRITION, tick))
            stage = "apply_deception"
            view = apply_deception(state, scenario.deception, rngmod.substream(seed, rngmod.DECEPTION, tick))
            stage = "observe"
            reports = list(intel) if tick == 0 else []
            if abs(t / period - round(t / period)) < 1e-9:
                reports += observe(
                    view, scenario.observer, blue_positions(state), t, rngmod.substream(seed, rngmod.OBSERVE, tick)
                )
            for row in truth_rows(view.state):
                truth_log.write(*row)
            for r in reports:
                report_log.write(*report_row(r))
            stage = "ingest"
            stream = [strip(r) for r in reports]
            for name, engine in engines.items():
                for obs in stream:
                    engine.ingest(obs)
                    ing_logs[name].write(*ingest_row(obs))
            stage = "estimate"
            actual = [(e.position, float(e.strength)) for e in state.entities if e.side == RED]
            for name, engine in engines.items():
                snap = engine.estimate(t)
                for row in estimate_rows(snap):
                    est_logs[name].write(*row)
                stage = "metric"
                for spec in config.metrics:
                    pt = evaluate(spec, actual, list(snap.locations))
                    series[name][spec.label].append((t, pt.value, pt.substituted))
                stage = "estimate"
    except Exception as exc:
        raise RunError(f"{run_id} (seed {seed}) failed at tick {tick}, stage {stage}: {exc}") from exc
    finally:
        for lg in [*logs, *est_logs.values(), *ing_logs.values()]:
            lg.close()

    with CsvLog(paths["series"], SERIES_COLUMNS) as out:
        for name in sorted(series):
            for label, pts in series[name].items():
                for t, v, _ in pts:
                    out.write(fmt(t), name, label, fmt(v))
    digests = {n: e.stream_digest for n, e in engines.items()}
    (directory / "manifest.json").write_text(
        json.dumps({"run_id": run_id, "seed": seed, "stream_digests": digests}, indent=2, sort_keys=True) + "\n"
    )
    return RunArtifacts(
        run_id=run_id,
        seed=seed,
        directory=directory,
        ground_truth_log=paths["truth"],
        report_log=paths["reports"],
        estimate_logs=est_paths,
        ingest_logs=ing_paths,
        series_log=paths["series"],
        stream_digests=digests,
        series=series,
    )


def _run_safely(args):
    config, index, out_dir = args
    try:
        return run_one(config, index, out_dir)
    except RunError as exc:
        return exc


# ---------------------------------------------------------------------------
# campaign


def _median(values):
    return float(statistics.median(values)) if values else float("nan")


def run_campaign(config: CampaignConfig, out_dir: Path | None = None, write_report: bool = True) -> dict:
    """Execute all runs, then aggregate, validate and (optionally) report."""
    out_dir = Path(out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(config, i, out_dir) for i in range(config.n_runs)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_safely, jobs))
    else:
        results = [_run_safely(j) for j in jobs]
    runs = [r for r in results if isinstance(r, RunArtifacts)]
    failures = [str(r) for r in results if isinstance(r, RunError)]
    for msg in failures:
        log.error(msg)
    if len(failures) > FAILURE_BUDGET * config.n_runs:
        raise CampaignFailure(f"{len(failures)} of {config.n_runs} runs failed (budget {FAILURE_BUDGET:.0%})")
    if not runs:
        raise CampaignFailure("no run completed")
    summary = summarize(config, runs, failures)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    if write_report:
        report(summary, out_dir)
    return summary


def summarize(config: CampaignConfig, runs: list[RunArtifacts], failures: list[str]) -> dict:
    duration = config.scenario.duration_s
    primary = config.primary.label
    engines = sorted(config.engines)
    verdicts: list[dict] = []

    for spec in config.metrics:
        label = spec.label
        pairs = []
        for run in runs:
            f_pts, g_pts = run.series["F"][label], run.series["G"][label]
            if [p[0] for p in f_pts] != [p[0] for p in g_pts]:
                raise CampaignFailure(f"{run.run_id}: F and G series cover different ticks")
            pairs += [
                PairedError(f[1], g[1], run.stream_digests["F"], run.stream_digests["G"]) for f, g in zip(f_pts, g_pts)
            ]
        v2 = type2_validate(pairs, config.type2)
        verdicts.append(_verdict_entry(v2, label, "F_vs_G", tie_policy=config.type2.tie_policy.value))
        if config.type1 is not None and label == primary:
            for name in engines:
                errs = [p[1] for run in runs for p in run.series[name][label]]
                v1 = type1_validate(errs, config.type1)
                verdicts.append(_verdict_entry(v1, label, name, delta=config.type1.delta))

    samples = {name: [[p[0], p[1]] for run in runs for p in run.series[name][primary]] for name in engines}
    substituted = {name: sum(p[2] for run in runs for p in run.series[name][primary]) for name in engines}
    quarters = {}
    for name in engines:
        first = [v for t, v in samples[name] if t < duration / 4]
        last = [v for t, v in samples[name] if t >= 3 * duration / 4]
        quarters[name] = {"first_quarter_median": _median(first), "final_quarter_median": _median(last)}

    reads = {}
    galois_ok = True
    for name in engines:
        values = [v for _, v in samples[name]]
        curve = analysis.ecdf(values)
        reads[name] = {
            "quantile_at_0.6": analysis.quantile_read(curve, Q_READ),
            "fraction_at_or_below_50m": analysis.exceedance_read(curve, X_READ_M),
        }
        for x in curve.x:
            if analysis.quantile_read(curve, analysis.exceedance_read(curve, x)) > x:
                galois_ok = False

    per_run = [
        {
            "run_id": run.run_id,
            "seed": run.seed,
            "stream_digests": run.stream_digests,
            "paired_stream_ok": len(set(run.stream_digests.values())) == 1,
            "median": {name: _median([p[1] for p in run.series[name][primary]]) for name in engines},
        }
        for run in runs
    ]
    return {
        "n_runs": config.n_runs,
        "completed_runs": len(runs),
        "failed_runs": failures,
        "base_seed": config.base_seed,
        "duration_s": duration,
        "tick_s": TICK_S,
        "primary_metric": primary,
        "metrics": [m.label for m in config.metrics],
        "engines": {n: dict(config.engines[n]) for n in engines},
        "lowess": {"frac": config.lowess_frac, "iters": config.lowess_iters},
        "verdicts": verdicts,
        "quarters": quarters,
        "ecdf_reads": reads,
        "galois_consistent": galois_ok,
        "substituted_samples": substituted,
        "runs": per_run,
        "samples": samples,
    }


def _verdict_entry(v: ValidationVerdict, metric: str, engine: str, **params) -> dict:
    entry = {"metric": metric, "engine": engine, **asdict(v), **params}
    return entry


# ---------------------------------------------------------------------------
# report


def report(summary: Mapping[str, Any], out_dir: Path) -> dict[str, Path]:
    """Write the trend figure, the cumulative-probability figure and the
    verdict table for a campaign summary."""
    from . import svg

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metric = summary["primary_metric"]
    engines = sorted(summary["samples"])
    files: dict[str, Path] = {}
    frac, iters = summary["lowess"]["frac"], summary["lowess"]["iters"]

    trend = svg.Chart(f"{metric} vs time into the run", "time (s)", f"{metric} (m)" if metric.startswith("cep") else metric)
    rows = []
    for name in engines:
        pts = summary["samples"][name]
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        trend.series.append(svg.Series(f"{name} samples", xs, ys, "points"))
        curve = analysis.lowess(pts, frac, iters, engine=name, metric=metric) if len(set(xs)) > 1 else None
        if curve is not None:
            trend.series.append(svg.Series(f"{name} lowess", curve.x, curve.y, "line"))
            rows += [(fmt(x), fmt(y), f"{name}_lowess") for x, y in curve.points]
        rows += [(fmt(x), fmt(y), f"{name}_samples") for x, y in pts]
    files["trend_svg"] = _write(out_dir / "trend.svg", svg.render(trend))
    files["trend_csv"] = _write_csv(out_dir / "trend.csv", ("x", "y", "series"), rows)

    cum = svg.Chart(f"cumulative probability of {metric}", f"{metric}", "cumulative probability", y_range=(0.0, 1.0))
    rows = []
    for name in engines:
        curve = analysis.ecdf([p[1] for p in summary["samples"][name]])
        q = analysis.quantile_read(curve, Q_READ)
        e = analysis.exceedance_read(curve, X_READ_M)
        cum.series.append(svg.Series(name, curve.x, curve.y, "step"))
        cum.annotations.append(f"{name}: {Q_READ:.0%} of samples <= {q:.1f}; {e:.1%} of samples <= {X_READ_M:g}")
        rows += [(fmt(x), fmt(y), name) for x, y in curve.points]
    files["ecdf_svg"] = _write(out_dir / "ecdf.svg", svg.render(cum))
    files["ecdf_csv"] = _write_csv(out_dir / "ecdf.csv", ("x", "y", "series"), rows)

    cols = ("metric", "engine", "kind", "threshold", "confidence", "n_samples", "p_hat", "ci_low", "ci_high", "tie_fraction", "pass")
    vrows = []
    lines = []
    for v in summary["verdicts"]:
        vrows.append(
            (
                v["metric"], v["engine"], v["kind"], fmt(v["threshold"]), fmt(v["confidence"]), v["n_samples"],
                fmt(v["p_hat"]), fmt(v["ci_low"]), fmt(v["ci_high"]),
                "" if v["tie_fraction"] is None else fmt(v["tie_fraction"]), "true" if v["passed"] else "false",
            )
        )
        lines.append(f"[{v['metric']}] {v['engine']}: " + ValidationVerdict(**{k: v[k] for k in ValidationVerdict.__dataclass_fields__}).describe())
    files["verdicts_csv"] = _write_csv(out_dir / "verdicts.csv", cols, vrows)
    for name in engines:
        qd = summary["quarters"][name]
        lines.append(
            f"{name}: median {metric} first quarter {qd['first_quarter_median']:.2f}, "
            f"final quarter {qd['final_quarter_median']:.2f}"
        )
    files["verdicts_txt"] = _write(out_dir / "verdicts.txt", "\n".join(lines) + "\n")
    return files


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def _write_csv(path: Path, columns, rows) -> Path:
    with CsvLog(path, columns) as out:
        for row in rows:
            out.write(*row)
    return path


# ---------------------------------------------------------------------------
# reconstruction from logs


def snapshots_from_logs(run: RunArtifacts, cell_size_m: float, scenario: Scenario) -> list[Snapshot]:
    """Rasterized (truth, F, G) distributions for every logged tick.

    An empty estimate is replaced by the uniform distribution, i.e. the
    state of knowing nothing.
    """
    cols, rows, cs = grid_for_area(scenario.area_width_m, scenario.area_height_m, cell_size_m)
    truth = read_ground_truth(run.ground_truth_log)
    est = {n: read_estimates(p, n) for n, p in run.estimate_logs.items()}
    uniform = uniform_distribution(cols, rows, cs)

    def dist(locs):
        if not locs or sum(s for _, s in locs) <= 0:
            return uniform
        return rasterize(locs, cols, rows, cs, normalize=True)

    return [
        Snapshot(rasterize(truth[t], cols, rows, cs, normalize=True), dist(est["F"].get(t, [])), dist(est["G"].get(t, [])))
        for t in sorted(truth)
    ]
