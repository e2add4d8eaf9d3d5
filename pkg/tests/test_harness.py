from __future__ import annotations

import csv
import filecmp
import json
import math
import re
import xml.etree.ElementTree as ET
from collections import Counter
from dataclasses import replace
from pathlib import Path

import pytest
import svgwrite.validator2

from fusionval import cli, harness
from fusionval.analysis import ecdf, exceedance_read, quantile_read
from fusionval.metrics import MetricSpec, metric_series
from fusionval.worldsim import ConfigError

SVG_NS = "{http://www.w3.org/2000/svg}"
# element, attribute and content-model tables of the SVG 1.1 Full profile
SVG11 = svgwrite.validator2.get_validator("full", debug=True)


def _tree_files(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- config -----------------------------------------------------------------------------------


def test_default_campaign_loads():
    cfg = harness.load_campaign(harness.default_campaign_path())
    assert cfg.n_runs == 50 and cfg.base_seed == 1000
    assert cfg.run_seed(7) == 1007
    assert set(cfg.engines) == {"F", "G"}
    assert cfg.engines["G"]["cadence_s"] == 900
    assert [m.label for m in cfg.metrics] == ["cep0.5", "l1"]
    assert cfg.scenario.red_team_count == 20 and cfg.scenario.blue_team_count == 18


@pytest.mark.parametrize(
    "override",
    [{"n_runs": 0}, {"bogus": 1}, {"metrics": ["ospa"]}, {"type2": {"vartheta": 1.5}}, {"scenario": "missing.toml"}],
)
def test_bad_campaign_config(override):
    with pytest.raises(ConfigError):
        harness.load_campaign(harness.default_campaign_path(), override)


def test_inline_scenario_table():
    text = 'n_runs = 2\n[scenario]\nrng_seed = 3\nduration_s = 600\n[scenario.red]\nteam_count = 5\n'
    cfg = harness.load_campaign(text)
    assert cfg.scenario.red_team_count == 5 and cfg.scenario.duration_s == 600
    assert cfg.base_seed == 3


# --- one run ---------------------------------------------------------------------------------


def test_run_one_is_byte_identical(small_campaign, tmp_path):
    a = harness.run_one(small_campaign, 1, tmp_path / "a")
    b = harness.run_one(small_campaign, 1, tmp_path / "b")
    fa, fb = _tree_files(tmp_path / "a"), _tree_files(tmp_path / "b")
    assert fa == fb and len(fa) >= 8
    assert a.seed == small_campaign.base_seed + 1
    c = harness.run_one(small_campaign, 2, tmp_path / "c")
    assert _tree_files(tmp_path / "c")["run002/ground_truth.csv"] != fa["run001/ground_truth.csv"]
    assert c.run_id == "run002"


def test_paired_streams_and_log_completeness(small_campaign, tmp_path):
    run = harness.run_one(small_campaign, 0, tmp_path)
    assert run.ingest_logs["F"].read_bytes() == run.ingest_logs["G"].read_bytes()
    assert run.stream_digests["F"] == run.stream_digests["G"]

    duration = small_campaign.scenario.duration_s
    ticks = [60.0 * k for k in range(int(duration // 60) + 1)]
    truth = _rows(run.ground_truth_log)
    n_ent = small_campaign.scenario.red_team_count + small_campaign.scenario.blue_team_count
    per_tick = Counter(float(r["time_s"]) for r in truth)
    assert sorted(per_tick) == ticks and set(per_tick.values()) == {n_ent}
    assert all(c == 1 for c in Counter((r["time_s"], r["entity_id"]) for r in truth).values())
    for path in run.estimate_logs.values():
        assert sorted({float(r["time_s"]) for r in _rows(path)}) == ticks
    for name in ("F", "G"):
        for label, pts in run.series[name].items():
            assert [p[0] for p in pts] == ticks

    # report log rows are exactly what the engines ingested, minus the origin column
    reports = _rows(run.report_log)
    ingested = _rows(run.ingest_logs["F"])
    assert [(r["time_s"], r["x_m"], r["y_m"], r["strength"]) for r in reports] == [
        (r["time_s"], r["x_m"], r["y_m"], r["strength"]) for r in ingested
    ]
    assert {r["origin_kind"] for r in reports} <= {"TrueDetection", "Decoy", "InitialIntel"}
    manifest = json.loads((run.directory / "manifest.json").read_text())
    assert manifest["stream_digests"] == run.stream_digests


def test_default_scenario_logs_38_rows_per_tick(tmp_path):
    cfg = harness.load_campaign(harness.default_campaign_path(), {"n_runs": 1})
    cfg = replace(cfg, scenario=replace(cfg.scenario, duration_s=300.0))
    run = harness.run_one(cfg, 0, tmp_path)
    assert set(Counter(r["time_s"] for r in _rows(run.ground_truth_log)).values()) == {38}


def test_logged_series_matches_recomputation_from_logs(small_campaign, tmp_path):
    run = harness.run_one(small_campaign, 0, tmp_path)
    for spec in small_campaign.metrics:
        for name in ("F", "G"):
            from_logs = metric_series(run.ground_truth_log, run.estimate_logs[name], spec, engine=name)
            assert [(p.time_s, p.value) for p in from_logs] == [(t, v) for t, v, _ in run.series[name][spec.label]]


def test_run_error_names_tick_and_stage(small_campaign, tmp_path):
    with pytest.raises(ConfigError, match="engines.F"):
        replace(small_campaign, engines={"F": {"kind": "grid_bayes", "cell_size_m": -5.0}, "G": {"kind": "staff_surrogate"}})
    broken = replace(small_campaign, metrics=(MetricSpec("prohorov", area_width_m=2000, area_height_m=2000),))
    with pytest.raises(harness.RunError, match=r"tick \d+, stage metric"):
        harness.run_one(broken, 0, tmp_path)


# --- campaign -----------------------------------------------------------------------------------


def test_campaign_outputs(small_campaign, tmp_path):
    summary = harness.run_campaign(small_campaign, tmp_path)
    assert summary["completed_runs"] == 3 and summary["failed_runs"] == []
    assert summary["galois_consistent"]
    for name in ("trend.svg", "trend.csv", "ecdf.svg", "ecdf.csv", "verdicts.csv", "verdicts.txt", "summary.json"):
        assert (tmp_path / name).is_file()
    kinds = Counter((v["kind"], v["metric"]) for v in summary["verdicts"])
    assert kinds[("type2", "cep0.5")] == 1 and kinds[("type2", "l1")] == 1
    assert kinds[("type1", "cep0.5")] == 2
    for run in summary["runs"]:
        assert run["paired_stream_ok"]
    assert len(_rows(tmp_path / "verdicts.csv")) == len(summary["verdicts"])


def test_single_run_summary_equals_run_statistics(small_campaign, tmp_path):
    cfg = replace(small_campaign, n_runs=1)
    summary = harness.run_campaign(cfg, tmp_path, write_report=False)
    run = harness.run_one(cfg, 0, tmp_path / "again")
    f = [v for _, v, _ in run.series["F"]["cep0.5"]]
    g = [v for _, v, _ in run.series["G"]["cep0.5"]]
    t2 = next(v for v in summary["verdicts"] if v["kind"] == "type2" and v["metric"] == "cep0.5")
    assert t2["n_samples"] == len(f)
    assert t2["p_hat"] == sum(a < b for a, b in zip(f, g)) / len(f)
    assert summary["samples"]["F"] == [[t, v] for t, v, _ in run.series["F"]["cep0.5"]]


def test_identical_engines_give_zero_type2(small_campaign, tmp_path):
    cfg = replace(small_campaign, engines={"F": {"kind": "grid_bayes"}, "G": {"kind": "grid_bayes"}}, n_runs=2)
    summary = harness.run_campaign(cfg, tmp_path, write_report=False)
    for v in summary["verdicts"]:
        if v["kind"] == "type2":
            assert v["p_hat"] == 0 and v["tie_fraction"] == 1 and not v["passed"]


def test_failure_budget(small_campaign, tmp_path, monkeypatch):
    real = harness.run_one

    def flaky(config, index, out_dir=None):
        if index == 0:
            raise harness.RunError(f"run{index:03d} failed at tick 0, stage observe: injected")
        return real(config, index, out_dir)

    monkeypatch.setattr(harness, "run_one", flaky)
    with pytest.raises(harness.CampaignFailure):
        harness.run_campaign(small_campaign, tmp_path / "x")
    cfg = replace(small_campaign, n_runs=11, scenario=replace(small_campaign.scenario, duration_s=120.0))
    summary = harness.run_campaign(cfg, tmp_path / "y", write_report=False)
    assert summary["completed_runs"] == 10 and len(summary["failed_runs"]) == 1


def test_parallel_matches_serial(small_campaign, tmp_path):
    serial = harness.run_campaign(replace(small_campaign, n_runs=2), tmp_path / "s")
    parallel = harness.run_campaign(replace(small_campaign, n_runs=2, workers=2), tmp_path / "p")
    assert serial == parallel
    assert _tree_files(tmp_path / "s") == _tree_files(tmp_path / "p")


# --- report ---------------------------------------------------------------------------------------


def _check_svg(path: Path):
    root = ET.parse(path).getroot()
    assert root.tag == SVG_NS + "svg" and root.get("version") == "1.1"
    for el in root.iter():
        assert el.tag.startswith(SVG_NS), el.tag
        name = el.tag[len(SVG_NS):]
        assert SVG11.is_valid_elementname(name), name
        for attr, value in el.attrib.items():
            SVG11.check_svg_attribute_value(name, attr, value)
        for child in el:
            assert SVG11.is_valid_children(name, child.tag[len(SVG_NS):]), (name, child.tag)
    for el in root.iter(SVG_NS + "polyline"):
        nums = re.split(r"[ ,]+", el.get("points").strip())
        assert len(nums) % 2 == 0 and all(math.isfinite(float(n)) for n in nums)
    return root


def test_svg_and_annotations(small_campaign, tmp_path):
    summary = harness.run_campaign(small_campaign, tmp_path)
    _check_svg(tmp_path / "trend.svg")
    root = _check_svg(tmp_path / "ecdf.svg")
    text = " ".join("".join(t.itertext()) for t in root.iter(SVG_NS + "text"))
    for name in ("F", "G"):
        curve = ecdf([v for _, v in summary["samples"][name]])
        q, e = quantile_read(curve, 0.6), exceedance_read(curve, 50.0)
        assert summary["ecdf_reads"][name] == {"quantile_at_0.6": q, "fraction_at_or_below_50m": e}
        assert f"{name}: 60% of samples &lt;= {q:.1f}; {e:.1%} of samples &lt;= 50" in (tmp_path / "ecdf.svg").read_text()
        assert f"{name}: 60% of samples <= {q:.1f}" in text


def test_perfect_engine_gives_flat_zero_trend(tmp_path):
    ticks = [60.0 * k for k in range(31)]
    summary = {
        "primary_metric": "cep0.5",
        "samples": {"F": [[t, 0.0] for t in ticks] * 3, "G": [[t, 100.0 - t / 60] for t in ticks] * 3},
        "lowess": {"frac": 0.3, "iters": 2},
        "verdicts": [],
        "quarters": {n: {"first_quarter_median": 0.0, "final_quarter_median": 0.0} for n in "FG"},
    }
    harness.report(summary, tmp_path)
    rows = [r for r in _rows(tmp_path / "trend.csv") if r["series"] == "F_lowess"]
    assert len(rows) == len(ticks) and all(float(r["y"]) == 0 for r in rows)


def test_snapshots_from_logs(small_campaign, tmp_path):
    run = harness.run_one(small_campaign, 0, tmp_path)
    snaps = harness.snapshots_from_logs(run, 50.0, small_campaign.scenario)
    assert len(snaps) == int(small_campaign.scenario.duration_s // 60) + 1
    for s in snaps:
        for d in (s.truth, s.est_f, s.est_g):
            assert d.total() == pytest.approx(1.0, abs=1e-12)


# --- CLI ------------------------------------------------------------------------------------------


@pytest.fixture
def cfg_file(tmp_path):
    text = harness.default_campaign_path().read_text()
    text = text.replace('scenario = "default_scenario.toml"', "")
    text += "\n[scenario]\nrng_seed = 5\nduration_s = 900\n"
    path = tmp_path / "campaign.toml"
    path.write_text(text)
    return path


def test_cli_simulate_and_metric(cfg_file, tmp_path, capsys):
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--config", str(cfg_file), "--seed", "9", "--out", str(out)]) == 0
    assert "paired stream identical: True" in capsys.readouterr().out
    run_dir = out / "run000"
    assert json.loads((run_dir / "manifest.json").read_text())["seed"] == 9
    assert cli.main(["metric", str(run_dir), "--metric", "l1", "--out", str(tmp_path / "l1.csv")]) == 0
    logged = [r for r in _rows(run_dir / "series.csv") if r["metric"] == "l1"]
    again = _rows(tmp_path / "l1.csv")
    assert [(r["time_s"], r["engine"], r["value"]) for r in again] == [(r["time_s"], r["engine"], r["value"]) for r in logged]


def test_cli_campaign_validate_report(cfg_file, tmp_path, capsys):
    out = tmp_path / "camp"
    assert cli.main(["campaign", "--config", str(cfg_file), "--runs", "2", "--out", str(out)]) == 0
    assert "type2" in capsys.readouterr().out
    series = sorted(str(p) for p in out.glob("run*/series.csv"))
    assert cli.main(["validate", *series, "--metric", "cep0.5", "--delta", "150", "--theta", "0.5", "--out", str(tmp_path / "v")]) == 0
    summary = json.loads((out / "summary.json").read_text())
    cli_rows = {r["engine"]: r for r in _rows(tmp_path / "v" / "verdicts.csv")}
    t2 = next(v for v in summary["verdicts"] if v["kind"] == "type2" and v["metric"] == "cep0.5")
    assert float(cli_rows["F_vs_G"]["p_hat"]) == t2["p_hat"]
    rep = tmp_path / "rep"
    assert cli.main(["report", str(out / "summary.json"), "--out", str(rep)]) == 0
    assert filecmp.cmp(rep / "ecdf.svg", out / "ecdf.svg", shallow=False)


def test_cli_exit_codes(cfg_file, tmp_path):
    with pytest.raises(SystemExit) as err:
        cli.main(["campaign", "--runs", "many"])
    assert err.value.code == 1
    with pytest.raises(SystemExit) as err:
        cli.main(["frobnicate"])
    assert err.value.code == 1
    assert cli.main(["campaign", "--config", str(cfg_file), "--runs", "0", "--out", str(tmp_path / "z")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text("n_runs = = 2\n")
    assert cli.main(["simulate", "--config", str(bad)]) == 2
    assert cli.main(["metric", str(tmp_path / "nowhere")]) == 1


def test_cli_run_failure_exit_code(cfg_file, tmp_path, monkeypatch):
    def boom(config, index, out_dir=None):
        raise harness.RunError("run000 failed at tick 3, stage observe: injected")

    monkeypatch.setattr(harness, "run_one", boom)
    assert cli.main(["campaign", "--config", str(cfg_file), "--runs", "2", "--out", str(tmp_path / "f")]) == 3
