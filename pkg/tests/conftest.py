from __future__ import annotations

from dataclasses import replace

import pytest

from fusionval.harness import default_campaign_path, load_campaign
from fusionval.worldsim import DeceptionPolicy, ObserverModel, Scenario

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def small_scenario() -> Scenario:
    return Scenario(
        area_width_m=1000.0,
        area_height_m=800.0,
        red_team_count=6,
        blue_team_count=4,
        duration_s=1800.0,
        objective_points=((200.0, 200.0), (800.0, 600.0)),
        deception=DeceptionPolicy(concealment_prob=0.2, decoy_rate=0.5),
        observer=ObserverModel(detection_radius_m=300.0),
        rng_seed=11,
    )


@pytest.fixture
def small_campaign(tmp_path):
    """Default campaign shrunk to a few short runs."""
    cfg = load_campaign(default_campaign_path(), {"n_runs": 3, "output_dir": str(tmp_path / "camp")})
    return replace(cfg, scenario=replace(cfg.scenario, duration_s=1800.0))
