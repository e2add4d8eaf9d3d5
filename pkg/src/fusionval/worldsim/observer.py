"""Observer-reporters: turn a deceived view into noisy Red reports."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .deception import DeceivedView
from .scenario import ObserverModel, Point, Scenario
from .world import BLUE, RED, WorldState, clamp_to_area


class OriginKind(str, enum.Enum):
    TRUE_DETECTION = "TrueDetection"
    DECOY = "Decoy"
    INITIAL_INTEL = "InitialIntel"


@dataclass(frozen=True)
class Report:
    time_s: float
    reported_position: Point
    reported_strength: int
    origin_kind: OriginKind
    # ground-truth bookkeeping for audits; never handed to fusion engines
    source_id: str = ""


def observe(
    view: DeceivedView,
    model: ObserverModel,
    observers: Sequence[Point],
    t: float,
    stream: np.random.Generator,
) -> list[Report]:
    """Reports from Blue ``observers`` at time ``t``.

    Candidates are every Red team in the view followed by the decoys. Each
    candidate consumes one miss uniform, two position normals and one strength
    normal whether or not it ends up reported.
    """
    scenario = view.state.scenario
    candidates = [e for e in view.state.entities if e.side == RED] + list(view.decoys)
    n = len(candidates)
    u = stream.random(n)
    pos_noise = stream.standard_normal((n, 2))
    str_noise = stream.standard_normal(n)
    if n == 0:
        return []
    obs = np.asarray(observers, dtype=float).reshape(-1, 2)
    pos = np.array([e.position for e in candidates], dtype=float)
    if len(obs):
        d2 = ((pos[:, None, :] - obs[None, :, :]) ** 2).sum(axis=2)
        in_range = (d2 <= model.detection_radius_m**2).any(axis=1)
    else:
        in_range = np.zeros(n, dtype=bool)
    decoy_ids = {e.id for e in view.decoys}
    reports = []
    for i, e in enumerate(candidates):
        if e.concealed or not in_range[i] or u[i] < model.miss_prob:
            continue
        x = pos[i, 0] + model.position_noise_sigma_m * pos_noise[i, 0]
        y = pos[i, 1] + model.position_noise_sigma_m * pos_noise[i, 1]
        s = max(0, int(math.floor(e.strength + model.strength_noise_sigma * str_noise[i] + 0.5)))
        kind = OriginKind.DECOY if e.id in decoy_ids else OriginKind.TRUE_DETECTION
        reports.append(
            Report(
                time_s=float(t),
                reported_position=clamp_to_area(float(x), float(y), scenario),
                reported_strength=s,
                origin_kind=kind,
                source_id=e.id,
            )
        )
    return reports


def blue_positions(state: WorldState) -> list[Point]:
    return [e.position for e in state.entities if e.side == BLUE]


def intel_count(scenario: Scenario) -> int:
    # half-up rounding, so 0.5 teams rounds to 1
    return int(math.floor(scenario.initial_intel_fraction * scenario.red_team_count + 0.5))


def initial_intel(scenario: Scenario, state: WorldState, stream: np.random.Generator) -> list[Report]:
    """Exact reports on a random ``initial_intel_fraction`` of the Red teams."""
    if state.time_s != 0:
        raise ValueError("initial intel is only issued at t = 0")
    reds = state.side(RED)
    k = intel_count(scenario)
    if k == 0:
        return []
    picked = sorted(stream.choice(len(reds), size=k, replace=False).tolist())
    return [
        Report(
            time_s=0.0,
            reported_position=reds[i].position,
            reported_strength=reds[i].strength,
            origin_kind=OriginKind.INITIAL_INTEL,
            source_id=reds[i].id,
        )
        for i in picked
    ]
