"""Ground truth: entities, their placement and their motion."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .. import rng as rngmod
from .scenario import Point, Scenario

RED = "Red"
BLUE = "Blue"


@dataclass(frozen=True)
class Entity:
    id: str
    side: str
    position: Point
    strength: int
    speed_mps: float
    concealed: bool = False
    waypoint: Optional[Point] = None
    # index into Scenario.objective_points of the current waypoint, -1 if none
    objective_index: int = -1


@dataclass(frozen=True)
class WorldState:
    time_s: float
    entities: tuple[Entity, ...]
    scenario: Scenario

    def __post_init__(self):
        ids = [e.id for e in self.entities]
        if len(set(ids)) != len(ids):
            raise ValueError("entity ids must be unique")

    def side(self, side: str) -> tuple[Entity, ...]:
        return tuple(e for e in self.entities if e.side == side)

    def total_strength(self, side: str) -> int:
        return sum(e.strength for e in self.entities if e.side == side)


def clamp_to_area(x: float, y: float, scenario: Scenario) -> Point:
    return (min(max(x, 0.0), scenario.area_width_m), min(max(y, 0.0), scenario.area_height_m))


def init_world(scenario: Scenario, stream: np.random.Generator | None = None) -> WorldState:
    """Place every team uniformly at random and give it its first objective.

    Team ``i`` of either side starts heading for objective ``i mod k``.
    Without an explicit ``stream`` the scenario's own seed is used.
    """
    if stream is None:
        stream = rngmod.substream(scenario.rng_seed, rngmod.INIT)
    objectives = scenario.objective_points
    entities = []
    for side, count, strength, speed in (
        (RED, scenario.red_team_count, scenario.red_team_strength, scenario.red_speed_mps),
        (BLUE, scenario.blue_team_count, scenario.blue_team_strength, scenario.blue_speed_mps),
    ):
        xs = stream.uniform(0.0, scenario.area_width_m, size=count)
        ys = stream.uniform(0.0, scenario.area_height_m, size=count)
        for i in range(count):
            k = i % len(objectives)
            entities.append(
                Entity(
                    id=f"{side[0]}{i:03d}",
                    side=side,
                    position=(float(xs[i]), float(ys[i])),
                    strength=strength,
                    speed_mps=speed,
                    waypoint=objectives[k],
                    objective_index=k,
                )
            )
    return WorldState(time_s=0.0, entities=tuple(entities), scenario=scenario)


def _move(entity: Entity, dt_s: float, scenario: Scenario) -> Entity:
    if entity.waypoint is None:
        return entity
    x, y = entity.position
    wx, wy = entity.waypoint
    dist = math.hypot(wx - x, wy - y)
    reach = entity.speed_mps * dt_s
    if dist <= reach:
        objectives = scenario.objective_points
        nxt = (entity.objective_index + 1) % len(objectives) if entity.objective_index >= 0 else -1
        return replace(
            entity,
            position=clamp_to_area(wx, wy, scenario),
            waypoint=objectives[nxt] if nxt >= 0 else None,
            objective_index=nxt,
        )
    frac = reach / dist
    return replace(entity, position=clamp_to_area(x + (wx - x) * frac, y + (wy - y) * frac, scenario))


def step_world(state: WorldState, dt_s: float, stream: np.random.Generator | None = None) -> WorldState:
    """Advance ``state`` by ``dt_s`` seconds.

    Entities that reach their waypoint stop on it and take the next objective
    in round-robin order. Attrition only happens when the scenario enables it,
    and then needs ``stream``.
    """
    if not dt_s > 0:
        raise ValueError(f"dt_s must be > 0, got {dt_s}")
    scenario = state.scenario
    moved = tuple(_move(e, dt_s, scenario) for e in state.entities)
    if scenario.attrition_rate_per_s > 0:
        if stream is None:
            raise ValueError("attrition is enabled; step_world needs a random stream")
        moved = _attrition(moved, dt_s, scenario, stream)
    return WorldState(time_s=state.time_s + dt_s, entities=moved, scenario=scenario)


def _attrition(entities, dt_s: float, scenario: Scenario, stream: np.random.Generator):
    # each fighter within detection range of an enemy team is lost with
    # probability 1 - exp(-rate * dt)
    p_loss = 1.0 - math.exp(-scenario.attrition_rate_per_s * dt_s)
    radius = scenario.observer.detection_radius_m
    pos = np.array([e.position for e in entities])
    sides = np.array([e.side for e in entities])
    out = []
    for i, e in enumerate(entities):
        enemy = sides != e.side
        d = np.hypot(*(pos[enemy] - pos[i]).T) if enemy.any() else np.array([])
        engaged = bool((d <= radius).any())
        lost = int(stream.binomial(e.strength, p_loss)) if e.strength > 0 else 0
        out.append(replace(e, strength=e.strength - lost) if engaged and lost else e)
    return tuple(out)
