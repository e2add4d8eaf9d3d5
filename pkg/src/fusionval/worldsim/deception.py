"""The deceiver: hides real Red teams and plants phantom ones."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..rng import poisson_by_inversion
from .scenario import DeceptionPolicy
from .world import RED, Entity, WorldState


@dataclass(frozen=True)
class DeceivedView:
    """What the observers are up against in one observation window."""

    state: WorldState
    decoys: tuple[Entity, ...] = ()

    @property
    def time_s(self) -> float:
        return self.state.time_s


def identity_view(state: WorldState) -> DeceivedView:
    return DeceivedView(state=state)


def apply_deception(state: WorldState, policy: DeceptionPolicy, stream: np.random.Generator) -> DeceivedView:
    """Conceal each Red team with ``policy.concealment_prob`` and add decoys.

    Draw order is fixed (one uniform per Red team, one uniform for the decoy
    count, then decoy positions and strengths) so a zero policy returns a view
    equal to ``state`` and leaves later stages' streams untouched.
    """
    scenario = state.scenario
    reds = [i for i, e in enumerate(state.entities) if e.side == RED]
    u = stream.random(len(reds))
    hide = set(i for i, ui in zip(reds, u) if ui < policy.concealment_prob)
    entities = tuple(
        replace(e, concealed=True) if i in hide else (replace(e, concealed=False) if e.concealed else e)
        for i, e in enumerate(state.entities)
    )
    n_decoys = poisson_by_inversion(stream, policy.decoy_rate)
    decoys = []
    if n_decoys:
        xs = stream.uniform(0.0, scenario.area_width_m, size=n_decoys)
        ys = stream.uniform(0.0, scenario.area_height_m, size=n_decoys)
        ss = stream.integers(policy.decoy_strength_min, policy.decoy_strength_max + 1, size=n_decoys)
        tick = int(round(state.time_s))
        for k in range(n_decoys):
            decoys.append(
                Entity(
                    id=f"decoy-{tick}-{k}",
                    side=RED,
                    position=(float(xs[k]), float(ys[k])),
                    strength=int(ss[k]),
                    speed_mps=0.0,
                )
            )
    new_state = state if not hide and entities == state.entities else replace(state, entities=entities)
    return DeceivedView(state=new_state, decoys=tuple(decoys))
