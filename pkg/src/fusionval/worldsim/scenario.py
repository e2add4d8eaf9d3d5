"""Scenario configuration: the world, its deceiver and its observers."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

Point = tuple[float, float]


class ConfigError(ValueError):
    """Invalid configuration text or values.

    ``key`` names the offending field (dotted for nested sections) and
    ``line`` is set for syntax errors when the parser reports one.
    """

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        super().__init__(message)
        self.key = key
        self.line = line


@dataclass(frozen=True)
class DeceptionPolicy:
    concealment_prob: float = 0.3
    decoy_rate: float = 1.0
    decoy_strength_min: int = 1
    decoy_strength_max: int = 3

    def __post_init__(self):
        _check(0.0 <= self.concealment_prob <= 1.0, "deception.concealment_prob", "must lie in [0, 1]")
        _check(self.decoy_rate >= 0.0, "deception.decoy_rate", "must be >= 0")
        _check(self.decoy_strength_min >= 0, "deception.decoy_strength_min", "must be >= 0")
        _check(
            self.decoy_strength_min <= self.decoy_strength_max,
            "deception.decoy_strength_max",
            "must be >= decoy_strength_min",
        )


@dataclass(frozen=True)
class ObserverModel:
    detection_radius_m: float = 250.0
    position_noise_sigma_m: float = 25.0
    strength_noise_sigma: float = 0.5
    miss_prob: float = 0.3
    report_period_s: float = 60.0

    def __post_init__(self):
        _check(self.detection_radius_m > 0, "observer.detection_radius_m", "must be > 0")
        _check(self.position_noise_sigma_m >= 0, "observer.position_noise_sigma_m", "must be >= 0")
        _check(self.strength_noise_sigma >= 0, "observer.strength_noise_sigma", "must be >= 0")
        _check(0.0 <= self.miss_prob <= 1.0, "observer.miss_prob", "must lie in [0, 1]")
        _check(self.report_period_s > 0, "observer.report_period_s", "must be > 0")


def _default_objectives() -> tuple[Point, ...]:
    # four buildings to defend, one per quadrant of the default 2 km square
    return ((600.0, 600.0), (1400.0, 600.0), (1400.0, 1400.0), (600.0, 1400.0))


@dataclass(frozen=True)
class Scenario:
    area_width_m: float = 2000.0
    area_height_m: float = 2000.0
    red_team_count: int = 20
    red_team_strength: int = 3
    blue_team_count: int = 18
    blue_team_strength: int = 4
    red_speed_mps: float = 1.5
    blue_speed_mps: float = 1.0
    duration_s: float = 7200.0
    initial_intel_fraction: float = 0.20
    objective_points: tuple[Point, ...] = field(default_factory=_default_objectives)
    attrition_rate_per_s: float = 0.0
    deception: DeceptionPolicy = field(default_factory=DeceptionPolicy)
    observer: ObserverModel = field(default_factory=ObserverModel)
    rng_seed: int = 0

    def __post_init__(self):
        _check(self.area_width_m > 0, "area.width_m", "must be > 0")
        _check(self.area_height_m > 0, "area.height_m", "must be > 0")
        for key, count in (
            ("red.team_count", self.red_team_count),
            ("red.team_strength", self.red_team_strength),
            ("blue.team_count", self.blue_team_count),
            ("blue.team_strength", self.blue_team_strength),
        ):
            _check(isinstance(count, int) and count >= 1, key, "must be an integer >= 1")
        _check(self.red_speed_mps >= 0, "red.speed_mps", "must be >= 0")
        _check(self.blue_speed_mps >= 0, "blue.speed_mps", "must be >= 0")
        _check(self.duration_s > 0, "duration_s", "must be > 0")
        _check(
            0.0 <= self.initial_intel_fraction <= 1.0,
            "initial_intel_fraction",
            "must lie in [0, 1]",
        )
        _check(len(self.objective_points) >= 1, "objective_points", "needs at least one point")
        for x, y in self.objective_points:
            _check(
                0.0 <= x <= self.area_width_m and 0.0 <= y <= self.area_height_m,
                "objective_points",
                f"point ({x}, {y}) lies outside the area",
            )
        _check(self.attrition_rate_per_s >= 0, "attrition_rate_per_s", "must be >= 0")
        _check(0 <= self.rng_seed < 2**64, "rng_seed", "must be an unsigned 64-bit integer")

    @property
    def diagonal_m(self) -> float:
        return float((self.area_width_m**2 + self.area_height_m**2) ** 0.5)

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, rng_seed=seed)


def _check(ok: bool, key: str, message: str) -> None:
    if not ok:
        raise ConfigError(f"{key}: {message}", key=key)


# config key -> (section, Scenario field)
_TOP_KEYS = {
    "rng_seed": "rng_seed",
    "duration_s": "duration_s",
    "initial_intel_fraction": "initial_intel_fraction",
    "objective_points": "objective_points",
    "attrition_rate_per_s": "attrition_rate_per_s",
}
_SECTION_KEYS = {
    "area": {"width_m": "area_width_m", "height_m": "area_height_m"},
    "red": {"team_count": "red_team_count", "team_strength": "red_team_strength", "speed_mps": "red_speed_mps"},
    "blue": {"team_count": "blue_team_count", "team_strength": "blue_team_strength", "speed_mps": "blue_speed_mps"},
}
_INT_FIELDS = {"red_team_count", "red_team_strength", "blue_team_count", "blue_team_strength", "rng_seed"}


def parse_toml(source: str) -> dict[str, Any]:
    try:
        return tomllib.loads(source)
    except tomllib.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        if line is None:
            import re

            m = re.search(r"line (\d+)", str(exc))
            line = int(m.group(1)) if m else None
        raise ConfigError(f"config parse error: {exc}", line=line) from exc


def _number(value: Any, key: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}", key=key)
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key}: expected an integer, got {value!r}", key=key)
        return int(value)
    return float(value)


def scenario_from_mapping(data: Mapping[str, Any]) -> Scenario:
    """Build a :class:`Scenario` from parsed config, rejecting unknown keys."""
    kwargs: dict[str, Any] = {}
    deception: dict[str, Any] = {}
    observer: dict[str, Any] = {}
    known_dec = {f.name for f in fields(DeceptionPolicy)}
    known_obs = {f.name for f in fields(ObserverModel)}
    for key, value in data.items():
        if key in _TOP_KEYS:
            name = _TOP_KEYS[key]
            if name == "objective_points":
                kwargs[name] = _points(value)
            else:
                kwargs[name] = _number(value, key, integer=name in _INT_FIELDS)
        elif key in _SECTION_KEYS:
            if not isinstance(value, Mapping):
                raise ConfigError(f"{key}: expected a section", key=key)
            for sub, subval in value.items():
                name = _SECTION_KEYS[key].get(sub)
                if name is None:
                    raise ConfigError(f"unknown config key {key}.{sub}", key=f"{key}.{sub}")
                kwargs[name] = _number(subval, f"{key}.{sub}", integer=name in _INT_FIELDS)
        elif key in ("deception", "observer"):
            if not isinstance(value, Mapping):
                raise ConfigError(f"{key}: expected a section", key=key)
            known = known_dec if key == "deception" else known_obs
            target = deception if key == "deception" else observer
            for sub, subval in value.items():
                if sub not in known:
                    raise ConfigError(f"unknown config key {key}.{sub}", key=f"{key}.{sub}")
                target[sub] = _number(subval, f"{key}.{sub}", integer=sub.startswith("decoy_strength"))
        else:
            raise ConfigError(f"unknown config key {key}", key=key)
    kwargs["deception"] = DeceptionPolicy(**deception)
    kwargs["observer"] = ObserverModel(**observer)
    return Scenario(**kwargs)


def _points(value: Any) -> tuple[Point, ...]:
    try:
        pts = tuple((float(p[0]), float(p[1])) for p in value if len(p) == 2)
    except (TypeError, ValueError, IndexError):
        pts = ()
    if not pts or len(pts) != len(value):
        raise ConfigError("objective_points: expected a list of [x, y] pairs", key="objective_points")
    return pts


def load_scenario(source: str | Path) -> Scenario:
    """Parse scenario config text (or a path to it) into a validated Scenario.

    Omitted keys take the documented defaults (a 2 km x 2 km area, 20 Red
    teams of 3, 18 Blue teams of 4, two hours, 20 % initial intel).
    """
    if isinstance(source, Path):
        source = source.read_text()
    return scenario_from_mapping(parse_toml(source))


def scenario_to_toml(scenario: Scenario) -> str:
    d, o = scenario.deception, scenario.observer
    pts = ", ".join(f"[{x!r}, {y!r}]" for x, y in scenario.objective_points)
    lines = [
        f"rng_seed = {scenario.rng_seed}",
        f"duration_s = {scenario.duration_s!r}",
        f"initial_intel_fraction = {scenario.initial_intel_fraction!r}",
        f"attrition_rate_per_s = {scenario.attrition_rate_per_s!r}",
        f"objective_points = [{pts}]",
        "",
        "[area]",
        f"width_m = {scenario.area_width_m!r}",
        f"height_m = {scenario.area_height_m!r}",
        "",
        "[red]",
        f"team_count = {scenario.red_team_count}",
        f"team_strength = {scenario.red_team_strength}",
        f"speed_mps = {scenario.red_speed_mps!r}",
        "",
        "[blue]",
        f"team_count = {scenario.blue_team_count}",
        f"team_strength = {scenario.blue_team_strength}",
        f"speed_mps = {scenario.blue_speed_mps!r}",
        "",
        "[deception]",
        f"concealment_prob = {d.concealment_prob!r}",
        f"decoy_rate = {d.decoy_rate!r}",
        f"decoy_strength_min = {d.decoy_strength_min}",
        f"decoy_strength_max = {d.decoy_strength_max}",
        "",
        "[observer]",
        f"detection_radius_m = {o.detection_radius_m!r}",
        f"position_noise_sigma_m = {o.position_noise_sigma_m!r}",
        f"strength_noise_sigma = {o.strength_noise_sigma!r}",
        f"miss_prob = {o.miss_prob!r}",
        f"report_period_s = {o.report_period_s!r}",
        "",
    ]
    return "\n".join(lines)
