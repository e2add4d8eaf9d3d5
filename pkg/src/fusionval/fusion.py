"""Fusion engines: the system under test and the standard it is judged against.

Engines only ever see :class:`Observation` objects, i.e. reports with their
ground-truth bookkeeping stripped off. Nothing in this module imports the
world state.
"""
from __future__ import annotations

import abc
import hashlib
import itertools
import math
import struct
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np
from scipy import ndimage

from .metrics import StrengthDistribution, grid_for_area, uniform_distribution

Point = tuple[float, float]


class FusionError(RuntimeError):
    pass


class OutOfOrderReport(FusionError):
    pass


@dataclass(frozen=True)
class Observation:
    """A report as a fusion engine receives it."""

    time_s: float
    position: Point
    strength: int

    def to_bytes(self) -> bytes:
        return struct.pack("<dddq", self.time_s, self.position[0], self.position[1], self.strength)


def strip(report) -> Observation:
    if isinstance(report, Observation):
        return report
    return Observation(float(report.time_s), tuple(report.reported_position), int(report.reported_strength))


@dataclass(frozen=True)
class EstimateSnapshot:
    time_s: float
    engine: str
    locations: tuple[tuple[Point, float], ...] = ()
    grid: Optional[StrengthDistribution] = None

    def total_strength(self) -> float:
        return float(sum(s for _, s in self.locations))


class FusionEngine(abc.ABC):
    """Consumes a time-ordered observation stream and emits estimates."""

    kind = "abstract"

    def __init__(self, name: str, update_cadence_s: float, seed: int = 0):
        self.name = name
        self.update_cadence_s = float(update_cadence_s)
        self.seed = seed
        self._last_time = -math.inf
        self._digest = hashlib.sha256()
        self.ingested: list[Observation] = []

    def ingest(self, report) -> None:
        obs = strip(report)
        if obs.time_s < self._last_time:
            raise OutOfOrderReport(
                f"{self.name}: report at t={obs.time_s} arrived after t={self._last_time}"
            )
        self._last_time = obs.time_s
        self._digest.update(obs.to_bytes())
        self.ingested.append(obs)
        self._accept(obs)

    @property
    def stream_digest(self) -> str:
        """SHA-256 over the exact bytes of every observation ingested so far."""
        return self._digest.hexdigest()

    @abc.abstractmethod
    def _accept(self, obs: Observation) -> None:
        ...

    @abc.abstractmethod
    def estimate(self, t: float) -> EstimateSnapshot:
        ...


# ---------------------------------------------------------------------------
# grid Bayesian occupancy filter


@dataclass(frozen=True)
class GridBayesConfig:
    cell_size_m: float = 25.0
    tick_s: float = 60.0
    assumed_red_speed_mps: float = 1.5
    # diffusion sigma = kernel_scale * speed * tick
    kernel_scale: float = 0.5
    position_sigma_m: float = 25.0
    # likelihood floor far from a report; lower forgets unreported areas faster
    clutter_floor: float = 0.5
    assumed_total_strength: float = 60.0


def gaussian_kernel_1d(sigma_cells: float) -> np.ndarray:
    if sigma_cells <= 0:
        return np.array([1.0])
    radius = max(1, int(math.ceil(3.0 * sigma_cells)))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma_cells) ** 2)
    return k / k.sum()


def diffuse(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Separable convolution with mirror ('reflect') boundaries."""
    if len(kernel) == 1:
        return values.copy()
    out = ndimage.correlate1d(values, kernel, axis=0, mode="reflect")
    return ndimage.correlate1d(out, kernel, axis=1, mode="reflect")


def report_likelihood(centers: np.ndarray, position: Point, sigma_m: float, floor: float) -> np.ndarray:
    d2 = (centers[:, 0] - position[0]) ** 2 + (centers[:, 1] - position[1]) ** 2
    if sigma_m <= 0:
        near = d2 == d2.min()
        return floor + near.astype(float)
    return floor + np.exp(-0.5 * d2 / sigma_m**2)


def local_maxima(values: np.ndarray) -> list[tuple[int, int]]:
    """Cells above the mean that are >= all 8 neighbours, strongest first,
    with any peak within one cell of a stronger kept peak dropped."""
    mean = values.mean()
    neigh = ndimage.maximum_filter(values, size=3, mode="constant", cval=-np.inf)
    rr, cc = np.nonzero((values >= neigh) & (values > mean))
    order = sorted(zip(rr.tolist(), cc.tolist()), key=lambda rc: (-values[rc], rc))
    kept: list[tuple[int, int]] = []
    for r, c in order:
        if all(max(abs(r - kr), abs(c - kc)) > 1 for kr, kc in kept):
            kept.append((r, c))
    return kept


class GridBayesEngine(FusionEngine):
    """Occupancy grid over the area: diffuse each tick, multiply in report
    likelihoods, renormalize."""

    kind = "grid_bayes"

    def __init__(self, name: str, width_m: float, height_m: float, config: GridBayesConfig | None = None, seed: int = 0):
        self.config = config or GridBayesConfig()
        super().__init__(name, self.config.tick_s, seed)
        cols, rows, cs = grid_for_area(width_m, height_m, self.config.cell_size_m)
        self.cols, self.rows, self.cell_size_m = cols, rows, cs
        self._centers = uniform_distribution(cols, rows, cs).cell_centers()
        self.values = np.full((rows, cols), 1.0 / (rows * cols))
        sigma_cells = self.config.kernel_scale * self.config.assumed_red_speed_mps * self.config.tick_s / cs
        self.kernel = gaussian_kernel_1d(sigma_cells)
        self._pending: list[Observation] = []
        self._t = 0.0

    def _accept(self, obs: Observation) -> None:
        self._pending.append(obs)

    def predict(self) -> None:
        self.values = diffuse(self.values, self.kernel)
        self._renormalize()

    def update(self, batch: list[Observation]) -> None:
        """Multiply in one likelihood for a batch of simultaneous reports:
        a floor plus a Gaussian bump per report, so several teams reported
        together are all reinforced instead of competing."""
        if not batch:
            return
        cfg = self.config
        lik = np.full(len(self._centers), cfg.clutter_floor)
        for obs in batch:
            lik += report_likelihood(self._centers, obs.position, cfg.position_sigma_m, 0.0)
        self.values = self.values * lik.reshape(self.rows, self.cols)
        self._renormalize()

    def _renormalize(self) -> None:
        total = self.values.sum()
        if total == 0.0:
            raise FusionError(f"{self.name}: occupancy mass underflowed to zero")
        if total < 1e-300:
            self.values = self.values * 1e200
            total = self.values.sum()
        self.values = self.values / total

    def _consume_until(self, t: float) -> None:
        due = [o for o in self._pending if o.time_s <= t]
        self._pending = [o for o in self._pending if o.time_s > t]
        # reports sharing a timestamp form one batch
        for _, group in itertools.groupby(due, key=lambda o: o.time_s):
            self.update(list(group))

    def advance(self, t: float) -> None:
        if t < self._t:
            raise FusionError(f"{self.name}: cannot estimate at t={t} after t={self._t}")
        tick = self.config.tick_s
        self._consume_until(self._t)
        while self._t + tick <= t + 1e-9:
            self._t += tick
            self.predict()
            self._consume_until(self._t)

    def distribution(self) -> StrengthDistribution:
        return StrengthDistribution(self.cols, self.rows, self.cell_size_m, self.values.copy(), True)

    def peak_location(self, r: int, c: int) -> Point:
        """Mass-weighted centroid of the 3x3 block around a peak cell."""
        r0, r1 = max(r - 1, 0), min(r + 2, self.rows)
        c0, c1 = max(c - 1, 0), min(c + 2, self.cols)
        block = self.values[r0:r1, c0:c1]
        cs = self.cell_size_m
        ys = (np.arange(r0, r1) + 0.5) * cs
        xs = (np.arange(c0, c1) + 0.5) * cs
        m = block.sum()
        return (float((block.sum(axis=0) * xs).sum() / m), float((block.sum(axis=1) * ys).sum() / m))

    def estimate(self, t: float) -> EstimateSnapshot:
        self.advance(t)
        total = self.config.assumed_total_strength
        locs = tuple(
            (self.peak_location(r, c), float(self.values[r, c] * total)) for r, c in local_maxima(self.values)
        )
        return EstimateSnapshot(float(t), self.name, locs, self.distribution())


# ---------------------------------------------------------------------------
# stale last-report staff surrogate


@dataclass(frozen=True)
class StaffSurrogateConfig:
    cadence_s: float = 900.0
    staleness_horizon_s: float = 1800.0
    merge_radius_m: float = 100.0
    # the gate widens by this speed times the time since the track was seen
    assumed_red_speed_mps: float = 1.5


@dataclass
class _Track:
    position: Point
    strength: int
    last_seen: float


class StaffSurrogateEngine(FusionEngine):
    """Keeps each reported target where it was last reported.

    The picture refreshes only on cadence ticks (multiples of ``cadence_s``).
    At a refresh, buffered reports are merged oldest first: a report moves the
    nearest existing track inside its gate (``merge_radius_m`` plus the
    distance an assumed-speed team could cover since the track was last seen)
    to its own position and strength, unless that track was already moved by a report with the same
    timestamp, in which case it starts a new track. Tracks not seen for more
    than ``staleness_horizon_s`` at a refresh are dropped.
    """

    kind = "staff_surrogate"

    def __init__(self, name: str, config: StaffSurrogateConfig | None = None, seed: int = 0):
        self.config = config or StaffSurrogateConfig()
        super().__init__(name, self.config.cadence_s, seed)
        self._pending: list[Observation] = []
        self._tracks: list[_Track] = []
        self._refreshed_at = -math.inf
        self._picture: tuple[tuple[Point, float], ...] = ()

    def _accept(self, obs: Observation) -> None:
        self._pending.append(obs)

    def _merge(self, obs: Observation) -> None:
        best, best_d = None, math.inf
        for tr in self._tracks:
            if tr.last_seen == obs.time_s:
                continue
            d = math.hypot(tr.position[0] - obs.position[0], tr.position[1] - obs.position[1])
            gate = self.config.merge_radius_m + self.config.assumed_red_speed_mps * (obs.time_s - tr.last_seen)
            if d <= gate and d < best_d:
                best, best_d = tr, d
        if best is None:
            self._tracks.append(_Track(obs.position, obs.strength, obs.time_s))
        else:
            best.position, best.strength, best.last_seen = obs.position, obs.strength, obs.time_s

    def refresh(self, c: float) -> None:
        due = [o for o in self._pending if o.time_s <= c]
        self._pending = [o for o in self._pending if o.time_s > c]
        for obs in due:
            self._merge(obs)
        self._tracks = [tr for tr in self._tracks if c - tr.last_seen <= self.config.staleness_horizon_s]
        self._picture = tuple((tr.position, float(tr.strength)) for tr in self._tracks)
        self._refreshed_at = c

    def estimate(self, t: float) -> EstimateSnapshot:
        return self.staff_step(t)

    def staff_step(self, t: float) -> EstimateSnapshot:
        if t < self._refreshed_at:
            raise FusionError(f"{self.name}: cannot estimate at t={t} after refresh at {self._refreshed_at}")
        cadence = self.config.cadence_s
        k = 0 if self._refreshed_at == -math.inf else int(round(self._refreshed_at / cadence)) + 1
        while k * cadence <= t + 1e-9:
            self.refresh(k * cadence)
            k += 1
        return EstimateSnapshot(float(t), self.name, self._picture)


def make_engine(spec: Mapping[str, Any], name: str, width_m: float, height_m: float, seed: int = 0) -> FusionEngine:
    """Build an engine from a config mapping with a ``kind`` key."""
    params = dict(spec)
    kind = params.pop("kind", None)
    if kind == GridBayesEngine.kind:
        return GridBayesEngine(name, width_m, height_m, GridBayesConfig(**params), seed)
    if kind == StaffSurrogateEngine.kind:
        return StaffSurrogateEngine(name, StaffSurrogateConfig(**params), seed)
    raise ValueError(f"unknown engine kind {kind!r}")


def grid_bayes_predict_update(engine: GridBayesEngine, t: float) -> EstimateSnapshot:
    return engine.estimate(t)


def staff_surrogate_step(engine: StaffSurrogateEngine, t: float) -> EstimateSnapshot:
    return engine.staff_step(t)
