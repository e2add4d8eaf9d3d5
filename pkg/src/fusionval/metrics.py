"""Error measures between a force estimate and ground truth.

Point-set accuracy uses a CEP-style radius; gridded strength distributions
are compared with L_p norms or the Prohorov distance.
"""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

Point = tuple[float, float]


class MetricError(ValueError):
    pass


class IntractableError(MetricError):
    """Raised when an exhaustive computation would be too large to run."""


@dataclass(frozen=True)
class MetricValue:
    kind: str
    value: float
    parameters: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# CEP-style radius


def required_count(coverage: float, n: int) -> int:
    """Number of points out of ``n`` needed to reach ``coverage``.

    ``coverage`` is read as the decimal it was written as, so 0.3 of 10 is
    exactly 3 rather than ceil(3.0000000000000004).
    """
    if not 0 < coverage <= 1:
        raise MetricError(f"coverage must lie in (0, 1], got {coverage}")
    return max(1, math.ceil(Fraction(str(coverage)) * n))


def nearest_distances(estimated: Sequence[Point], actual: Sequence[Point]) -> np.ndarray:
    # math.hypot is accurate to the last bit, unlike sqrt(dx*dx + dy*dy)
    est = [(float(x), float(y)) for x, y in estimated]
    return np.array([min(math.hypot(ax - ex, ay - ey) for ex, ey in est) for ax, ay in actual], dtype=float)


def cep_measure(estimated: Sequence[Point], actual: Sequence[Point], coverage: float = 0.5) -> float:
    """Smallest common radius around the estimates that covers ``coverage`` of
    the actual locations.

    Every actual point is covered once the radius reaches its distance to the
    nearest estimate, so the answer is the k-th smallest of those distances
    with ``k = ceil(coverage * len(actual))``.
    """
    if len(estimated) == 0 or len(actual) == 0:
        raise MetricError("CEP is undefined for an empty estimated or actual set")
    k = required_count(coverage, len(actual))
    d = nearest_distances(estimated, actual)
    return float(np.partition(d, k - 1)[k - 1])


# ---------------------------------------------------------------------------
# gridded strength distributions


@dataclass(frozen=True, eq=False)
class StrengthDistribution:
    cols: int
    rows: int
    cell_size_m: float
    values: np.ndarray  # shape (rows, cols); values[r, c] covers y-row r, x-column c
    normalized: bool = False

    def __post_init__(self):
        if self.cols < 1 or self.rows < 1:
            raise MetricError("grid dimensions must be >= 1")
        if not self.cell_size_m > 0:
            raise MetricError("cell_size_m must be > 0")
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.rows, self.cols):
            raise MetricError(f"values shape {vals.shape} does not match grid {(self.rows, self.cols)}")
        if (vals < 0).any():
            raise MetricError("strength values must be non-negative")
        if self.normalized and abs(vals.sum() - 1.0) > 1e-9:
            raise MetricError(f"normalized distribution sums to {vals.sum()!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def geometry(self) -> tuple[int, int, float]:
        return (self.cols, self.rows, self.cell_size_m)

    @property
    def diagonal_m(self) -> float:
        return math.hypot(self.cols * self.cell_size_m, self.rows * self.cell_size_m)

    def total(self) -> float:
        return float(self.values.sum())

    def normalize(self) -> "StrengthDistribution":
        total = self.total()
        if total <= 0:
            raise MetricError("cannot normalize a distribution with zero mass")
        return StrengthDistribution(self.cols, self.rows, self.cell_size_m, self.values / total, True)

    def cell_centers(self) -> np.ndarray:
        """(rows*cols, 2) array of cell centres in meters, row-major."""
        cs = self.cell_size_m
        yy, xx = np.mgrid[0 : self.rows, 0 : self.cols]
        return np.column_stack([(xx.ravel() + 0.5) * cs, (yy.ravel() + 0.5) * cs])

    def __eq__(self, other):
        if not isinstance(other, StrengthDistribution):
            return NotImplemented
        return self.geometry == other.geometry and np.array_equal(self.values, other.values)

    __hash__ = None


def uniform_distribution(cols: int, rows: int, cell_size_m: float) -> StrengthDistribution:
    return StrengthDistribution(cols, rows, cell_size_m, np.full((rows, cols), 1.0 / (rows * cols)), True)


def grid_for_area(width_m: float, height_m: float, cell_size_m: float) -> tuple[int, int, float]:
    cols = max(1, math.ceil(width_m / cell_size_m - 1e-9))
    rows = max(1, math.ceil(height_m / cell_size_m - 1e-9))
    return cols, rows, cell_size_m


def rasterize(
    locations: Iterable[tuple[Point, float]],
    cols: int,
    rows: int,
    cell_size_m: float,
    normalize: bool = False,
) -> StrengthDistribution:
    """Accumulate ``(point, strength)`` pairs into grid cells.

    A point on the far edge of the grid lands in the last cell. Points outside
    the extent are an error.
    """
    values = np.zeros((rows, cols))
    width, height = cols * cell_size_m, rows * cell_size_m
    for (x, y), s in locations:
        if not (0.0 <= x <= width and 0.0 <= y <= height):
            raise MetricError(f"point ({x}, {y}) lies outside the grid extent {width} x {height} m")
        if s < 0:
            raise MetricError(f"negative strength {s} at ({x}, {y})")
        c = min(int(x // cell_size_m), cols - 1)
        r = min(int(y // cell_size_m), rows - 1)
        values[r, c] += s
    dist = StrengthDistribution(cols, rows, cell_size_m, values, False)
    return dist.normalize() if normalize else dist


def _same_grid(a: StrengthDistribution, b: StrengthDistribution) -> None:
    if a.geometry != b.geometry:
        raise MetricError(f"grid mismatch: {a.geometry} vs {b.geometry}")


def lp_distance(a: StrengthDistribution, b: StrengthDistribution, p: float = 1.0) -> float:
    """``(sum |a - b|^p)^(1/p)`` over cells; ``p = inf`` gives the max-abs."""
    _same_grid(a, b)
    if not p >= 1:
        raise MetricError(f"p must be >= 1, got {p}")
    diff = np.abs(a.values - b.values).ravel()
    if math.isinf(p):
        return float(diff.max())
    if p == 1:
        return math.fsum(diff)
    return math.fsum(diff**p) ** (1.0 / p)


def exact_l1(a: StrengthDistribution, b: StrengthDistribution) -> Fraction:
    """L1 distance in exact rational arithmetic over the union of supports."""
    _same_grid(a, b)
    av, bv = a.values.ravel(), b.values.ravel()
    idx = np.flatnonzero((av != 0) | (bv != 0))
    return sum((abs(Fraction(float(av[i])) - Fraction(float(bv[i]))) for i in idx), Fraction(0))


def prohorov_distance(a: StrengthDistribution, b: StrengthDistribution, max_support: int = 12) -> float:
    """Prohorov distance between two normalized distributions on one grid.

    Distances between cells are centre-to-centre, divided by the grid
    diagonal so they share the [0, 1] scale of probability mass. The result is
    the smallest eps with ``a(A) <= b(A^eps) + eps`` for every set ``A`` of
    cells in a's support, where ``A^eps`` holds the cells within ``eps`` of
    ``A``. All ``2^support - 1`` subsets are enumerated, so a's support is
    capped by ``max_support``.
    """
    _same_grid(a, b)
    for name, d in (("a", a), ("b", b)):
        if abs(d.total() - 1.0) > 1e-9:
            raise MetricError(f"{name} must be normalized (sums to {d.total()!r})")
    av, bv = a.values.ravel(), b.values.ravel()
    sa = np.flatnonzero(av > 0)
    sb = np.flatnonzero(bv > 0)
    if len(sa) > max_support:
        raise IntractableError(
            f"Prohorov distance needs 2^{len(sa)} subset checks; support {len(sa)} exceeds max_support={max_support}"
        )
    centers = a.cell_centers()
    dist = np.sqrt(((centers[sa][:, None, :] - centers[sb][None, :, :]) ** 2).sum(axis=2)) / a.diagonal_m
    mass_a, mass_b = av[sa], bv[sb]

    n = len(sa)
    n_sub = 1 << n
    # distance from every b-cell to subset A, built up one lowest bit at a time
    to_set = np.empty((n_sub, len(sb)))
    to_set[0] = np.inf
    subset_mass = np.zeros(n_sub)
    for mask in range(1, n_sub):
        low = (mask & -mask).bit_length() - 1
        rest = mask & (mask - 1)
        to_set[mask] = np.minimum(to_set[rest], dist[low])
        subset_mass[mask] = subset_mass[rest] + mass_a[low]

    order = np.argsort(to_set[1:], axis=1, kind="stable")
    d_sorted = np.take_along_axis(to_set[1:], order, axis=1)
    m_cum = np.cumsum(mass_b[order], axis=1)
    need = subset_mass[1:, None]
    # eps = d_k is feasible once it also covers the remaining mass shortfall;
    # a tie in d_k only counts once all tied cells are included, which the
    # largest cumulative mass at that distance already gives, and earlier
    # positions of a tie only yield larger (still feasible) values.
    candidates = np.maximum(d_sorted, need - m_cum)
    best = np.minimum(candidates.min(axis=1), need[:, 0])
    return float(min(1.0, best.max()))


# ---------------------------------------------------------------------------
# metric time series from logs


METRIC_KINDS = ("cep", "l1", "l2", "linf", "prohorov")


@dataclass(frozen=True)
class MetricSpec:
    kind: str = "cep"
    coverage: float = 0.5
    cell_size_m: float = 50.0
    area_width_m: float = 2000.0
    area_height_m: float = 2000.0
    max_support: int = 12

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise MetricError(f"unknown metric {self.kind!r}; expected one of {METRIC_KINDS}")
        if not 0 < self.coverage <= 1:
            raise MetricError("coverage must lie in (0, 1]")

    @property
    def label(self) -> str:
        return f"cep{self.coverage:g}" if self.kind == "cep" else self.kind

    @property
    def grid(self) -> tuple[int, int, float]:
        return grid_for_area(self.area_width_m, self.area_height_m, self.cell_size_m)


class MetricPoint(NamedTuple):
    time_s: float
    value: float
    # True when the estimate was empty and a fallback value stood in
    substituted: bool = False


def evaluate(
    spec: MetricSpec,
    actual: Sequence[tuple[Point, float]],
    estimated: Sequence[tuple[Point, float]],
) -> MetricPoint:
    """One metric value for one instant. ``time_s`` of the result is 0."""
    if spec.kind == "cep":
        if not estimated:
            return MetricPoint(0.0, math.hypot(spec.area_width_m, spec.area_height_m), True)
        return MetricPoint(0.0, cep_measure([p for p, _ in estimated], [p for p, _ in actual], spec.coverage))
    cols, rows, cs = spec.grid
    truth = rasterize(actual, cols, rows, cs, normalize=True)
    substituted = not estimated or sum(s for _, s in estimated) <= 0
    est = uniform_distribution(cols, rows, cs) if substituted else rasterize(estimated, cols, rows, cs, normalize=True)
    if spec.kind == "prohorov":
        a, b = (est, truth) if np.count_nonzero(est.values) <= np.count_nonzero(truth.values) else (truth, est)
        return MetricPoint(0.0, prohorov_distance(a, b, spec.max_support), substituted)
    p = {"l1": 1.0, "l2": 2.0, "linf": math.inf}[spec.kind]
    return MetricPoint(0.0, lp_distance(truth, est, p), substituted)


def read_ground_truth(path_or_rows) -> dict[float, list[tuple[Point, float]]]:
    """Red locations per tick from a ground-truth log, concealed teams included."""
    truth: dict[float, list] = defaultdict(list)
    for row in _rows(path_or_rows):
        t = float(row["time_s"])
        truth.setdefault(t, [])
        if row["side"] == "Red":
            truth[t].append(((float(row["x_m"]), float(row["y_m"])), float(row["strength"])))
    return dict(truth)


def read_estimates(path_or_rows, engine: str | None = None) -> dict[float, list[tuple[Point, float]]]:
    """Estimated locations per snapshot tick; rows with blank coordinates mark
    an empty snapshot."""
    snaps: dict[float, list] = {}
    for row in _rows(path_or_rows):
        if engine is not None and row["engine"] != engine:
            continue
        t = float(row["time_s"])
        snaps.setdefault(t, [])
        if row["est_x_m"] != "":
            snaps[t].append(((float(row["est_x_m"]), float(row["est_y_m"])), float(row["est_strength"])))
    return snaps


def _rows(path_or_rows):
    if isinstance(path_or_rows, (str, Path)):
        with open(path_or_rows, newline="") as fh:
            return list(csv.DictReader(fh))
    return list(path_or_rows)


def metric_series(
    ground_truth_log,
    estimate_log,
    spec: MetricSpec | None = None,
    tick_s: float = 60.0,
    engine: str | None = None,
) -> list[MetricPoint]:
    """Metric value at every tick of the time range both logs cover.

    Between snapshots the latest earlier snapshot stands; before the first
    one the engine is taken to have an empty estimate.
    """
    spec = spec or MetricSpec()
    truth = read_ground_truth(ground_truth_log)
    snaps = read_estimates(estimate_log, engine)
    if not truth or not snaps:
        raise MetricError("both logs must contain at least one tick")
    start = min(truth)
    end = min(max(truth), max(snaps))
    if end < start:
        raise MetricError("ground-truth and estimate logs share no time range")
    snap_times = sorted(snaps)
    out = []
    n = int(math.floor((end - start) / tick_s + 1e-9))
    j = -1
    for i in range(n + 1):
        t = start + i * tick_s
        if t not in truth:
            raise MetricError(f"ground-truth log has no tick at t={t}")
        while j + 1 < len(snap_times) and snap_times[j + 1] <= t + 1e-9:
            j += 1
        estimated = snaps[snap_times[j]] if j >= 0 else []
        pt = evaluate(spec, truth[t], estimated)
        out.append(MetricPoint(t, pt.value, pt.substituted))
    return out
