"""Trend curves and cumulative-probability curves over error samples."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Curve:
    x: np.ndarray
    y: np.ndarray
    kind: str  # "lowess" or "ecdf"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise AnalysisError("curve x and y must be 1-D arrays of equal length")
        if len(x) > 1 and not (np.diff(x) > 0).all():
            raise AnalysisError("curve x must be strictly increasing")
        if self.kind == "ecdf" and len(y) and ((np.diff(y) < 0).any() or y[0] < 0 or y[-1] > 1):
            raise AnalysisError("ECDF must be non-decreasing within [0, 1]")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.x.tolist(), self.y.tolist()))


# ---------------------------------------------------------------------------
# Lowess


def _tricube(u: np.ndarray) -> np.ndarray:
    u = np.abs(u)
    return np.where(u < 1.0, (1.0 - u**3) ** 3, 0.0)


def _bisquare(u: np.ndarray) -> np.ndarray:
    u = np.abs(u)
    return np.where(u < 1.0, (1.0 - u**2) ** 2, 0.0)


def _local_linear(x: np.ndarray, y: np.ndarray, w: np.ndarray, x0: float) -> float:
    sw = w.sum()
    if sw <= 0:
        raise AnalysisError(f"no positive weight near x={x0}")
    xm = (w * x).sum() / sw
    ym = (w * y).sum() / sw
    dx = x - xm
    sxx = (w * dx * dx).sum()
    # a neighbourhood with (numerically) one distinct x has no slope
    if sxx <= 1e-12 * max(1.0, (w * x * x).sum()):
        return float(ym)
    slope = (w * dx * (y - ym)).sum() / sxx
    return float(ym + slope * (x0 - xm))


def lowess_fit(x: Sequence[float], y: Sequence[float], frac: float = 0.3, robustness_iters: int = 2) -> np.ndarray:
    """Robust locally weighted linear regression, fitted value per input point.

    Each fit uses the ``ceil(frac * n)`` nearest points with tricube weights
    scaled to the distance of the farthest of them, followed by
    ``robustness_iters`` passes that also weight each point by the bisquare of
    its residual over six median absolute residuals.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if x.shape != y.shape or x.ndim != 1:
        raise AnalysisError("x and y must be 1-D and equally long")
    if n < 3:
        raise AnalysisError("lowess needs at least 3 points")
    if not 0 < frac <= 1:
        raise AnalysisError("frac must lie in (0, 1]")
    q = int(math.ceil(frac * n - 1e-12))
    if q < 2:
        raise AnalysisError(f"frac * n = {frac * n:g} leaves fewer than 2 points per neighbourhood")
    if np.ptp(x) == 0:
        raise AnalysisError("all x values are identical; every neighbourhood is degenerate")

    # fitted values depend on x only through its value, so fit each distinct x once
    ux, inverse = np.unique(x, return_inverse=True)
    base = np.empty((len(ux), n))
    for i, x0 in enumerate(ux):
        d = np.abs(x - x0)
        h = np.partition(d, q - 1)[q - 1]
        base[i] = _tricube(d / h) if h > 0 else (d == 0).astype(float)

    robust = np.ones(n)
    fitted = np.empty(n)
    for it in range(robustness_iters + 1):
        ufit = np.array([_local_linear(x, y, base[i] * robust, x0) for i, x0 in enumerate(ux)])
        fitted = ufit[inverse]
        if it == robustness_iters:
            break
        resid = y - fitted
        s = np.median(np.abs(resid))
        if s == 0:
            break
        robust = _bisquare(resid / (6.0 * s))
    return fitted


def lowess(data: Sequence[tuple[float, float]], frac: float = 0.3, robustness_iters: int = 2, **metadata) -> Curve:
    """Lowess curve through ``(x, y)`` points, one curve point per distinct x."""
    arr = np.asarray(data, dtype=float).reshape(-1, 2)
    fitted = lowess_fit(arr[:, 0], arr[:, 1], frac, robustness_iters)
    ux, first = np.unique(arr[:, 0], return_index=True)
    return Curve(ux, fitted[first], "lowess", dict(metadata))


# ---------------------------------------------------------------------------
# empirical CDF and its two readings


def ecdf(values: Sequence[float], **metadata) -> Curve:
    """Right-continuous step ECDF: at each distinct value, the fraction <= it."""
    v = np.sort(np.asarray(values, dtype=float).ravel())
    if len(v) == 0:
        raise AnalysisError("ecdf needs at least one value")
    ux = np.unique(v)
    y = np.searchsorted(v, ux, side="right") / len(v)
    return Curve(ux, y, "ecdf", dict(metadata))


def _require_ecdf(curve: Curve) -> None:
    if curve.kind != "ecdf":
        raise AnalysisError(f"expected an ECDF curve, got {curve.kind!r}")


def quantile_read(curve: Curve, q: float) -> float:
    """Smallest sample value whose cumulative fraction reaches ``q``."""
    _require_ecdf(curve)
    if not 0 <= q <= 1:
        raise AnalysisError("q must lie in [0, 1]")
    # y values are k/n; allow for the last-bit error in the caller's q
    idx = int(np.searchsorted(curve.y, q - 1e-12, side="left"))
    return float(curve.x[min(idx, len(curve.x) - 1)])


def exceedance_read(curve: Curve, x: float) -> float:
    """Fraction of samples at or below ``x``."""
    _require_ecdf(curve)
    idx = int(np.searchsorted(curve.x, x, side="right"))
    return 0.0 if idx == 0 else float(curve.y[idx - 1])
