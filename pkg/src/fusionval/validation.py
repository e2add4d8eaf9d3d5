"""Type-1 and Type-2 validation verdicts.

Type 1 accepts an engine when its error is below ``delta`` with probability
above ``theta``. Type 2 accepts it when its error beats the standard engine's
error with probability above ``vartheta``. Probabilities are estimated from
samples, and a verdict passes only if the lower end of the Wilson score
interval clears the threshold.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from statistics import NormalDist
from typing import Iterable, Mapping, Sequence

from .metrics import StrengthDistribution, exact_l1


class ValidationError(ValueError):
    pass


class PairingError(ValidationError):
    """F and G samples that do not come from one shared report stream."""


class TiePolicy(str, enum.Enum):
    COUNT_AGAINST = "count_against"
    HALF_CREDIT = "half_credit"


@dataclass(frozen=True)
class Type1Params:
    delta: float
    theta: float
    confidence: float = 0.95

    def __post_init__(self):
        if not self.delta > 0:
            raise ValidationError("delta must be > 0")
        if not 0 < self.theta < 1:
            raise ValidationError("theta must lie in (0, 1)")
        _check_confidence(self.confidence)


@dataclass(frozen=True)
class Type2Params:
    vartheta: float
    confidence: float = 0.95
    tie_policy: TiePolicy = TiePolicy.COUNT_AGAINST

    def __post_init__(self):
        if not 0 < self.vartheta < 1:
            raise ValidationError("vartheta must lie in (0, 1)")
        _check_confidence(self.confidence)
        object.__setattr__(self, "tie_policy", TiePolicy(self.tie_policy))


def _check_confidence(c: float) -> None:
    if not 0 < c < 1:
        raise ValidationError("confidence must lie in (0, 1)")


@dataclass(frozen=True)
class ValidationVerdict:
    kind: str
    p_hat: float
    ci_low: float
    ci_high: float
    threshold: float
    passed: bool
    n_samples: int
    confidence: float
    tie_fraction: float | None = None

    def as_row(self) -> dict:
        return {
            "kind": self.kind,
            "threshold": repr(self.threshold),
            "confidence": repr(self.confidence),
            "n_samples": self.n_samples,
            "p_hat": repr(self.p_hat),
            "ci_low": repr(self.ci_low),
            "ci_high": repr(self.ci_high),
            "tie_fraction": "" if self.tie_fraction is None else repr(self.tie_fraction),
            "pass": "true" if self.passed else "false",
        }

    def describe(self) -> str:
        text = (
            f"{self.kind}: p_hat={self.p_hat:.4f} "
            f"CI{self.confidence:.0%}=[{self.ci_low:.4f}, {self.ci_high:.4f}] "
            f"threshold={self.threshold:g} n={self.n_samples} -> {'PASS' if self.passed else 'FAIL'}"
        )
        if self.tie_fraction is not None:
            text += f" (ties {self.tie_fraction:.4f})"
        return text


def wilson_interval(successes: float, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    ``successes`` may be fractional (half-credit ties).
    """
    if n <= 0:
        raise ValidationError("n must be positive")
    if not 0 <= successes <= n:
        raise ValidationError("successes must lie in [0, n]")
    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    p = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    low, high = max(0.0, centre - half), min(1.0, centre + half)
    # guard the p_hat-inside-interval invariant against last-bit rounding
    return min(low, p), max(high, p)


def _verdict(kind: str, successes: float, n: int, threshold: float, confidence: float, tie_fraction=None):
    low, high = wilson_interval(successes, n, confidence)
    return ValidationVerdict(
        kind=kind,
        p_hat=successes / n,
        ci_low=low,
        ci_high=high,
        threshold=threshold,
        passed=low > threshold,
        n_samples=n,
        confidence=confidence,
        tie_fraction=tie_fraction,
    )


def type1_validate(errors: Sequence[float], params: Type1Params) -> ValidationVerdict:
    """Fraction of errors strictly below delta, against theta."""
    errors = list(errors)
    if not errors:
        raise ValidationError("type1_validate needs at least one error sample")
    successes = sum(1 for e in errors if e < params.delta)
    return _verdict("type1", successes, len(errors), params.theta, params.confidence)


@dataclass(frozen=True)
class PairedError:
    """One F/G error pair, tagged with the stream each side was computed on."""

    e_f: float
    e_g: float
    stream_f: str = ""
    stream_g: str = ""


def _as_pair(item) -> tuple[float, float]:
    if isinstance(item, PairedError):
        if item.stream_f != item.stream_g:
            raise PairingError(f"F sample from stream {item.stream_f!r} paired with G sample from {item.stream_g!r}")
        return item.e_f, item.e_g
    try:
        e_f, e_g = item
    except (TypeError, ValueError):
        raise PairingError(f"not an (e_F, e_G) pair: {item!r}") from None
    if e_f is None or e_g is None or math.isnan(e_f) or math.isnan(e_g):
        raise PairingError(f"unpaired sample: {item!r}")
    return e_f, e_g


def type2_validate(paired_errors: Iterable, params: Type2Params) -> ValidationVerdict:
    """Fraction of pairs where F's error is strictly below G's, against vartheta."""
    pairs = [_as_pair(item) for item in paired_errors]
    if not pairs:
        raise ValidationError("type2_validate needs at least one pair")
    wins = sum(1 for f, g in pairs if f < g)
    ties = sum(1 for f, g in pairs if f == g)
    n = len(pairs)
    successes = wins + (0.5 * ties if params.tie_policy is TiePolicy.HALF_CREDIT else 0)
    return _verdict("type2", successes, n, params.vartheta, params.confidence, tie_fraction=ties / n)


def pair_series(series_f: Mapping, series_g: Mapping, run_f: str, run_g: str) -> list[PairedError]:
    """Pair two ``{time_s: error}`` series from the same run tick by tick."""
    if set(series_f) != set(series_g):
        raise PairingError("F and G series cover different ticks")
    return [PairedError(series_f[t], series_g[t], run_f, run_g) for t in sorted(series_f)]


# ---------------------------------------------------------------------------
# deceiver insensitivity


class MetricRestrictionError(ValidationError):
    pass


@dataclass(frozen=True)
class Snapshot:
    truth: StrengthDistribution
    est_f: StrengthDistribution
    est_g: StrengthDistribution


@dataclass(frozen=True)
class SensitivityReport:
    deceiver: str
    n_snapshots: int
    violations: int
    realized_delta: float
    max_gap: float

    @property
    def holds(self) -> bool:
        return self.violations == 0


def deception_sensitivity_check(runs: Mapping[str, Sequence[Snapshot]], metric: str = "l1") -> list[SensitivityReport]:
    """Check ``| |S-S'| - |S-S''| | <= |S'-S''|`` on every snapshot.

    For each deceiver label the realized delta is the largest ``|S'-S''|``
    seen. The CEP measure is not a metric, so only ``l1`` is accepted; the
    check is done in exact rational arithmetic so it holds without slack.
    """
    if metric.lower().startswith("cep"):
        raise MetricRestrictionError(
            "the CEP measure does not satisfy the triangle inequality, so the "
            "deceiver-insensitivity bound does not apply to it; use an L_p metric"
        )
    if metric != "l1":
        raise MetricRestrictionError(f"exact check implemented for l1 only, got {metric!r}")
    out = []
    for label, snaps in runs.items():
        violations = 0
        realized = Fraction(0)
        max_gap = Fraction(0)
        for s in snaps:
            d_f = exact_l1(s.truth, s.est_f)
            d_g = exact_l1(s.truth, s.est_g)
            d_fg = exact_l1(s.est_f, s.est_g)
            gap = abs(d_f - d_g)
            if gap > d_fg:
                violations += 1
            realized = max(realized, d_fg)
            max_gap = max(max_gap, gap)
        out.append(SensitivityReport(label, len(snaps), violations, float(realized), float(max_gap)))
    return out

