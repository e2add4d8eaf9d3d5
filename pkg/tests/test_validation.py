from __future__ import annotations

import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fusionval.metrics import StrengthDistribution, exact_l1
from fusionval.validation import (
    MetricRestrictionError,
    PairedError,
    PairingError,
    Snapshot,
    TiePolicy,
    Type1Params,
    Type2Params,
    ValidationError,
    deception_sensitivity_check,
    pair_series,
    type1_validate,
    type2_validate,
    wilson_interval,
)

from .oracles import wilson_mp


def test_type1_counts():
    v = type1_validate([0.5, 1.5, 0.8], Type1Params(delta=1.0, theta=0.5))
    assert v.p_hat == pytest.approx(2 / 3) and v.n_samples == 3
    assert v.kind == "type1" and v.tie_fraction is None


def test_type1_all_zero_passes():
    v = type1_validate([0.0] * 100, Type1Params(delta=1.0, theta=0.9))
    assert v.p_hat == 1.0
    assert v.ci_low == pytest.approx(wilson_mp(100, 100, 0.95)[0], abs=1e-12)
    assert 0.963 <= v.ci_low < 0.964
    assert v.passed


def test_type1_error_equal_to_delta_fails():
    v = type1_validate([1.0, 1.0, 0.999], Type1Params(delta=1.0, theta=0.1))
    assert v.p_hat == pytest.approx(1 / 3)


def test_type1_params_invariants():
    for bad in ({"delta": 0, "theta": 0.5}, {"delta": 1, "theta": 0}, {"delta": 1, "theta": 1}):
        with pytest.raises(ValidationError):
            Type1Params(**bad)
    with pytest.raises(ValidationError):
        type1_validate([], Type1Params(1, 0.5))


def test_type2_counts_and_ties():
    pairs = [(1, 2), (3, 2), (1, 1)]
    v = type2_validate(pairs, Type2Params(0.5))
    assert v.p_hat == pytest.approx(1 / 3) and v.tie_fraction == pytest.approx(1 / 3)
    v = type2_validate(pairs, Type2Params(0.5, tie_policy=TiePolicy.HALF_CREDIT))
    assert v.p_hat == pytest.approx(0.5)


def test_type2_identical_engines():
    pairs = [(x, x) for x in np.linspace(1, 50, 40)]
    assert type2_validate(pairs, Type2Params(0.5)).p_hat == 0
    assert type2_validate(pairs, Type2Params(0.5, tie_policy=TiePolicy.HALF_CREDIT)).p_hat == 0.5


def test_type2_fifty_wins_pass():
    v = type2_validate([(1.0, 2.0)] * 50, Type2Params(0.5))
    assert v.ci_low == pytest.approx(wilson_mp(50, 50, 0.95)[0], abs=1e-12)
    assert 0.928 <= v.ci_low < 0.929
    assert v.passed


def test_pairing_integrity():
    with pytest.raises(PairingError):
        type2_validate([PairedError(1.0, 2.0, "run001", "run002")], Type2Params(0.5))
    with pytest.raises(PairingError):
        type2_validate([(1.0, None)], Type2Params(0.5))
    with pytest.raises(PairingError):
        type2_validate([(1.0, float("nan"))], Type2Params(0.5))
    with pytest.raises(PairingError):
        pair_series({0: 1.0, 60: 2.0}, {0: 1.0}, "r", "r")
    ok = pair_series({60: 1.0, 0: 3.0}, {0: 2.0, 60: 2.0}, "r", "r")
    assert [(p.e_f, p.e_g) for p in ok] == [(3.0, 2.0), (1.0, 2.0)]


def test_wilson_against_high_precision():
    r = random.Random(12)
    for _ in range(100):
        n = r.randint(1, 5000)
        k = r.randint(0, n)
        conf = r.choice([0.8, 0.9, 0.95, 0.99])
        lo, hi = wilson_interval(k, n, conf)
        olo, ohi = wilson_mp(k, n, conf)
        assert abs(lo - olo) <= 1e-9 and abs(hi - ohi) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 10_000), frac=st.floats(0, 1), conf=st.floats(0.5, 0.999))
def test_verdict_interval_contains_estimate(n, frac, conf):
    k = round(frac * n)
    v = type1_validate([0.0] * k + [2.0] * (n - k), Type1Params(1.0, 0.5, conf))
    assert 0 <= v.ci_low <= v.p_hat <= v.ci_high <= 1
    assert v.passed == (v.ci_low > 0.5)


@settings(max_examples=100, deadline=None)
@given(errs=st.lists(st.floats(0, 100), min_size=1, max_size=50), d1=st.floats(0.01, 100), d2=st.floats(0.01, 100))
def test_type1_monotone_in_delta(errs, d1, d2):
    lo, hi = sorted((d1, d2))
    assert type1_validate(errs, Type1Params(lo, 0.5)).p_hat <= type1_validate(errs, Type1Params(hi, 0.5)).p_hat


@settings(max_examples=100, deadline=None)
@given(
    pairs=st.lists(st.tuples(st.floats(0, 10), st.floats(0, 10)), min_size=1, max_size=50),
    t1=st.floats(0.01, 0.99),
    t2=st.floats(0.01, 0.99),
)
def test_raising_threshold_never_flips_fail_to_pass(pairs, t1, t2):
    lo, hi = sorted((t1, t2))
    if not type2_validate(pairs, Type2Params(lo)).passed:
        assert not type2_validate(pairs, Type2Params(hi)).passed
    errs = [f for f, _ in pairs]
    if not type1_validate(errs, Type1Params(5.0, lo)).passed:
        assert not type1_validate(errs, Type1Params(5.0, hi)).passed


def test_verdict_row_and_text():
    v = type2_validate([(1, 2), (2, 1), (1, 3)], Type2Params(0.5))
    row = v.as_row()
    assert {"p_hat", "ci_low", "ci_high", "threshold", "pass", "n_samples", "tie_fraction"} <= set(row)
    assert "FAIL" in v.describe() or "PASS" in v.describe()


# --- deceiver insensitivity -----------------------------------------------------------------


def _rand_dist(r, cells=16):
    v = r.random(cells) * (r.random(cells) < 0.7)
    v[r.integers(cells)] += 0.5
    return StrengthDistribution(4, cells // 4, 50.0, (v / v.sum()).reshape(-1, 4), True)


def _l1(a, b):
    return sum(abs(Fraction(float(x)) - Fraction(float(y))) for x, y in zip(a.values.ravel(), b.values.ravel()))


def test_sensitivity_identical_estimates():
    r = np.random.default_rng(0)
    s, e = _rand_dist(r), _rand_dist(r)
    [rep] = deception_sensitivity_check({"D1": [Snapshot(s, e, e)]})
    assert rep.holds and rep.max_gap == 0 and rep.realized_delta == 0


def test_sensitivity_triples_and_equality_when_aligned():
    r = np.random.default_rng(1)
    snaps = []
    aligned_equal = 0
    for i in range(1000):
        s, g = _rand_dist(r), _rand_dist(r)
        if i % 2:
            # f between s and g cell by cell, so the inequality is tight
            lam = Fraction(int(r.integers(1, 8)), 8)
            vals = [Fraction(float(x)) * lam + Fraction(float(y)) * (1 - lam) for x, y in zip(s.values.ravel(), g.values.ravel())]
            f_vals = np.array([float(v) for v in vals])
            f = StrengthDistribution(4, 4, 50.0, f_vals.reshape(4, 4), True)
            # float rounding can leave f a hair outside [s, g]; keep only exactly aligned cases
            lo = np.minimum(s.values, g.values)
            hi = np.maximum(s.values, g.values)
            if ((f.values >= lo) & (f.values <= hi)).all():
                gap = abs(_l1(s, f) - _l1(s, g))
                assert gap == _l1(f, g)
                aligned_equal += 1
        else:
            f = _rand_dist(r)
            gap = abs(_l1(s, f) - _l1(s, g))
            assert gap <= _l1(f, g)
            # equality needs f between s and g in every cell, or g between s and f
            f_outside = ((f.values - s.values) * (g.values - f.values) < 0).any()
            g_outside = ((g.values - s.values) * (f.values - g.values) < 0).any()
            if f_outside and g_outside:
                assert gap < _l1(f, g)
        snaps.append(Snapshot(s, f, g))
    assert aligned_equal > 400
    [rep] = deception_sensitivity_check({"D": snaps})
    assert rep.holds and rep.n_snapshots == 1000
    assert rep.realized_delta == pytest.approx(max(float(exact_l1(x.est_f, x.est_g)) for x in snaps))


def test_sensitivity_rejects_cep():
    with pytest.raises(MetricRestrictionError, match="triangle"):
        deception_sensitivity_check({}, metric="cep0.5")
