"""Tests for the time-decaying privacy metric.

Expected values are frozen from independent arithmetic or from the Monte
Carlo renewal oracle, never from the closed forms under test.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pseudosim.privacy import (
    DomainError,
    DopeEstimate,
    PrivacyProcess,
    TrackingBounds,
    entropy_gain,
    instantaneous_dope,
    interval_area,
    interval_area_numeric,
    simulate_dope,
    time_average_dope,
)

BOUNDS = TrackingBounds(a=1 / 160, b=1 / 10)

probs = st.floats(min_value=1 / 160, max_value=1 / 10)


class TestEntropyGain:
    def test_half_is_one_bit(self):
        assert entropy_gain(0.5) == pytest.approx(1.0, abs=1e-12)

    def test_certainty_is_zero(self):
        assert entropy_gain(1.0) == pytest.approx(0.0, abs=1e-12)

    def test_one_in_160(self):
        # independent arithmetic: log2(160) via natural logs
        expected = math.log(160.0) / math.log(2.0)
        assert entropy_gain(1 / 160) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(7.321928, abs=1e-6)

    @pytest.mark.parametrize("bad", [0.0, -0.3, 1.0001, 2.0])
    def test_domain(self, bad):
        with pytest.raises(DomainError):
            entropy_gain(bad)


class TestInstantaneous:
    @given(p=probs)
    def test_boundary_identity(self, p):
        assert instantaneous_dope(3.0, 3.0, p) == pytest.approx(entropy_gain(p), abs=1e-12)

    def test_asymptote(self):
        assert instantaneous_dope(60.0, 0.0, 0.5) == pytest.approx(-1.0, abs=1e-9)

    def test_tenth_after_one_unit(self):
        # (1 + log2 10)/e - 1, evaluated independently
        expected = (1.0 + math.log(10.0) / math.log(2.0)) / math.e - 1.0
        assert instantaneous_dope(1.0, 0.0, 0.1) == pytest.approx(expected, rel=1e-12)
        assert expected == pytest.approx(0.5899485, abs=1e-7)

    def test_rejects_time_reversal(self):
        with pytest.raises(DomainError):
            instantaneous_dope(1.0, 2.0, 0.5)


class TestIntervalArea:
    def test_empty_interval(self):
        assert interval_area(0.0, 0.5) == 0.0

    def test_one_unit_half(self):
        oracle = interval_area_numeric(1.0, 0.5)
        assert interval_area(1.0, 0.5) == pytest.approx(oracle, rel=1e-6)
        assert oracle == pytest.approx(0.264241, abs=1e-6)

    def test_debt_when_changes_rare(self):
        assert interval_area(10.0, BOUNDS.b) < 0.0

    @settings(max_examples=60, deadline=None)
    @given(x=st.floats(min_value=1e-3, max_value=10.0), p=probs)
    def test_matches_numeric_integration(self, x, p):
        closed = interval_area(x, p)
        numeric = interval_area_numeric(x, p)
        assert closed == pytest.approx(numeric, rel=1e-6, abs=1e-9)

    def test_vectorized(self):
        xs = np.array([0.5, 1.0, 2.0])
        ps = np.array([0.1, 0.05, 0.02])
        out = interval_area(xs, ps)
        assert out.shape == (3,)
        for i in range(3):
            assert out[i] == pytest.approx(interval_area(float(xs[i]), float(ps[i])))


class TestTimeAverage:
    def test_zero_frequency_limit(self):
        assert time_average_dope(1e-12, BOUNDS) == pytest.approx(-1.0, abs=1e-9)

    def test_lambda_two(self):
        # frozen from the Monte Carlo oracle (simulate_dope, 2e6 events)
        assert time_average_dope(2.0, BOUNDS) == pytest.approx(2.66530, abs=2e-5)

    def test_lambda_one(self):
        assert time_average_dope(1.0, BOUNDS) == pytest.approx(1.74898, abs=2e-5)

    @given(lam=st.floats(min_value=0.1, max_value=8.0))
    def test_increasing_in_rate(self, lam):
        assert time_average_dope(lam + 0.25, BOUNDS) > time_average_dope(lam, BOUNDS)

    @given(b=st.floats(min_value=0.02, max_value=0.5))
    def test_decreasing_in_easier_tracking(self, b):
        a = 1 / 160
        lo = time_average_dope(2.0, TrackingBounds(a, b))
        hi = time_average_dope(2.0, TrackingBounds(a, b + 0.05))
        assert hi < lo

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(DomainError):
            time_average_dope(0.0, BOUNDS)


class TestSimulateDope:
    def test_monte_carlo_agrees_with_closed_form(self):
        for lam in (0.5, 1.0, 2.0):
            est = simulate_dope(lam, BOUNDS, horizon=2e5 / lam * lam, seed=7)
            closed = time_average_dope(lam, BOUNDS)
            assert abs(est.value - closed) / abs(closed) < 0.01

    def test_deterministic_stream(self):
        proc = PrivacyProcess(lam=1.0, bounds=TrackingBounds(0.01, 0.999))
        for i in range(11):
            proc.record_change(float(i), 0.5)
        assert proc.empirical_average() == pytest.approx(interval_area(1.0, 0.5) / 1.0, rel=1e-12)

    def test_seed_reproducible(self):
        a = simulate_dope(2.0, BOUNDS, horizon=500.0, seed=11)
        b = simulate_dope(2.0, BOUNDS, horizon=500.0, seed=11)
        assert a == b
        assert isinstance(a, DopeEstimate)

    def test_internal_estimators_agree(self):
        est = simulate_dope(2.0, BOUNDS, horizon=2000.0, seed=3, numeric_step=1e-3)
        assert est.numeric_value is not None
        assert est.value == pytest.approx(est.numeric_value, rel=5e-3)

    def test_rejects_short_horizon(self):
        with pytest.raises(DomainError):
            simulate_dope(2.0, BOUNDS, horizon=0.5, seed=0)


class TestPrivacyProcess:
    def test_rejects_nonmonotone_times(self):
        proc = PrivacyProcess(lam=1.0, bounds=BOUNDS)
        proc.record_change(1.0, 0.05)
        with pytest.raises(DomainError):
            proc.record_change(1.0, 0.05)

    def test_rejects_out_of_bounds_probability(self):
        proc = PrivacyProcess(lam=1.0, bounds=BOUNDS)
        with pytest.raises(DomainError):
            proc.record_change(1.0, 0.5)

    def test_bounds_from_vehicle_counts(self):
        bounds = TrackingBounds.from_vehicle_counts(10, 160)
        assert bounds.a == pytest.approx(1 / 160)
        assert bounds.b == pytest.approx(1 / 10)
