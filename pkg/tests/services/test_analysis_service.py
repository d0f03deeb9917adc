import numpy as np
import pandas as pd
import pytest

from app.core.exceptions import InsufficientSamples, LengthMismatch
from app.schemas.analysis import TRILATERATION
from app.schemas.geometry import Point3
from app.schemas.schedule import ScheduleConfig, TimingError
from app.services.analysis_service import (
    arrivals_from_events,
    localization_errors,
    noise_reduction_study,
    timing_report,
    trace_diff_std,
    trace_overlay,
)

REFERENCE = Point3(x=915.0, y=4055.0, z=410.0)
SINGLES = [
    Point3(x=928.7, y=4042.3, z=407.3),
    Point3(x=901.3, y=4045.4, z=404.3),
    Point3(x=915.0, y=4047.6, z=431.5),
]
TRILATERATED = Point3(x=909.0, y=4045.9, z=415.5)


def _trace(n, joints=("left_hip", "right_ankle"), seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for iteration in range(n):
        for joint in joints:
            rows.append(
                {
                    "iteration": iteration,
                    "joint": joint,
                    "x_mm": rng.uniform(2000, 4000),
                    "y_mm": rng.uniform(500, 3000),
                    "z_mm": rng.uniform(80, 900),
                }
            )
    return pd.DataFrame(rows)


def _errors(values, client=1):
    return [
        TimingError(client=client, seq=i + 2, error_ms=v, server_time_us=(i + 1) * 60_000)
        for i, v in enumerate(values)
    ]


class TestLocalizationErrors:
    def test_published_comparison(self, rounding_tolerance):
        report = localization_errors(REFERENCE, SINGLES, TRILATERATED)
        assert report.errors[TRILATERATION] == pytest.approx(12.20, abs=0.05)
        assert report.errors["k1"] == pytest.approx(18.88, abs=0.05)
        assert report.errors["k2"] == pytest.approx(17.73, abs=rounding_tolerance)
        assert report.errors["k3"] == pytest.approx(22.74, abs=0.05)
        assert report.winner == TRILATERATION

    def test_identity(self):
        report = localization_errors(REFERENCE, [REFERENCE] * 3, REFERENCE)
        assert all(error == 0.0 for error in report.errors.values())


class TestTraceDiff:
    def test_identical_traces(self):
        a = _trace(20)
        report = trace_diff_std(a, a.copy())
        assert report.total_cm == 0.0
        assert all(v == 0.0 for axes in report.per_axis.values() for v in axes.values())
        assert report.samples == 40

    def test_constant_offset_has_no_spread(self):
        a = _trace(50)
        b = a.copy()
        b["x_mm"] += 50.0
        report = trace_diff_std(a, b)
        for axes in report.per_axis.values():
            assert axes["x"] == pytest.approx(0.0, abs=1e-9)

    def test_injected_noise(self):
        n = 1000
        a = _trace(n, joints=("left_knee",))
        rng = np.random.default_rng(8)
        raw = rng.normal(0.0, 20.0, n)
        b = a.copy()
        b["y_mm"] = a["y_mm"] + raw
        report = trace_diff_std(a, b)
        assert report.per_axis["left_knee"]["y"] == pytest.approx(np.std(raw) / 10.0, rel=1e-9)
        assert report.per_axis["left_knee"]["x"] == 0.0

        # noise scaled to exactly 2 cm population std
        scaled = (raw - raw.mean()) / raw.std() * 20.0
        b["y_mm"] = a["y_mm"] + scaled
        assert trace_diff_std(a, b).per_axis["left_knee"]["y"] == pytest.approx(2.0, rel=0.05)

    def test_symmetric(self):
        a = _trace(30, seed=1)
        b = _trace(30, seed=2)
        forward = trace_diff_std(a, b)
        backward = trace_diff_std(b, a)
        assert forward.total_cm == pytest.approx(backward.total_cm)
        assert forward.mean_of_stds_cm == pytest.approx(backward.mean_of_stds_cm)

    def test_row_order_does_not_matter(self):
        a = _trace(30, seed=1)
        b = _trace(30, seed=2)
        shuffled = b.sample(frac=1.0, random_state=0)
        expected = trace_diff_std(a, b).per_axis
        for joint, axes in trace_diff_std(a, shuffled).per_axis.items():
            assert axes == pytest.approx(expected[joint])

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            trace_diff_std(_trace(10), _trace(9))

    def test_misaligned_samples(self):
        a = _trace(10)
        b = a.copy()
        b["iteration"] += 1
        with pytest.raises(LengthMismatch):
            trace_diff_std(a, b)

    def test_single_sample(self):
        with pytest.raises(InsufficientSamples):
            trace_diff_std(_trace(1), _trace(1))


class TestTimingReport:
    def test_published_fraction(self):
        report = timing_report(_errors([0.2] * 4444 + [2.5] * 74))
        assert report.frame_count == 4518
        assert report.fraction_within_1ms == pytest.approx(0.9837, abs=1e-4)

    def test_all_zero(self):
        report = timing_report(_errors([0.0] * 10))
        assert report.fraction_within_1ms == 1.0
        assert report.ordering_ok

    def test_empty(self):
        report = timing_report([])
        assert report.frame_count == 0
        assert report.fraction_within_1ms == 1.0
        assert report.span_s == 0.0

    def test_histogram_buckets(self):
        report = timing_report(_errors([0.5, 1.5, 3.5, -3.2, 8.5, 1.0]))
        counts = {bucket.label: bucket.count for bucket in report.histogram}
        assert len(report.histogram) == 9
        assert counts["<=1ms"] == 2
        assert counts["1-2ms"] == 1
        assert counts["3-4ms"] == 2
        assert counts[">8ms"] == 1
        assert sum(b.fraction for b in report.histogram) == pytest.approx(1.0)

    def test_max_error_per_client_and_ordering(self):
        errors = _errors([8.0, -2.0], client=1) + _errors([1.0], client=2) + _errors([-4.0], client=3)
        report = timing_report(errors)
        assert report.max_error_ms == {1: 8.0, 2: 1.0, 3: 4.0}
        assert report.ordering_ok
        assert not timing_report(_errors([15.0])).ordering_ok

    def test_ordering_uses_slot_length(self):
        assert not timing_report(_errors([9.0]), ScheduleConfig(slot_ms=8.0)).ordering_ok

    def test_span(self):
        report = timing_report(_errors([0.0] * 11))
        assert report.span_s == pytest.approx(0.6)


def test_arrivals_sorted_by_client_then_seq():
    events = pd.DataFrame(
        [
            {"client": 2, "seq": 1, "server_time_us": 15_000},
            {"client": 1, "seq": 2, "server_time_us": 60_000},
            {"client": 1, "seq": 1, "server_time_us": 0},
        ]
    )
    assert arrivals_from_events(events) == [(1, 1, 0), (1, 2, 60_000), (2, 1, 15_000)]


def test_trace_overlay_has_one_row_per_axis():
    truth = _trace(3)
    tri = truth.copy()
    tri["z_mm"] += 1.0
    overlay = trace_overlay(truth, tri)
    assert len(overlay) == 3 * len(truth)
    z = overlay[overlay["axis"] == "z"]
    assert ((z["trilaterated_mm"] - z["truth_mm"]).round(9) == 1.0).all()


class TestNoiseStudy:
    def test_noiseless_trials_are_exact(self, rig):
        report = noise_reduction_study(
            rig, Point3(x=2000.0, y=2000.0, z=800.0), sigma_depth=0.0, sigma_angle=0.0, trials=50
        )
        assert report.unsolved == 0
        assert report.methods[TRILATERATION].count == 50
        assert report.methods[TRILATERATION].mean_mm < 1e-6
        assert report.methods["k1"].mean_mm < 1e-9

    def test_counts_and_determinism(self, rig):
        target = Point3(x=2500.0, y=1800.0, z=900.0)
        report = noise_reduction_study(rig, target, trials=2000, seed=3)
        again = noise_reduction_study(rig, target, trials=2000, seed=3)
        assert report == again
        assert report.methods[TRILATERATION].count + report.unsolved == 2000
        for name in ("k1", "k2", "k3"):
            assert report.methods[name].count == 2000
            assert report.methods[name].mean_mm > 0
        assert report.median_ratio is not None
        assert report.median_ratio > 0

    @pytest.mark.parametrize("z", [900.0, 2500.0])
    def test_trilateration_trails_single_sensors_under_default_noise(self, rig, z):
        report = noise_reduction_study(rig, Point3(x=3000.0, y=1333.0, z=z), trials=10_000, seed=0)
        tri = report.methods[TRILATERATION]
        assert report.trilateration_best_mean is False
        assert tri.count + report.unsolved == 10_000
        for name in ("k1", "k2", "k3"):
            assert tri.mean_mm > report.methods[name].mean_mm
        assert report.median_ratio > 1.2

    def test_different_seeds_differ(self, rig):
        target = Point3(x=2500.0, y=1800.0, z=900.0)
        a = noise_reduction_study(rig, target, trials=500, seed=1)
        b = noise_reduction_study(rig, target, trials=500, seed=2)
        assert a.methods["k1"].mean_mm != b.methods["k1"].mean_mm
