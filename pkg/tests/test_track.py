import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radar_hr.track import (
    AlignmentError,
    HrSeries,
    MetricsError,
    align,
    error_metrics,
    filter_lengths,
    gaussian_kernel,
    median_filter,
    metrics_table_csv,
    postprocess,
    recall,
)

TRUTH = [60.0, 62.0, 64.0, 66.0, 68.0]
PREDS = [61.0, 62.0, 63.0, 67.0, 70.0]


def _series(bpm, conf=None, step=15.0, profile="sleep", start=60.0):
    bpm = np.asarray(bpm, dtype=float)
    conf = np.full(bpm.size, 5.0) if conf is None else np.asarray(conf, dtype=float)
    return HrSeries(start + step * np.arange(bpm.size), bpm, conf, np.isfinite(bpm), step, profile)


def test_filter_lengths():
    assert filter_lengths("sleep") == (40, 4)
    assert filter_lengths("meditation") == (5, 5)


def test_metrics_fixture_against_hand_arithmetic():
    # absolute errors 1, 0, 1, 1, 2; squared 1, 0, 1, 1, 4; truth mean 64
    rep = error_metrics(PREDS, TRUTH)
    assert abs(rep.mae - (1 + 0 + 1 + 1 + 2) / 5) < 1e-12
    assert abs(rep.mape - (1 / 60 + 0 / 62 + 1 / 64 + 1 / 66 + 2 / 68) / 5) < 1e-12
    # type-7 percentile: position 0.95 * 4 = 3.8 between the 4th and 5th order statistics
    assert abs(rep.ae95 - (1 + 0.8 * (2 - 1))) < 1e-12
    assert abs(rep.ape95 - (1 / 60 + 0.8 * (2 / 68 - 1 / 60))) < 1e-12
    assert abs(rep.r2 - (1 - (1 + 0 + 1 + 1 + 4) / (16 + 4 + 0 + 4 + 16))) < 1e-12
    assert rep.recall == 1.0 and rep.n_samples == 5


def test_fixture_mean_squared_error_is_1_4():
    # 1.4 is the mean squared error of the fixture, not its MAE
    ae = np.abs(np.subtract(PREDS, TRUTH))
    assert abs(np.mean(ae**2) - 1.4) < 1e-12


def test_perfect_predictions():
    rep = error_metrics(TRUTH, TRUTH)
    assert rep.mae == 0 and rep.mape == 0 and rep.r2 == 1


def test_mean_prediction_has_zero_r2():
    assert error_metrics(np.full(5, np.mean(TRUTH)), TRUTH).r2 == pytest.approx(0.0, abs=1e-12)


def test_negative_r2_is_not_clamped():
    assert error_metrics([90.0, 30.0, 90.0, 30.0, 90.0], TRUTH).r2 < -10


def test_constant_truth_has_undefined_r2():
    with pytest.raises(MetricsError):
        error_metrics([60, 61, 62], [60, 60, 60])


def test_undetermined_samples_only_affect_recall():
    det = np.array([True, True, False, True, False])
    preds = np.array(PREDS)
    preds[~det] = 500.0
    rep = error_metrics(preds, TRUTH, det)
    assert rep.recall == pytest.approx(0.6)
    assert rep.mae == pytest.approx((1 + 0 + 1) / 3)
    assert rep.n_samples == 3


def test_recall_examples():
    assert recall(np.ones(10, bool)) == 1.0
    assert recall(np.arange(10) % 2 == 0) == 0.5
    with pytest.raises(MetricsError):
        recall(np.zeros(0, bool))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.floats(40, 180), st.floats(-20, 20)), min_size=3, max_size=40),
       st.floats(-30, 30))
def test_metric_properties(pairs, shift):
    truth = np.array([p[0] for p in pairs])
    pred = truth + np.array([p[1] for p in pairs])
    if np.ptp(truth) < 1e-6:
        return
    a = error_metrics(pred, truth)
    b = error_metrics(pred + shift, truth + shift)
    assert a.r2 <= 1
    assert 0 <= a.recall <= 1
    assert a.ae95 >= np.median(np.abs(pred - truth)) - 1e-9
    assert b.mae == pytest.approx(a.mae, abs=1e-9)
    assert b.ae95 == pytest.approx(a.ae95, abs=1e-9)


def test_mape_is_not_shift_invariant():
    a = error_metrics(PREDS, TRUTH)
    b = error_metrics(np.add(PREDS, 50), np.add(TRUTH, 50))
    assert b.mape < a.mape


# ---------------------------------------------------------------- postprocess

def test_constant_series_is_fixed_point():
    s = _series(np.full(100, 60.0))
    out = postprocess(s)
    np.testing.assert_allclose(out.bpm, 60.0, atol=1e-12)
    assert out.determined.all()


def test_single_outlier_removed_by_median():
    bpm = np.full(100, 60.0)
    bpm[50] = 30.0
    out = postprocess(_series(bpm))
    np.testing.assert_allclose(out.bpm, 60.0, atol=1e-12)


@pytest.mark.parametrize("gap,undetermined", [(40, False), (41, True)])
def test_long_rejection_runs_become_undetermined(gap, undetermined):
    conf = np.full(200, 5.0)
    conf[80:80 + gap] = 1.0
    bpm = np.linspace(60, 80, 200)
    out = postprocess(_series(bpm, conf))
    assert (not out.determined[80:80 + gap].any()) == undetermined
    assert out.determined[:80].all() and out.determined[80 + gap:].all()
    if not undetermined:
        np.testing.assert_allclose(out.bpm[80:80 + gap], bpm[80:80 + gap], atol=0.5)


@pytest.mark.parametrize("gap,undetermined", [(5, False), (6, True)])
def test_meditation_gap_threshold(gap, undetermined):
    conf = np.full(40, 5.0)
    conf[10:10 + gap] = 0.5
    out = postprocess(_series(np.full(40, 70.0), conf, step=4.0, profile="meditation",
                              start=16.0))
    assert (not out.determined[10:10 + gap].any()) == undetermined


def test_empty_series():
    out = postprocess(_series([]))
    assert len(out) == 0


def test_all_rejected_is_all_undetermined():
    out = postprocess(_series(np.full(10, 60.0), np.full(10, 1.0)))
    assert not out.determined.any()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(40, 180), st.sampled_from([0.5, 2.0, 2.0, 2.0])),
                min_size=1, max_size=150))
def test_postprocess_mask_is_idempotent(entries):
    s = _series([e[0] for e in entries], [e[1] for e in entries])
    once = postprocess(s)
    twice = postprocess(once)
    np.testing.assert_array_equal(once.determined, twice.determined)


@settings(max_examples=30, deadline=None)
@given(st.floats(40, 180), st.integers(1, 120))
def test_postprocess_values_idempotent_for_constant_series(value, n):
    s = _series(np.full(n, value))
    once = postprocess(s)
    np.testing.assert_allclose(postprocess(once).bpm, once.bpm, rtol=1e-12)


def test_median_filter_and_kernel():
    np.testing.assert_array_equal(median_filter(np.array([1.0, 9.0, 1.0, 1.0, 1.0]), 3),
                                  [1.0, 1.0, 1.0, 1.0, 1.0])
    g = gaussian_kernel(4)
    assert g.size == 9 and g.sum() == pytest.approx(1.0)
    assert g[4] / g[0] == pytest.approx(np.exp(0.5 * 9))


# ---------------------------------------------------------------- series io

def test_series_requires_uniform_step():
    with pytest.raises(ValueError):
        HrSeries([60, 75, 95], [1, 2, 3], [1, 1, 1], [1, 1, 1], 15.0)


def test_series_csv_round_trip():
    s = _series([60.5, np.nan, 70.25], [2.0, 0.5, np.inf])
    back = HrSeries.from_csv(s.to_csv())
    np.testing.assert_array_equal(back.time, s.time)
    np.testing.assert_array_equal(back.determined, s.determined)
    np.testing.assert_array_equal(back.bpm[s.determined], s.bpm[s.determined])
    assert np.isinf(back.confidence[2])
    np.testing.assert_allclose(back.window_center, s.time - 30)


def test_align_checks_times():
    s = _series(PREDS)
    est, det, ref = align(s, s.time, [60, None, 64, 66, 68])
    assert est.size == 4
    with pytest.raises(AlignmentError):
        align(s, s.time + 15, TRUTH)
    with pytest.raises(AlignmentError):
        align(s, s.time[:4], TRUTH[:4])


def test_metrics_table_has_one_row_per_method():
    rep = error_metrics(PREDS, TRUTH)
    lines = metrics_table_csv({"pipeline": rep, "bpf_baseline": rep}).splitlines()
    assert lines[0].split(",")[0] == "method" and len(lines) == 3
