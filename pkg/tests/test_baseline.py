import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radar_hr.baseline import THETA_PAR, bandpass, baseline_hr, spectrum_par
from radar_hr.frontend import InputError
from radar_hr.train import label_waveform

T = np.arange(9000) / 15.0


def _gain_db(freq):
    y = bandpass(np.sin(2 * np.pi * freq * T))
    # steady-state amplitude away from the edges
    return 20 * np.log10(np.abs(y[3000:6000]).max())


def test_one_hertz_tone_passes_within_one_db():
    assert abs(_gain_db(1.0)) < 1.0


@pytest.mark.parametrize("freq", [0.3, 40 / 60 * 0.5, 200 / 60 * 1.5])
def test_out_of_band_tones_attenuated_40db(freq):
    assert _gain_db(freq) <= -40


def test_filter_is_zero_phase():
    x = np.sin(2 * np.pi * 1.3 * T)
    y = bandpass(x)
    lag = np.argmax(np.correlate(y[3000:6000], x[2990:6010], "valid")) - 10
    assert lag == 0


def test_zero_input_zero_output():
    np.testing.assert_array_equal(bandpass(np.zeros(900)), 0.0)


def test_short_waveform_rejected():
    with pytest.raises(InputError):
        bandpass(np.ones(10))


def test_clean_pulse_train_is_found_and_chosen():
    rng = np.random.default_rng(0)
    w = 0.5 * rng.standard_normal((16, 900))
    beats = np.arange(0.4, 60, 60 / 72)
    w[5] = label_waveform(beats, 900) + 0.05 * rng.standard_normal(900)
    rep = baseline_hr(w)
    assert rep.chosen_bin == 5
    assert abs(rep.bpm - 72) <= 0.88
    assert rep.par >= 1


def test_white_noise_is_rejected_95_percent():
    rng = np.random.default_rng(1)
    rejected = [baseline_hr(rng.standard_normal((16, 900))).bpm is None for _ in range(1000)]
    assert np.mean(rejected) >= 0.95


def test_identical_waveforms_tie_to_lowest_index():
    w = np.tile(np.sin(2 * np.pi * 1.2 * T[:900]), (16, 1))
    assert baseline_hr(w).chosen_bin == 0


def test_par_is_at_least_one():
    rng = np.random.default_rng(2)
    for _ in range(50):
        _, par, _ = spectrum_par(rng.standard_normal(900))
        assert par >= 1


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-6, 1e6), st.integers(0, 2**16))
def test_decision_is_scale_invariant(scale, seed):
    rng = np.random.default_rng(seed)
    w = rng.standard_normal((16, 900))
    w[3] += 0.3 * np.sin(2 * np.pi * rng.uniform(0.8, 3.0) * T[:900])
    a, b = baseline_hr(w), baseline_hr(scale * w)
    assert (a.bpm is None) == (b.bpm is None)
    assert a.chosen_bin == b.chosen_bin
    assert a.par == pytest.approx(b.par, rel=1e-9)


def test_default_threshold():
    assert THETA_PAR == 4.0
