import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from radar_hr.config import RadarConfig, wavelength
from radar_hr.frontend import preprocess
from radar_hr.scene import (
    MAX_RESP_VELOCITY,
    SceneError,
    SceneSpec,
    VitalTrack,
    gen_ground_truth,
    make_beat_times,
    random_scene,
    synth_adc,
    synth_decimated,
    synth_displacement,
    window_ends,
    window_hr,
)

CFG = RadarConfig()


def _rel_rms(a, b):
    return np.sqrt(np.mean(np.abs(a - b) ** 2) / np.mean(np.abs(b) ** 2))


# -- displacement -----------------------------------------------------------

def test_zero_amplitudes_give_zero_displacement():
    track = VitalTrack(beat_times=(0.5, 1.5), resp_rate=0.3)
    assert np.all(synth_displacement(track, np.linspace(0, 3, 50)) == 0.0)


def test_respiration_peak_value():
    track = VitalTrack(resp_rate=0.25, resp_amplitude=4e-3)
    assert synth_displacement(track, 1 / (4 * 0.25)) == pytest.approx(4e-3, rel=1e-15)


def test_displacement_matches_term_by_term_oracle():
    beats = tuple(float(k) for k in range(0, 61))
    track = VitalTrack(beats, resp_rate=0.25, resp_amplitude=4e-3, heartbeat_amplitude=2e-4,
                       heartbeat_pulse_width=0.05)
    t = 2.0
    resp = 4e-3 * np.sin(2 * np.pi * 0.25 * t)
    beat = sum(2e-4 * np.exp(-0.5 * ((t - b) / 0.05) ** 2) for b in beats)
    assert synth_displacement(track, t) == pytest.approx(resp + beat, abs=1e-15)


def test_motion_term_is_confined_to_segment_and_seeded():
    track = VitalTrack(motion_segments=((2.0, 4.0, 0.02, 2.0),), motion_seed=7)
    t = np.linspace(0, 6, 601)
    d = synth_displacement(track, t)
    assert np.all(d[(t < 2.0) | (t > 4.0)] == 0)
    assert np.abs(d[(t > 2.5) & (t < 3.5)]).max() > 1e-3
    assert np.array_equal(d, synth_displacement(track, t))


def test_vital_track_validation():
    with pytest.raises(SceneError):
        VitalTrack(beat_times=(1.0, 1.0))
    with pytest.raises(SceneError):
        VitalTrack(resp_amplitude=-1.0)
    with pytest.raises(SceneError):
        synth_displacement(VitalTrack(), -1.0)


# -- ADC synthesis ----------------------------------------------------------

def test_empty_noiseless_scene_is_zero():
    scene = SceneSpec(subject_amplitude=0.0, duration=0.2)
    assert np.all(synth_adc(scene, CFG).samples == 0)
    assert np.all(synth_decimated(scene, CFG).profiles == 0)


def test_static_target_peaks_at_bin_22():
    scene = SceneSpec(subject_range=0.6, duration=0.2)
    prof = preprocess(synth_adc(scene, CFG)).profiles
    assert np.argmax(np.abs(prof[0, 0, :128])) == 22
    f_b = 2 * (5.5e9 / (256 / 2e6)) * 0.6 / 299792458.0
    assert round(f_b / 2e6 * 256) == 22


def test_half_wavelength_displacement_wraps_phase():
    # displacement 0 at t = 0 and lambda/2 at t = 1 s (chirp 0 of burst 30)
    lam = wavelength(CFG)
    track = VitalTrack(resp_rate=0.25, resp_amplitude=lam / 2)
    cube = synth_adc(SceneSpec(subject_range=0.6, track=track, duration=1.1), CFG).samples
    assert synth_displacement(track, 1.0) == pytest.approx(lam / 2, rel=1e-12)
    np.testing.assert_allclose(cube[30, 0], cube[0, 0], atol=1e-9)


def test_unambiguous_range_enforced():
    with pytest.raises(SceneError):
        synth_adc(SceneSpec(subject_range=10.0, duration=0.1), CFG)


def test_decimated_fast_path_matches_adc_path():
    beats = tuple(np.arange(0.3, 4.0, 0.8))
    track = VitalTrack(beats, resp_rate=0.3, resp_amplitude=3e-3, heartbeat_amplitude=3e-4,
                       resp_harmonics=(0.1,))
    scene = SceneSpec(subject_range=0.7, subject_angle=0.3, track=track,
                      clutter=((0.3, 2.0), (1.6, 0.5)), body_scatterers=((0.05, 0.3),),
                      duration=4.0)
    fast = synth_decimated(scene, CFG)
    slow = preprocess(synth_adc(scene, CFG))
    assert fast.profiles.shape == slow.profiles.shape
    assert _rel_rms(fast.profiles, slow.profiles) < 1e-3
    assert fast.sample_rate == slow.sample_rate == 15.0


def test_sixty_seconds_give_900_profiles():
    assert synth_decimated(SceneSpec(duration=60.0), CFG).n_samples == 900


def test_clutter_only_scene_is_time_constant():
    scene = SceneSpec(subject_amplitude=0.0, clutter=((0.4, 1.0), (1.2, 2.0)), duration=2.0)
    p = synth_decimated(scene, CFG).profiles
    assert np.max(np.var(p, axis=0)) < 1e-20


def test_synthesis_is_deterministic():
    scene = random_scene(np.random.default_rng(3), duration=4.0)
    a = synth_decimated(scene, CFG).profiles
    b = synth_decimated(scene, CFG).profiles
    assert a.tobytes() == b.tobytes()


def test_doubling_amplitude_doubles_peak():
    a = synth_decimated(SceneSpec(subject_range=0.6, subject_amplitude=1.0, duration=0.2), CFG)
    b = synth_decimated(SceneSpec(subject_range=0.6, subject_amplitude=2.0, duration=0.2), CFG)
    assert np.abs(b.profiles[:, :, 22]) == pytest.approx(2 * np.abs(a.profiles[:, :, 22]))


def test_phase_fidelity_at_peak_bin():
    # bin-centred range so the peak bin carries the carrier phase without leakage
    r = 22 * (299792458.0 / (2 * 5.5e9))
    track = VitalTrack(resp_rate=0.25, resp_amplitude=1e-3)
    scene = SceneSpec(subject_range=r, track=track, duration=4.0)
    cube = synth_adc(scene, CFG)
    spec = np.fft.fft(cube.samples[:, :, 0, :], axis=-1)[..., 22]
    t = np.arange(cube.samples.shape[0])[:, None] / 30 + np.arange(20)[None, :] / 3000
    expected = 4 * np.pi * (r + synth_displacement(track, t.ravel()).reshape(t.shape)) / \
        wavelength(CFG)
    err = np.angle(spec * np.exp(-1j * expected))
    assert np.max(np.abs(err)) < 1e-6


# -- ground truth -----------------------------------------------------------

def test_window_hr_examples():
    assert window_hr(np.arange(0, 61.0), 0, 60) == pytest.approx(60.0)
    assert window_hr(np.arange(0, 61, 0.75), 0, 60) == pytest.approx(80.0)
    assert window_hr([5.0], 0, 60) is None


def test_window_hr_counting_oracle_accelerating_beats():
    intervals = np.linspace(1.0, 0.6, 80)
    beats = np.concatenate([[0.2], 0.2 + np.cumsum(intervals)])
    inside = [b for b in beats if 0 <= b < 60]
    oracle = 60 * (len(inside) - 1) / (inside[-1] - inside[0])
    assert window_hr(beats, 0, 60) == pytest.approx(oracle, abs=1e-9)


def test_ground_truth_windows_and_still_mask():
    track = VitalTrack(tuple(np.arange(0.5, 120, 1.0)),
                       motion_segments=((70.0, 80.0, 0.01, 2.0),))
    gt = gen_ground_truth(SceneSpec(track=track, duration=120.0), (60.0, 15.0), CFG)
    assert list(gt.window_ends) == [60.0, 75.0, 90.0, 105.0, 120.0]
    assert [c for c, _ in gt.window_hrs] == [30.0, 45.0, 60.0, 75.0, 90.0]
    assert list(gt.still_mask) == [True, False, False, False, False]
    assert gt.window_hrs[0][1] == pytest.approx(60.0)
    assert gt.displacement.shape == (900 * 2,)


def test_window_ends_validation():
    with pytest.raises(ValueError):
        window_ends(60, 0, 15)
    assert list(window_ends(32, 16, 4)) == [16, 20, 24, 28, 32]


def test_ground_truth_window_without_beats_is_undefined():
    gt = gen_ground_truth(SceneSpec(track=VitalTrack((1.0,)), duration=60.0))
    assert gt.window_hrs[0][1] is None


# -- corpus generator -------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["sleep", "meditation"]), st.booleans())
def test_random_scene_respects_corpus_ranges(seed, profile, stress):
    scene = random_scene(np.random.default_rng(seed), profile, duration=60.0,
                         harmonic_stress=stress)
    tr = scene.track
    assert 0.3 <= scene.subject_range <= 1.5
    ibi = np.diff(tr.beat_times)
    assert np.all(60 / ibi >= 35) and np.all(60 / ibi <= 200)
    assert 10 <= tr.resp_amplitude / tr.heartbeat_amplitude <= 100 + 1e-9
    assert 0.15 <= tr.resp_rate <= 0.4
    assert 2 * np.pi * tr.resp_rate * tr.resp_amplitude <= MAX_RESP_VELOCITY * (1 + 1e-9) or \
        tr.resp_amplitude <= 10 * tr.heartbeat_amplitude * (1 + 1e-9)
    if stress:
        hr = window_hr(tr.beat_times, 0, 60)
        near = [k for k in (2, 3, 4)
                if tr.resp_harmonics[k - 2] >= 0.06 and abs(k * tr.resp_rate * 60 - hr) <= 3]
        assert near


def test_make_beat_times_rate():
    beats = make_beat_times(np.random.default_rng(0), 72.0, 300.0)
    assert 60 * (len(beats) - 1) / (beats[-1] - beats[0]) == pytest.approx(72, rel=0.05)


def test_scene_spec_round_trip():
    scene = random_scene(np.random.default_rng(11), motion=True)
    assert SceneSpec.from_dict(scene.to_dict()) == scene
