"""Front-end: WAV IO, feature shapes, DCT/mel oracles, augmentations."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.io import wavfile

from cenet_kws import audio as A


@pytest.fixture
def one_second_clip():
    rng = np.random.default_rng(0)
    return A.AudioClip(rng.uniform(-0.5, 0.5, 16000))


# -- load_wav -----------------------------------------------------------------


def test_load_wav_exact_length(tmp_path, one_second_clip):
    path = tmp_path / "a.wav"
    A.write_wav(path, one_second_clip.samples)
    clip = A.load_wav(path)
    assert len(clip) == 16000
    assert np.abs(clip.samples).max() <= 1.0


def test_load_wav_pads_short_files(tmp_path):
    path = tmp_path / "half.wav"
    A.write_wav(path, 0.3 * np.ones(8000))
    clip = A.load_wav(path)
    assert len(clip) == 16000
    assert np.all(clip.samples[8000:] == 0.0)


def test_load_wav_center_crops_long_files(tmp_path):
    path = tmp_path / "long.wav"
    samples = np.zeros(32000)
    samples[16000] = 0.5  # marker at the center
    A.write_wav(path, samples)
    clip = A.load_wav(path)
    assert len(clip) == 16000
    assert clip.samples[8000] > 0.4


def test_load_wav_rejects_wrong_rate(tmp_path):
    path = tmp_path / "bad.wav"
    wavfile.write(path, 44100, np.zeros(1000, dtype=np.int16))
    with pytest.raises(ValueError, match="sample rate"):
        A.load_wav(path)


def test_load_wav_rejects_stereo(tmp_path):
    path = tmp_path / "stereo.wav"
    wavfile.write(path, 16000, np.zeros((1000, 2), dtype=np.int16))
    with pytest.raises(ValueError, match="mono"):
        A.load_wav(path)


def test_load_wav_float32_format(tmp_path):
    path = tmp_path / "f32.wav"
    wavfile.write(path, 16000, (0.25 * np.ones(16000)).astype(np.float32))
    clip = A.load_wav(path)
    np.testing.assert_allclose(clip.samples, 0.25, atol=1e-6)


def test_load_wav_missing_file():
    with pytest.raises(FileNotFoundError):
        A.load_wav("/nonexistent/x.wav")


# -- features -----------------------------------------------------------------


def test_feature_shapes_101x40(one_second_clip):
    assert A.compute_fbank(one_second_clip).values.shape == (101, 40)
    assert A.compute_mfcc(one_second_clip).values.shape == (101, 40)


def test_silence_hits_log_floor():
    feats = A.compute_fbank(A.AudioClip(np.zeros(16000)))
    np.testing.assert_allclose(feats.values, np.log(A.LOG_FLOOR), rtol=1e-6)


def test_dct_orthonormality():
    d = A.dct_matrix(40)
    assert np.abs(d @ d.T - np.eye(40)).max() < 1e-6


def test_dct_of_constant_row():
    d = A.dct_matrix(40)
    coeffs = d @ np.full(40, 1.7)
    assert coeffs[0] == pytest.approx(1.7 * np.sqrt(40), rel=1e-9)
    assert np.abs(coeffs[1:]).max() < 1e-9


def test_mfcc_inverts_to_logmel(one_second_clip):
    cfg = A.FrontendConfig()
    logmel = A.compute_fbank(one_second_clip, cfg).values
    coeffs = A.compute_mfcc(one_second_clip, cfg).values
    recovered = coeffs.astype(np.float64) @ np.linalg.inv(A.dct_matrix(40).T)
    assert np.abs(recovered - logmel).max() < 1e-5


def test_sine_lands_in_nearest_mel_bin():
    """Oracle: a direct DFT of the windowed frames plus independently
    computed mel center frequencies must agree on the dominant bin."""
    cfg = A.FrontendConfig(feature_kind="fbank")
    t = np.arange(16000) / 16000.0
    clip = A.AudioClip(0.5 * np.sin(2 * np.pi * 1000.0 * t))
    feats = A.compute_fbank(clip, cfg)
    got_bin = int(feats.values.mean(axis=0).argmax())

    # independent route: explicit DFT matrix on one windowed frame
    win = 480
    frame = clip.samples[8000:8000 + win]
    window = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(win) / win)
    n = np.arange(512)
    dft = np.exp(-2j * np.pi * np.outer(n, n) / 512)
    spec = np.abs(dft @ np.pad(frame * window, (0, 512 - win)))[:257]
    peak_hz = np.argmax(spec) * 16000.0 / 512.0
    centers = A.mel_center_frequencies(cfg)
    assert got_bin == int(np.abs(centers - peak_hz).argmin())


def test_energy_monotone_in_amplitude(one_second_clip):
    base = A.compute_fbank(one_second_clip).values
    louder = A.compute_fbank(A.AudioClip(np.clip(1.6 * one_second_clip.samples, -1, 1))).values
    assert np.all(louder >= base - 1e-6)


def test_feature_determinism(one_second_clip):
    a = A.compute_mfcc(one_second_clip).values
    b = A.compute_mfcc(one_second_clip).values
    assert np.array_equal(a, b)


def test_mel_scale_flag_changes_centers():
    htk = A.mel_center_frequencies(A.FrontendConfig(mel_scale="htk"))
    slaney = A.mel_center_frequencies(A.FrontendConfig(mel_scale="slaney"))
    assert htk.shape == slaney.shape == (40,)
    assert not np.allclose(htk, slaney)


def test_frontend_config_validation():
    with pytest.raises(ValueError):
        A.FrontendConfig(band_low_hz=5000, band_high_hz=4000)
    with pytest.raises(ValueError):
        A.FrontendConfig(band_high_hz=9000)
    with pytest.raises(ValueError):
        A.FrontendConfig(n_coeffs=41)
    with pytest.raises(ValueError):
        A.FrontendConfig(feature_kind="plp")


def test_wrong_length_clip_rejected():
    with pytest.raises(ValueError, match="one-second"):
        A.compute_fbank(A.AudioClip(np.zeros(8000)))


# -- augmentations ------------------------------------------------------------


def test_noise_zero_db_equalizes_power():
    rng = np.random.default_rng(1)
    clip = A.AudioClip(0.1 * np.sin(2 * np.pi * 440 * np.arange(16000) / 16000))
    noise = A.AudioClip(0.05 * rng.normal(0, 1, 40000))
    mixed = A.augment_noise(clip, noise, snr_db=0.0, rng_seed=5)
    added = mixed.samples - clip.samples  # amplitudes small enough that nothing clips
    ratio = np.mean(clip.samples ** 2) / np.mean(added ** 2)
    assert ratio == pytest.approx(1.0, rel=1e-6)


def test_noise_gain_closed_form():
    rng = np.random.default_rng(2)
    clip = A.AudioClip(0.1 * rng.normal(0, 1, 16000))
    noise = A.AudioClip(0.02 * rng.normal(0, 1, 16000))  # exactly 1 s: crop is the whole clip
    p_s = np.mean(clip.samples ** 2)
    p_n = np.mean(noise.samples ** 2)
    expected_gain = np.sqrt(p_s / (p_n * 10.0))
    mixed = A.augment_noise(clip, noise, snr_db=10.0, rng_seed=0)
    got_gain = np.linalg.norm(mixed.samples - clip.samples) / np.linalg.norm(noise.samples)
    assert got_gain == pytest.approx(expected_gain, rel=1e-9)


def test_noise_determinism_and_errors():
    rng = np.random.default_rng(3)
    clip = A.AudioClip(0.1 * rng.normal(0, 1, 16000))
    noise = A.AudioClip(0.05 * rng.normal(0, 1, 50000))
    a = A.augment_noise(clip, noise, 5.0, rng_seed=11)
    b = A.augment_noise(clip, noise, 5.0, rng_seed=11)
    assert np.array_equal(a.samples, b.samples)
    with pytest.raises(ValueError, match="zero power"):
        A.augment_noise(clip, A.AudioClip(np.zeros(16000)), 5.0, 0)
    with pytest.raises(ValueError, match="zero power"):
        A.augment_noise(A.AudioClip(np.zeros(16000)), noise, 5.0, 0)
    with pytest.raises(ValueError, match="one second"):
        A.augment_noise(clip, A.AudioClip(np.ones(100)), 5.0, 0)


def test_time_shift_zero_is_identity(one_second_clip):
    out = A.time_shift(one_second_clip, 0.0)
    assert np.array_equal(out.samples, one_second_clip.samples)


def test_time_shift_boundary(one_second_clip):
    out = A.time_shift(one_second_clip, 100.0)
    assert np.all(out.samples[:1600] == 0.0)
    assert np.array_equal(out.samples[1600:], one_second_clip.samples[:14400])
    with pytest.raises(ValueError):
        A.time_shift(one_second_clip, 150.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-100.0, 100.0))
def test_time_shift_roundtrip_outside_border(shift_ms):
    rng = np.random.default_rng(17)
    clip = A.AudioClip(rng.uniform(-1, 1, 16000))
    n = int(round(shift_ms * 16))
    back = A.time_shift(A.time_shift(clip, shift_ms), -n / 16.0)
    if n >= 0:
        np.testing.assert_array_equal(back.samples[:16000 - n], clip.samples[:16000 - n])
    else:
        np.testing.assert_array_equal(back.samples[-n:], clip.samples[-n:])
