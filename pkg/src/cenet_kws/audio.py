"""Audio front-end: WAV loading, log-mel / MFCC features, augmentations.

One-second 16 kHz clips are framed with a 30 ms window and 10 ms hop.
The signal is first padded by half a window on each side so a one-second
clip yields exactly floor(16000/160) + 1 = 101 frames.  Each frame is
Hann-windowed, transformed with a 512-point FFT, and passed through a
40-band triangular mel filterbank whose edges span the 20 Hz - 4 kHz
band (the band-pass step is realized by the filterbank edges; there is
no separate time-domain filter).  MFCCs apply an orthonormal DCT-II
along the mel axis of the log energies.

All operations are pure functions of their arguments; the trainer owns
augmentation randomness and calls these with explicit parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 16000
CLIP_SAMPLES = 16000

LOG_FLOOR = 1e-10


@dataclass
class AudioClip:
    """Mono float samples in [-1, 1] at 16 kHz."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if not np.isfinite(self.samples).all():
            raise ValueError("AudioClip samples must be finite")

    def __len__(self):
        return len(self.samples)


@dataclass
class FrontendConfig:
    window_ms: float = 30.0
    hop_ms: float = 10.0
    n_mels: int = 40
    n_coeffs: int = 40
    band_low_hz: float = 20.0
    band_high_hz: float = 4000.0
    feature_kind: str = "mfcc"       # mfcc | fbank
    mel_scale: str = "htk"           # htk | slaney

    def __post_init__(self):
        if not 0 <= self.band_low_hz < self.band_high_hz <= SAMPLE_RATE / 2:
            raise ValueError("require band_low_hz < band_high_hz <= sample_rate/2")
        if self.n_coeffs > self.n_mels:
            raise ValueError("n_coeffs cannot exceed n_mels")
        if self.feature_kind not in ("mfcc", "fbank"):
            raise ValueError(f"unknown feature kind {self.feature_kind!r}")
        if self.mel_scale not in ("htk", "slaney"):
            raise ValueError(f"unknown mel scale {self.mel_scale!r}")

    @property
    def window_samples(self):
        return int(round(self.window_ms * SAMPLE_RATE / 1000.0))

    @property
    def hop_samples(self):
        return int(round(self.hop_ms * SAMPLE_RATE / 1000.0))

    @property
    def fft_size(self):
        n = 1
        while n < self.window_samples:
            n *= 2
        return n


@dataclass
class FeatureMatrix:
    """t x f grid of features; t frames, f mel bins or cepstral coeffs."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise ValueError("FeatureMatrix must be two-dimensional")
        if not np.isfinite(self.values).all():
            raise ValueError("FeatureMatrix entries must be finite")
        if self.kind not in ("mfcc", "fbank"):
            raise ValueError(f"unknown feature kind {self.kind!r}")

    @property
    def t(self):
        return self.values.shape[0]

    @property
    def f(self):
        return self.values.shape[1]


# -- WAV IO ----------------------------------------------------------------


def read_wav(path):
    """Read a mono 16 kHz PCM16 or float32 WAV and normalize to [-1, 1]."""
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise ValueError(f"unreadable WAV file {path}: {exc}") from exc
    if rate != SAMPLE_RATE:
        raise ValueError(f"unsupported sample rate {rate} (expected {SAMPLE_RATE}, no resampling)")
    if data.ndim != 1:
        raise ValueError(f"expected mono audio, got {data.ndim} channels")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype}")
    return np.clip(samples, -1.0, 1.0)


def load_wav(path):
    """Load a WAV as a one-second AudioClip (zero-padded or center-cropped)."""
    samples = read_wav(path)
    n = len(samples)
    if n < CLIP_SAMPLES:
        samples = np.pad(samples, (0, CLIP_SAMPLES - n))
    elif n > CLIP_SAMPLES:
        start = (n - CLIP_SAMPLES) // 2
        samples = samples[start:start + CLIP_SAMPLES]
    return AudioClip(samples)


def write_wav(path, samples):
    """Write float samples as PCM16 (test and tooling helper)."""
    pcm = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    wavfile.write(path, SAMPLE_RATE, (pcm * 32767.0).astype(np.int16))


# -- mel filterbank and DCT -------------------------------------------------


def _hz_to_mel(hz, scale):
    hz = np.asarray(hz, dtype=np.float64)
    if scale == "htk":
        return 2595.0 * np.log10(1.0 + hz / 700.0)
    # slaney: linear below 1 kHz, logarithmic above
    f_sp, min_log_hz = 200.0 / 3.0, 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    mel = hz / f_sp
    above = hz >= min_log_hz
    return np.where(above, min_log_mel + np.log(np.maximum(hz, min_log_hz) / min_log_hz) / logstep, mel)


def _mel_to_hz(mel, scale):
    mel = np.asarray(mel, dtype=np.float64)
    if scale == "htk":
        return 700.0 * (10.0 ** (mel / 2595.0) - 1.0)
    f_sp, min_log_hz = 200.0 / 3.0, 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    above = mel >= min_log_mel
    return np.where(above, min_log_hz * np.exp(logstep * (mel - min_log_mel)), f_sp * mel)


def mel_center_frequencies(cfg):
    """Center frequency (Hz) of each of the n_mels triangular filters."""
    edges = np.linspace(_hz_to_mel(cfg.band_low_hz, cfg.mel_scale),
                        _hz_to_mel(cfg.band_high_hz, cfg.mel_scale),
                        cfg.n_mels + 2)
    return _mel_to_hz(edges, cfg.mel_scale)[1:-1]


def mel_filterbank(cfg):
    """(n_mels, fft_size//2 + 1) triangular weights, unit peak."""
    n_bins = cfg.fft_size // 2 + 1
    bin_hz = np.linspace(0.0, SAMPLE_RATE / 2.0, n_bins)
    edges = np.linspace(_hz_to_mel(cfg.band_low_hz, cfg.mel_scale),
                        _hz_to_mel(cfg.band_high_hz, cfg.mel_scale),
                        cfg.n_mels + 2)
    hz = _mel_to_hz(edges, cfg.mel_scale)
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, center, hi = hz[m], hz[m + 1], hz[m + 2]
        rising = (bin_hz - lo) / max(center - lo, 1e-12)
        falling = (hi - bin_hz) / max(hi - center, 1e-12)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def dct_matrix(n):
    """Orthonormal DCT-II matrix D (n x n): D @ D.T == I."""
    k = np.arange(n)[:, None]
    j = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * k * (2 * j + 1) / (2.0 * n))
    d[0] *= np.sqrt(0.5)
    return d


# -- feature extraction ------------------------------------------------------


def _frames(clip, cfg):
    samples = np.asarray(clip.samples, dtype=np.float64)
    if len(samples) != CLIP_SAMPLES:
        raise ValueError(f"expected a one-second clip ({CLIP_SAMPLES} samples), got {len(samples)}")
    win, hop = cfg.window_samples, cfg.hop_samples
    padded = np.pad(samples, win // 2)
    n_frames = (len(padded) - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    # periodic Hann
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)
    return padded[idx] * window[None, :]


def compute_fbank(clip, cfg=None):
    """Log mel-filterbank features, 101 x n_mels for a one-second clip."""
    cfg = cfg or FrontendConfig(feature_kind="fbank")
    frames = _frames(clip, cfg)
    spectrum = np.abs(np.fft.rfft(frames, n=cfg.fft_size, axis=1))
    energies = spectrum @ mel_filterbank(cfg).T
    logmel = np.log(np.maximum(energies, LOG_FLOOR))
    return FeatureMatrix(logmel, "fbank")


def compute_mfcc(clip, cfg=None):
    """MFCC features: orthonormal DCT-II of the log-mel energies."""
    cfg = cfg or FrontendConfig()
    logmel = compute_fbank(clip, cfg).values.astype(np.float64)
    coeffs = logmel @ dct_matrix(cfg.n_mels).T
    return FeatureMatrix(coeffs[:, :cfg.n_coeffs], "mfcc")


def compute_features(clip, kind="mfcc", cfg=None):
    if cfg is None:
        cfg = FrontendConfig(feature_kind=kind)
    return compute_mfcc(clip, cfg) if kind == "mfcc" else compute_fbank(clip, cfg)


# -- augmentations -----------------------------------------------------------


def augment_noise(clip, noise, snr_db, rng_seed):
    """Mix a random one-second noise crop into the clip at a target SNR.

    The gain g solves 10*log10(P_signal / P_noise_scaled) = snr_db.  The
    result is clipped to [-1, 1].  Deterministic for a given rng_seed.
    Raises on zero-power signal or noise (the SNR is undefined there).
    """
    if len(noise) < CLIP_SAMPLES:
        raise ValueError("noise clip must be at least one second long")
    rng = np.random.default_rng(rng_seed)
    start = int(rng.integers(0, len(noise) - CLIP_SAMPLES + 1))
    crop = np.asarray(noise.samples, dtype=np.float64)[start:start + CLIP_SAMPLES]
    p_signal = float(np.mean(np.square(clip.samples)))
    p_noise = float(np.mean(np.square(crop)))
    if p_noise == 0.0:
        raise ValueError("noise clip has zero power; cannot reach the target SNR")
    if p_signal == 0.0:
        raise ValueError("signal has zero power; SNR mixing is undefined")
    gain = np.sqrt(p_signal / (p_noise * 10.0 ** (snr_db / 10.0)))
    return AudioClip(np.clip(clip.samples + gain * crop, -1.0, 1.0))


def time_shift(clip, shift_ms):
    """Shift samples by round(shift_ms * 16) positions, zero-filling the gap."""
    if abs(shift_ms) > 100.0:
        raise ValueError(f"time shift {shift_ms} ms outside [-100, 100]")
    n = int(round(shift_ms * SAMPLE_RATE / 1000.0))
    out = np.zeros_like(clip.samples)
    if n > 0:
        out[n:] = clip.samples[:-n]
    elif n < 0:
        out[:n] = clip.samples[-n:]
    else:
        out[:] = clip.samples
    return AudioClip(out)
