"""Input validation helpers for the public estimator API."""

from __future__ import annotations

import numpy as np

from .audio import CLIP_SAMPLES

FEATURE_FRAMES = 101
FEATURE_BINS = 40


def check_feature_array(X, frames=FEATURE_FRAMES, bins=FEATURE_BINS):
    """Coerce X to a finite float32 (n, frames, bins) array.

    Accepts (n, frames, bins), (n, 1, frames, bins), or flattened
    (n, frames*bins) input.
    """
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 4 and X.shape[1] == 1:
        X = X[:, 0]
    if X.ndim == 2 and X.shape[1] == frames * bins:
        X = X.reshape(len(X), frames, bins)
    if X.ndim != 3 or X.shape[1:] != (frames, bins):
        raise ValueError(f"expected features shaped (n, {frames}, {bins}) "
                         f"or (n, {frames * bins}); got {np.asarray(X).shape}")
    if len(X) == 0:
        raise ValueError("empty feature array")
    if not np.isfinite(X).all():
        raise ValueError("features contain NaN or Inf")
    return X


def check_waveform_array(X):
    """Coerce X to a finite float64 (n, 16000) array of [-1, 1] samples."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != CLIP_SAMPLES:
        raise ValueError(f"expected waveforms shaped (n, {CLIP_SAMPLES}); got {X.shape}")
    if not np.isfinite(X).all():
        raise ValueError("waveforms contain NaN or Inf")
    if np.abs(X).max() > 1.0 + 1e-6:
        raise ValueError("waveform samples must lie in [-1, 1]")
    return X


def check_labels(y, n_samples):
    y = np.asarray(y)
    if y.shape != (n_samples,):
        raise ValueError(f"expected {n_samples} labels, got shape {y.shape}")
    return y
