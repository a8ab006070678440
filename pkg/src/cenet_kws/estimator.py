"""scikit-learn style wrappers so the models compose with pipelines.

``AudioFeaturizer`` turns (n, 16000) waveforms into (n, 101, 40)
feature planes; ``CENetClassifier`` fits any model variant on feature
arrays with the poly-LR SGD recipe.  Both follow the estimator
contract (``get_params``/``set_params`` via BaseEstimator, ``fit``
returning self), so ``Pipeline([("features", AudioFeaturizer()),
("model", CENetClassifier())])`` works.

Audio augmentation needs raw waveforms and speaker-aware splits, so it
lives in the dataset-driven trainer, not here.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin

from .audio import AudioClip, FrontendConfig, compute_features
from .evaluate import predict_logits, softmax_scores
from .model import build
from .train import TrainConfig, fit_features
from .validation import check_feature_array, check_labels, check_waveform_array


class AudioFeaturizer(TransformerMixin, BaseEstimator):
    """Stateless transformer: one-second waveforms to MFCC/fbank planes."""

    def __init__(self, kind="mfcc", n_mels=40, n_coeffs=40,
                 band_low_hz=20.0, band_high_hz=4000.0, mel_scale="htk"):
        self.kind = kind
        self.n_mels = n_mels
        self.n_coeffs = n_coeffs
        self.band_low_hz = band_low_hz
        self.band_high_hz = band_high_hz
        self.mel_scale = mel_scale

    def fit(self, X, y=None):
        self._config()  # validate parameters
        return self

    def transform(self, X):
        cfg = self._config()
        waves = check_waveform_array(X)
        return np.stack([compute_features(AudioClip(w), self.kind, cfg).values
                         for w in waves])

    def _config(self):
        return FrontendConfig(n_mels=self.n_mels, n_coeffs=self.n_coeffs,
                              band_low_hz=self.band_low_hz, band_high_hz=self.band_high_hz,
                              feature_kind=self.kind, mel_scale=self.mel_scale)


class CENetClassifier(ClassifierMixin, BaseEstimator):
    """Keyword classifier over (n, 101, 40) feature arrays.

    Trains with momentum SGD under the poly learning-rate schedule.
    ``steps`` overrides the epoch-derived step budget when set, which is
    the convenient knob for small-array experiments.
    """

    def __init__(self, variant="cenet6", gcn_stages=(), epochs=20, steps=None,
                 batch_size=64, base_lr=0.01, power=0.9, momentum=0.9,
                 weight_decay=1e-3, random_state=0):
        self.variant = variant
        self.gcn_stages = gcn_stages
        self.epochs = epochs
        self.steps = steps
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.power = power
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.random_state = random_state

    def fit(self, X, y):
        X = check_feature_array(X)
        y = check_labels(y, len(X))
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need at least two classes")
        self.n_features_in_ = X[0].size
        cfg = TrainConfig(base_lr=self.base_lr, power=self.power, epochs=self.epochs,
                          batch_size=min(self.batch_size, len(X)),
                          weight_decay=self.weight_decay, momentum=self.momentum,
                          rng_seed=self.random_state, augment=False)
        steps = self.steps
        if steps is None:
            steps = self.epochs * max(1, len(X) // cfg.batch_size)
        self.model_ = build(variant=self.variant, gcn_stages=tuple(self.gcn_stages),
                            n_classes=len(self.classes_), rng_seed=self.random_state)
        _, self.history_ = fit_features(self.model_, X, encoded, cfg, steps)
        return self

    def decision_function(self, X):
        self._check_fitted()
        return predict_logits(self.model_, check_feature_array(X), self.batch_size)

    def predict_proba(self, X):
        return softmax_scores(self.decision_function(X))

    def predict(self, X):
        logits = self.decision_function(X)
        return self.classes_[np.argmax(logits, axis=1)]

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this CENetClassifier instance is not fitted yet")
