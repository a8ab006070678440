"""Accuracy and ROC evaluation, plus stage feature-map export.

ROC curves sweep a sensitivity threshold over [0, 1].  At threshold t,
a sample counts as detected when its keyword score is >= t (ties count
as detections), so the false alarm rate is the detected fraction of
non-targets and the false reject rate is the undetected fraction of
targets.  Per-keyword curves computed on a shared threshold grid are
averaged vertically (pointwise at matched sweep positions) into the
overall curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

DEFAULT_THRESHOLDS = 101


def accuracy(logits, labels):
    """Fraction of rows whose argmax equals the label."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"accuracy shape mismatch: {logits.shape} vs {labels.shape}")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


@dataclass
class RocCurve:
    """FAR/FRR pairs over a strictly increasing threshold sweep."""

    keyword: str
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    auc: float = field(init=False)

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=np.float64)
        self.far = np.asarray(self.far, dtype=np.float64)
        self.frr = np.asarray(self.frr, dtype=np.float64)
        if not (len(self.thresholds) == len(self.far) == len(self.frr)):
            raise ValueError("threshold/far/frr length mismatch")
        if np.any(np.diff(self.thresholds) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        self.auc = _trapezoid_auc(self.far, self.frr)

    def rows(self):
        return zip(self.thresholds, self.far, self.frr)


def _trapezoid_auc(far, frr):
    # integrate FRR over the FAR axis along the sweep polyline
    dfar = np.abs(np.diff(far))
    return float(np.sum(dfar * (frr[1:] + frr[:-1]) / 2.0))


def roc_for_keyword(scores, is_target, n_thresholds=DEFAULT_THRESHOLDS, keyword="keyword"):
    """ROC for one keyword from per-sample scores and target flags."""
    scores = np.asarray(scores, dtype=np.float64)
    is_target = np.asarray(is_target, dtype=bool)
    if scores.shape != is_target.shape or scores.ndim != 1:
        raise ValueError("scores and is_target must be matching 1-d arrays")
    n_pos = int(is_target.sum())
    n_neg = int((~is_target).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one target and one non-target sample")
    thresholds = np.linspace(0.0, 1.0, n_thresholds)
    detected = scores[None, :] >= thresholds[:, None]
    far = (detected & ~is_target[None, :]).sum(axis=1) / n_neg
    frr = (~detected & is_target[None, :]).sum(axis=1) / n_pos
    return RocCurve(keyword, thresholds, far, frr)


def vertical_average(curves):
    """Average per-keyword FRR (and FAR) at matched threshold grid points."""
    if not curves:
        raise ValueError("cannot average an empty list of curves")
    grid = curves[0].thresholds
    for c in curves[1:]:
        if len(c.thresholds) != len(grid) or not np.allclose(c.thresholds, grid):
            raise ValueError("curves must share the threshold grid")
    far = np.mean([c.far for c in curves], axis=0)
    frr = np.mean([c.frr for c in curves], axis=0)
    return RocCurve("overall", grid, far, frr)


def softmax_scores(logits):
    """Row-stochastic posteriors from raw logits (numpy in, numpy out)."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_logits(model, features, batch_size=64):
    """Infer-mode logits for an (n, 1, 101, 40) or (n, 101, 40) feature array."""
    feats = np.asarray(features, dtype=np.float32)
    if feats.ndim == 3:
        feats = feats[:, None, :, :]
    outs = []
    for start in range(0, len(feats), batch_size):
        batch = T.Tensor(feats[start:start + batch_size])
        outs.append(model.forward(batch, train=False).data)
    return np.concatenate(outs, axis=0)


def export_stage_feature_map(model, features, stage, when="pre"):
    """Channel-averaged activation grid of one stage for one clip.

    ``when`` is "pre" or "post" (before or after the stage's GCN);
    requesting "post" on a stage without a GCN is an error.  Returns an
    (h, w) array; interpolation to spectrogram size is left to external
    plotting.
    """
    if when not in ("pre", "post"):
        raise ValueError("when must be 'pre' or 'post'")
    if not 1 <= stage <= len(model.stages):
        raise ValueError(f"stage {stage} out of range")
    if when == "post" and model.stages[stage - 1].gcn is None:
        raise ValueError(f"stage {stage} has no GCN module")
    feats = np.asarray(features, dtype=np.float32)
    if feats.ndim == 2:
        feats = feats[None, None, :, :]
    elif feats.ndim == 3:
        feats = feats[None, :, :, :]
    _, maps = model.forward(T.Tensor(feats), train=False, collect_stage_maps=True)
    grid = maps[f"stage{stage}.{when}"].data[0]
    return grid.mean(axis=0)


def evaluate_model(model, features, labels, keywords=range(10), n_thresholds=DEFAULT_THRESHOLDS,
                   batch_size=64):
    """Accuracy plus per-keyword and overall ROC curves for a split."""
    logits = predict_logits(model, features, batch_size)
    labels = np.asarray(labels)
    scores = softmax_scores(logits)
    curves = []
    for k in keywords:
        is_target = labels == k
        if is_target.all() or not is_target.any():
            continue  # degenerate composition for this keyword
        curves.append(roc_for_keyword(scores[:, k], is_target, n_thresholds, keyword=str(k)))
    overall = vertical_average(curves) if curves else None
    return accuracy(logits, labels), curves, overall
