"""SGD training loop with poly learning-rate decay and augmentation policy.

The schedule multiplies the base rate by (1 - iter/max_iter)^power where
``iter`` counts optimizer steps.  L2 weight decay applies to conv,
linear, and GCN map weights only; BN affine parameters and the GCN gate
are excluded.  Augmentation randomness lives here (the audio ops are
deterministic given explicit parameters): every training clip is
time-shifted by Y ~ U[-100, 100] ms, and with probability 0.8 a noise
crop is mixed in at an SNR drawn from U[5, 15] dB, both before feature
extraction.

Checkpoints use the binary record format plus a plain-text key=value
sidecar (``<ckpt>.cfg``) carrying the model/run configuration, so a
load can rebuild the model and resume the optimizer bit-exactly.
"""

from __future__ import annotations

import csv
import os
import shutil
from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .audio import FrontendConfig, augment_noise, compute_features, load_wav, time_shift
from .checkpoint import load_tensor_records, save_tensor_records
from .data import SILENCE_LABEL, UNKNOWN_LABEL, make_silence
from .evaluate import accuracy, predict_logits
from .model import ModelConfig, build


@dataclass
class TrainConfig:
    base_lr: float = 0.01
    power: float = 0.9
    epochs: int = 350
    batch_size: int = 64
    weight_decay: float = 1e-3
    momentum: float = 0.9
    noise_prob: float = 0.8
    snr_range_db: tuple = (5.0, 15.0)
    shift_range_ms: tuple = (-100.0, 100.0)
    rng_seed: int = 0
    feature_kind: str = "mfcc"
    augment: bool = True
    unknown_frac: float = 0.1
    silence_frac: float = 0.1

    def __post_init__(self):
        for name in ("base_lr", "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.snr_range_db[0] > self.snr_range_db[1]:
            raise ValueError("snr_range_db must be ordered")
        if self.shift_range_ms[0] > self.shift_range_ms[1]:
            raise ValueError("shift_range_ms must be ordered")


def poly_lr(iteration, max_iter, cfg):
    """base_lr * (1 - iter/max_iter)^power; iter counts optimizer steps."""
    if max_iter <= 0:
        raise ValueError("max_iter must be positive")
    if not 0 <= iteration <= max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {max_iter}]")
    return cfg.base_lr * (1.0 - iteration / max_iter) ** cfg.power


class SGD:
    """Momentum SGD over named parameter groups.

    v <- momentum * v + (g + weight_decay * w) for decayed weights,
    w <- w - lr * v.  Parameters registered with decay=False (BN affine,
    biases, the GCN gate) never receive weight decay.
    """

    def __init__(self, named_params, momentum=0.9, weight_decay=0.0):
        self.groups = [(name, tensor, decay) for name, tensor, decay in named_params]
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {name: np.zeros_like(t.data) for name, t, _ in self.groups}

    def zero_grad(self):
        for _, t, _ in self.groups:
            t.zero_grad()

    def step(self, lr):
        for name, t, decay in self.groups:
            if t.grad is None:
                continue
            g = t.grad
            if decay and self.weight_decay:
                g = g + self.weight_decay * t.data
            v = self.momentum * self.velocity[name] + g
            self.velocity[name] = v
            t.data = t.data - lr * v


def sgd_step(optimizer, lr):
    """Apply one update; grads must already be populated."""
    optimizer.step(lr)


# -- feature-array loop (shared by the trainer and the estimator) -----------


def fit_features(model, features, labels, cfg, steps, optimizer=None, callback=None):
    """Plain SGD loop over an in-memory feature array (no augmentation).

    features: (n, 101, 40) or (n, 1, 101, 40); labels: length-n ints.
    Returns (optimizer, history) where history rows are
    (step, lr, loss, batch_accuracy).
    """
    feats = np.asarray(features, dtype=np.float32)
    if feats.ndim == 3:
        feats = feats[:, None, :, :]
    labels = np.asarray(labels, dtype=np.int64)
    if len(feats) == 0:
        raise ValueError("empty training set")
    if optimizer is None:
        optimizer = SGD(model.named_parameters(), cfg.momentum, cfg.weight_decay)
    rng = np.random.default_rng(cfg.rng_seed)
    history = []
    order = np.array([], dtype=np.int64)
    for step in range(steps):
        if len(order) < cfg.batch_size:
            order = np.concatenate([order, rng.permutation(len(feats))])
        take, order = order[:cfg.batch_size], order[cfg.batch_size:]
        batch = T.Tensor(feats[take])
        batch_labels = labels[take]
        logits = model.forward(batch, train=True)
        loss = T.cross_entropy(logits, batch_labels)
        optimizer.zero_grad()
        loss.backward()
        lr = poly_lr(step, steps, cfg)
        optimizer.step(lr)
        acc = accuracy(logits.data, batch_labels)
        history.append((step, lr, loss.item(), acc))
        if callback is not None and callback(step, lr, loss.item(), acc):
            break
    return optimizer, history


# -- full pipeline over dataset records --------------------------------------


def _epoch_samples(records, noise_clips, cfg, rng):
    """Keyword records plus rebalanced unknown/silence for one epoch."""
    keywords = [r for r in records if r.label < UNKNOWN_LABEL]
    unknowns = [r for r in records if r.label == UNKNOWN_LABEL]
    base = keywords if keywords else unknowns
    n_extra = int(round(cfg.unknown_frac * len(base)))
    chosen = list(keywords)
    if unknowns and keywords:
        idx = rng.choice(len(unknowns), size=min(n_extra, len(unknowns)), replace=False)
        chosen.extend(unknowns[i] for i in idx)
    elif unknowns:
        chosen.extend(unknowns)
    silence = []
    if noise_clips and cfg.silence_frac > 0:
        n_sil = int(round(cfg.silence_frac * len(base)))
        silence = make_silence(noise_clips, n_sil, rng_seed=int(rng.integers(2 ** 31)))
    entries = [(r, None) for r in chosen] + [(None, clip) for clip in silence]
    rng.shuffle(entries)
    return entries


def _featurize(clip, cfg, frontend):
    return compute_features(clip, cfg.feature_kind, frontend).values


def load_split_features(records, cfg, noise_clips=None, silence_count=0, silence_seed=0):
    """Features and labels for an evaluation split (no augmentation).

    Silence samples, when requested, are synthesized deterministically.
    """
    frontend = FrontendConfig(feature_kind=cfg.feature_kind)
    feats = [_featurize(load_wav(r.path), cfg, frontend) for r in records]
    labels = [r.label for r in records]
    if silence_count and noise_clips:
        for clip in make_silence(noise_clips, silence_count, silence_seed):
            feats.append(_featurize(clip, cfg, frontend))
            labels.append(SILENCE_LABEL)
    return np.stack(feats), np.asarray(labels, dtype=np.int64)


def train(model, records, cfg, out_dir=None, val_records=None, noise_clips=None,
          model_config=None, log_fn=None):
    """Train over scanned records with the full augmentation policy.

    Writes per-step metrics to ``<out_dir>/metrics.csv`` and a checkpoint
    per epoch; the best validation checkpoint is kept as ``best.ckpt``.
    Fully deterministic for a fixed cfg.rng_seed.  Returns a dict with
    the metric history and checkpoint paths.
    """
    if not records:
        raise ValueError("empty dataset")
    model_config = model_config or model.config
    frontend = FrontendConfig(feature_kind=cfg.feature_kind)
    optimizer = SGD(model.named_parameters(), cfg.momentum, cfg.weight_decay)
    noise_clips = noise_clips or []

    # epoch composition counts are fixed, so the step budget is exact
    n_keywords = sum(1 for r in records if r.label < UNKNOWN_LABEL)
    n_unknown = sum(1 for r in records if r.label == UNKNOWN_LABEL)
    base = n_keywords or n_unknown
    n_extra = min(int(round(cfg.unknown_frac * base)), n_unknown) if n_keywords else n_unknown
    n_sil = int(round(cfg.silence_frac * base)) if (noise_clips and cfg.silence_frac > 0) else 0
    steps_per_epoch = max(1, (n_keywords + n_extra + n_sil) // cfg.batch_size)
    max_iter = cfg.epochs * steps_per_epoch

    metrics_path = ckpt_dir = None
    writer = metrics_fh = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.csv")
        metrics_fh = open(metrics_path, "w", newline="")
        writer = csv.writer(metrics_fh)
        writer.writerow(["step", "lr", "loss", "train_acc"])

    val_feats = val_labels = None
    if val_records:
        val_feats, val_labels = load_split_features(val_records, cfg)

    history, val_history = [], []
    best_val, best_path = -1.0, None
    iteration = 0
    plan_rng = np.random.default_rng([cfg.rng_seed, 0xA0])
    try:
        for epoch in range(cfg.epochs):
            aug_rng = np.random.default_rng([cfg.rng_seed, epoch, 0xB1])
            entries = _epoch_samples(records, noise_clips, cfg, plan_rng)
            batch_feats, batch_labels = [], []
            for record, silence_clip in entries:
                if record is not None:
                    clip, label = load_wav(record.path), record.label
                else:
                    clip, label = silence_clip, SILENCE_LABEL
                if cfg.augment:
                    shift = aug_rng.uniform(*cfg.shift_range_ms)
                    clip = time_shift(clip, shift)
                    mix = aug_rng.random() < cfg.noise_prob
                    snr = aug_rng.uniform(*cfg.snr_range_db)
                    seed = int(aug_rng.integers(2 ** 31))
                    if mix and noise_clips and np.any(clip.samples):
                        noise = noise_clips[int(aug_rng.integers(0, len(noise_clips)))]
                        clip = augment_noise(clip, noise, snr, seed)
                batch_feats.append(_featurize(clip, cfg, frontend))
                batch_labels.append(label)
                if len(batch_feats) < cfg.batch_size:
                    continue
                if iteration >= max_iter:
                    break
                x = T.Tensor(np.stack(batch_feats)[:, None, :, :].astype(np.float32))
                y = np.asarray(batch_labels, dtype=np.int64)
                batch_feats, batch_labels = [], []
                logits = model.forward(x, train=True)
                loss = T.cross_entropy(logits, y)
                optimizer.zero_grad()
                loss.backward()
                lr = poly_lr(iteration, max_iter, cfg)
                optimizer.step(lr)
                iteration += 1
                row = (iteration, lr, loss.item(), accuracy(logits.data, y))
                history.append(row)
                if writer:
                    writer.writerow(row)
                if log_fn:
                    log_fn(f"step {row[0]} lr {row[1]:.5f} loss {row[2]:.4f} acc {row[3]:.3f}")

            if val_feats is not None:
                val_acc = accuracy(predict_logits(model, val_feats), val_labels)
                val_history.append((epoch, val_acc))
                if log_fn:
                    log_fn(f"epoch {epoch} val_acc {val_acc:.4f}")
            if out_dir:
                ckpt_dir = out_dir
                path = os.path.join(out_dir, f"epoch{epoch:04d}.ckpt")
                save_checkpoint(path, model, model_config, optimizer, iteration, cfg)
                if val_feats is not None and val_history[-1][1] > best_val:
                    best_val = val_history[-1][1]
                    best_path = os.path.join(out_dir, "best.ckpt")
                    shutil.copyfile(path, best_path)
                    shutil.copyfile(path + ".cfg", best_path + ".cfg")
    finally:
        if metrics_fh:
            metrics_fh.close()

    return {"history": history, "val_history": val_history, "metrics_path": metrics_path,
            "checkpoint_dir": ckpt_dir, "best_checkpoint": best_path, "best_val": best_val}


# -- checkpointing ------------------------------------------------------------


def save_checkpoint(path, model, model_config, optimizer=None, iteration=0, train_cfg=None):
    """Write model params, BN stats, optimizer state, and the config sidecar."""
    records = {}
    for name, tensor, _ in model.named_parameters():
        records[f"param/{name}"] = tensor.data
    for name, stats, attr in model.named_buffers():
        records[f"buffer/{name}"] = getattr(stats, attr)
    if optimizer is not None:
        for name, v in optimizer.velocity.items():
            records[f"opt/{name}"] = v
    records["meta/iteration"] = np.asarray(float(iteration), dtype=np.float32)
    save_tensor_records(path, records)

    lines = [f"variant={model_config.variant}",
             f"n_classes={model_config.n_classes}",
             f"gcn_stages={','.join(str(s) for s in model_config.gcn_stages)}",
             f"gcn_reduction={model_config.gcn_reduction}"]
    if train_cfg is not None:
        for f in fields(train_cfg):
            value = getattr(train_cfg, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"train.{f.name}={value}")
    with open(path + ".cfg", "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path, rng_seed=0):
    """Rebuild the model from a checkpoint; returns (model, state dict)."""
    records = load_tensor_records(path)
    cfg_path = path + ".cfg"
    if not os.path.exists(cfg_path):
        raise FileNotFoundError(f"missing checkpoint sidecar {cfg_path}")
    kv = {}
    with open(cfg_path) as fh:
        for line in fh:
            line = line.strip()
            if line and "=" in line:
                key, value = line.split("=", 1)
                kv[key] = value
    gcn_stages = tuple(int(s) for s in kv.get("gcn_stages", "").split(",") if s)
    config = ModelConfig(variant=kv["variant"], n_classes=int(kv.get("n_classes", 12)),
                         gcn_stages=gcn_stages,
                         gcn_reduction=int(kv.get("gcn_reduction", 4)))
    model = build(config, rng_seed=rng_seed)

    for name, tensor, _ in model.named_parameters():
        key = f"param/{name}"
        if key not in records:
            raise KeyError(f"checkpoint missing parameter {name}")
        if records[key].shape != tensor.data.shape:
            raise ValueError(f"shape mismatch for {name}")
        tensor.data = records[key]
    for name, stats, attr in model.named_buffers():
        setattr(stats, attr, records[f"buffer/{name}"])
    velocity = {name[len("opt/"):]: arr for name, arr in records.items()
                if name.startswith("opt/")}
    state = {
        "iteration": int(records.get("meta/iteration", np.zeros(())).item()),
        "velocity": velocity,
        "config": config,
        "train_kv": {k[len("train."):]: v for k, v in kv.items() if k.startswith("train.")},
    }
    return model, state


def make_optimizer_from_state(model, cfg, state):
    """Recreate an SGD whose next step matches the saved run exactly."""
    optimizer = SGD(model.named_parameters(), cfg.momentum, cfg.weight_decay)
    for name, v in state["velocity"].items():
        if name in optimizer.velocity:
            optimizer.velocity[name] = v
    return optimizer
