"""Shared fixtures: gradient checking and a synthetic mini corpus."""

import os

import numpy as np
import pytest

from cenet_kws.audio import write_wav
from cenet_kws.data import assign_split


def numeric_grad(fn, x, h=1e-4):
    """Central finite differences of a scalar fn() w.r.t. array x (in place)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn()
        flat[i] = orig - h
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def assert_grads_match(build_loss, leaves, tol=1e-4, h=1e-4):
    """Backward grads vs central differences; rel err < tol per element."""
    for leaf in leaves:
        leaf.zero_grad()
    build_loss().backward()
    for leaf in leaves:
        num = numeric_grad(lambda: build_loss().item(), leaf.data, h)
        err = np.max(np.abs(leaf.grad - num) / np.maximum(1.0, np.abs(num)))
        assert err < tol, f"gradient mismatch: rel err {err:.3e}"


def speakers_for_split(split, count, prefix="spk"):
    """Deterministic speaker ids that hash into the requested split."""
    found, i = [], 0
    while len(found) < count:
        sid = f"{prefix}{i:05d}"
        if assign_split(sid) == split:
            found.append(sid)
        i += 1
    return found


def synth_clip(rng, tone_hz, amplitude=0.25):
    t = np.arange(16000) / 16000.0
    return amplitude * np.sin(2 * np.pi * tone_hz * t) + 0.02 * rng.normal(0, 1, 16000)


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """Tiny dataset tree with speakers in all three splits plus noise."""
    root = tmp_path_factory.mktemp("corpus")
    rng = np.random.default_rng(1234)
    words = ["yes", "no", "bed"]  # two keywords plus one unknown word
    speakers = {split: speakers_for_split(split, 3) for split in ("train", "val", "test")}
    for w_idx, word in enumerate(words):
        os.makedirs(root / word)
        for split, sids in speakers.items():
            for sid in sids:
                for take in range(2):
                    tone = 220.0 + 170.0 * w_idx + 13.0 * (hash(sid) % 7)
                    write_wav(root / word / f"{sid}_nohash_{take}.wav", synth_clip(rng, tone))
    os.makedirs(root / "_background_noise_")
    write_wav(root / "_background_noise_" / "hum.wav", 0.05 * rng.normal(0, 1, 48000))
    write_wav(root / "_background_noise_" / "hiss.wav", 0.03 * rng.normal(0, 1, 32000))
    return str(root)
