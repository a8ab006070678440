"""Dataset scanning, speaker-hash splits, silence synthesis, manifests."""

import logging
import os

import numpy as np
import pytest

from cenet_kws import data as D
from cenet_kws.audio import AudioClip, write_wav


def test_label_mapping(mini_corpus):
    records = D.scan(mini_corpus)
    by_word = {}
    for r in records:
        by_word.setdefault(r.raw_word, set()).add(r.label)
    assert by_word["yes"] == {0}
    assert by_word["no"] == {1}
    assert by_word["bed"] == {D.UNKNOWN_LABEL}
    assert all(0 <= r.label < 12 for r in records)


def test_speaker_parsed_from_filename(mini_corpus):
    for r in D.scan(mini_corpus):
        assert os.path.basename(r.path).startswith(r.speaker_id + "_nohash_")


def test_scan_is_stable_and_sorted(mini_corpus):
    a = D.scan(mini_corpus)
    b = D.scan(mini_corpus)
    assert [r.path for r in a] == [r.path for r in b]
    assert [r.path for r in a] == sorted(r.path for r in a)


def test_background_noise_not_in_records(mini_corpus):
    assert all(D.BACKGROUND_DIR not in r.path for r in D.scan(mini_corpus))
    assert len(D.noise_files(mini_corpus)) == 2


def test_malformed_filenames_skipped(tmp_path, caplog):
    os.makedirs(tmp_path / "yes")
    write_wav(tmp_path / "yes" / "ok_nohash_0.wav", np.zeros(16000))
    write_wav(tmp_path / "yes" / "broken.wav", np.zeros(16000))
    with caplog.at_level(logging.WARNING):
        records = D.scan(tmp_path)
    assert len(records) == 1
    assert "malformed" in caplog.text


def test_scan_empty_directory(tmp_path):
    with pytest.raises(ValueError, match="no dataset"):
        D.scan(tmp_path)
    with pytest.raises(ValueError, match="not a directory"):
        D.scan(tmp_path / "missing")


def test_assign_split_deterministic():
    assert D.assign_split("abc123") == D.assign_split("abc123")
    with pytest.raises(ValueError):
        D.assign_split("")


def test_same_speaker_same_split_across_words(mini_corpus):
    by_speaker = {}
    for r in D.scan(mini_corpus):
        by_speaker.setdefault(r.speaker_id, set()).add(r.split)
    assert all(len(splits) == 1 for splits in by_speaker.values())


def test_speaker_disjointness(mini_corpus):
    splits = {"train": set(), "val": set(), "test": set()}
    for r in D.scan(mini_corpus):
        splits[r.split].add(r.speaker_id)
    assert not (splits["train"] & splits["val"])
    assert not (splits["train"] & splits["test"])
    assert not (splits["val"] & splits["test"])


def test_split_fractions_near_80_10_10():
    """Empirical fractions over a large deterministic speaker population."""
    ids = [f"speaker{i:06d}" for i in range(20_000)]
    assigned = [D.assign_split(s) for s in ids]
    frac = {s: assigned.count(s) / len(ids) * 100 for s in ("train", "val", "test")}
    assert abs(frac["train"] - 80.0) < 2.0
    assert abs(frac["val"] - 10.0) < 1.0
    assert abs(frac["test"] - 10.0) < 1.0


def test_make_silence_determinism_and_bounds():
    rng = np.random.default_rng(0)
    noise = [AudioClip(0.5 * rng.normal(0, 0.2, 40000).clip(-1, 1))]
    a = D.make_silence(noise, 5, rng_seed=7)
    b = D.make_silence(noise, 5, rng_seed=7)
    assert len(a) == 5
    for ca, cb in zip(a, b):
        assert np.array_equal(ca.samples, cb.samples)
        assert len(ca) == 16000
    assert D.make_silence(noise, 0, rng_seed=0) == []
    with pytest.raises(ValueError):
        D.make_silence([], 3, rng_seed=0)


def test_silence_is_scaled_contiguous_crop():
    rng = np.random.default_rng(1)
    source = AudioClip(rng.uniform(-0.9, 0.9, 30000))
    clip = D.make_silence([source], 1, rng_seed=3)[0]
    # subsequence-search oracle: find the crop offset by matching ratios
    nz = np.nonzero(clip.samples)[0]
    assert len(nz) > 0
    matches = []
    for start in range(30000 - 16000 + 1):
        seg = source.samples[start:start + 16000]
        if seg[nz[0]] != 0:
            gain = clip.samples[nz[0]] / seg[nz[0]]
            if 0 <= gain <= 1 and np.allclose(clip.samples, gain * seg, atol=1e-12):
                matches.append(start)
    assert matches


def test_manifest_roundtrip(mini_corpus, tmp_path):
    records = D.scan(mini_corpus)
    path = tmp_path / "manifest.csv"
    D.write_manifest(records, path)
    back = D.read_manifest(path)
    assert [(r.path, r.label, r.speaker_id, r.split) for r in back] == \
           [(r.path, r.label, r.speaker_id, r.split) for r in records]
    header = open(path).readline().strip()
    assert header == "path,label,speaker,split"
