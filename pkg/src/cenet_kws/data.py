"""Speech-commands dataset handling: scanning, splits, silence synthesis.

The on-disk layout is one directory per spoken word containing files
named ``<speaker>_nohash_<take>.wav`` plus a ``_background_noise_``
directory of longer recordings.  Ten target words map to labels 0-9,
every other word is "unknown" (10), and "silence" (11) is synthesized
from random background-noise crops rather than scanned from disk.

Split assignment hashes the speaker id, never the file, so all
takes of one speaker land in the same split and the speaker sets of
train/val/test are disjoint.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import os
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, CLIP_SAMPLES, read_wav

log = logging.getLogger(__name__)

KEYWORDS = ("yes", "no", "up", "down", "left", "right", "on", "off", "stop", "go")
UNKNOWN_LABEL = 10
SILENCE_LABEL = 11
LABEL_NAMES = KEYWORDS + ("unknown", "silence")
N_CLASSES = 12

BACKGROUND_DIR = "_background_noise_"

# mirrors the bucketing used by the dataset's own partitioning tool
_HASH_BUCKETS = 2 ** 27 - 1


@dataclass
class SampleRecord:
    path: str
    raw_word: str
    label: int
    speaker_id: str
    split: str


def assign_split(speaker_id, val_pct=10.0, test_pct=10.0):
    """Deterministic split from a SHA1 digest of the speaker id."""
    if not speaker_id:
        raise ValueError("speaker id must be nonempty")
    digest = hashlib.sha1(speaker_id.encode("utf-8")).hexdigest()
    percentile = (int(digest, 16) % (_HASH_BUCKETS + 1)) * (100.0 / _HASH_BUCKETS)
    if percentile < val_pct:
        return "val"
    if percentile < val_pct + test_pct:
        return "test"
    return "train"


def scan(data_dir, val_pct=10.0, test_pct=10.0):
    """Build sorted SampleRecords for every word WAV under ``data_dir``.

    Background-noise files are not given records; they are reserved for
    silence synthesis and noise augmentation (see ``noise_files``).
    Malformed filenames are skipped with a warning.
    """
    if not os.path.isdir(data_dir):
        raise ValueError(f"not a directory: {data_dir}")
    records = []
    for word in sorted(os.listdir(data_dir)):
        word_dir = os.path.join(data_dir, word)
        if not os.path.isdir(word_dir) or word == BACKGROUND_DIR:
            continue
        label = KEYWORDS.index(word) if word in KEYWORDS else UNKNOWN_LABEL
        for fname in sorted(os.listdir(word_dir)):
            if not fname.endswith(".wav"):
                continue
            if "_nohash_" not in fname:
                log.warning("skipping malformed filename %s/%s", word, fname)
                continue
            speaker = fname.split("_nohash_")[0]
            if not speaker:
                log.warning("skipping malformed filename %s/%s", word, fname)
                continue
            records.append(SampleRecord(
                path=os.path.join(word_dir, fname),
                raw_word=word,
                label=label,
                speaker_id=speaker,
                split=assign_split(speaker, val_pct, test_pct),
            ))
    if not records:
        raise ValueError(f"no dataset WAV files found under {data_dir}")
    return records


def noise_files(data_dir):
    """Paths of the background-noise recordings, sorted."""
    noise_dir = os.path.join(data_dir, BACKGROUND_DIR)
    if not os.path.isdir(noise_dir):
        return []
    return sorted(os.path.join(noise_dir, f) for f in os.listdir(noise_dir)
                  if f.endswith(".wav"))


def load_noise_clips(data_dir):
    return [AudioClip(read_wav(p)) for p in noise_files(data_dir)]


def make_silence(noise_clips, count, rng_seed):
    """Synthesize ``count`` silence clips: random 1 s crops, attenuated.

    Each crop is scaled by a factor drawn uniformly from [0, 1].
    Deterministic for a given rng_seed.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    if count and not noise_clips:
        raise ValueError("silence synthesis requires at least one noise clip")
    rng = np.random.default_rng(rng_seed)
    out = []
    for _ in range(count):
        clip = noise_clips[int(rng.integers(0, len(noise_clips)))]
        if len(clip) < CLIP_SAMPLES:
            raise ValueError("noise clips must be at least one second long")
        start = int(rng.integers(0, len(clip) - CLIP_SAMPLES + 1))
        gain = rng.uniform(0.0, 1.0)
        out.append(AudioClip(gain * clip.samples[start:start + CLIP_SAMPLES]))
    return out


def write_manifest(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path", "label", "speaker", "split"])
        for r in records:
            writer.writerow([r.path, r.label, r.speaker_id, r.split])


def read_manifest(path):
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            records.append(SampleRecord(
                path=row["path"],
                raw_word=os.path.basename(os.path.dirname(row["path"])),
                label=int(row["label"]),
                speaker_id=row["speaker"],
                split=row["split"],
            ))
    return records


def split_counts(records):
    counts = {"train": 0, "val": 0, "test": 0}
    for r in records:
        counts[r.split] += 1
    return counts
