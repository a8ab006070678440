"""Command-line entry point.

Subcommands:

  prepare-data   scan a dataset directory, assign splits, write a manifest CSV
  train          train a model variant over a dataset directory
  eval           accuracy and ROC CSVs for a checkpoint on one split
  footprint      parameter/MAC accounting for a variant
  features       extract one clip's features to CSV
  feature-map    channel-averaged stage activation grid for one clip, as CSV

Outputs are CSV so plots can be produced with external tooling.  Every
artifact-producing run writes a run manifest before anything else.
Configuration precedence: CLI flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import csv
import os
import subprocess
import sys
from dataclasses import fields

from . import __version__
from . import data as D
from .audio import compute_features, load_wav
from .evaluate import evaluate_model, export_stage_feature_map
from .footprint import count_macs, count_params
from .model import VARIANTS, ModelConfig, build
from .train import TrainConfig, load_checkpoint, load_split_features, train

DATA_DIR_ENV = "CENET_KWS_DATA_DIR"


def _build_id():
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"],
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except Exception:
        pass
    return "unknown"


def write_run_manifest(out_dir, command, seed, config_items, outputs):
    """Record the resolved run configuration before any artifact is written."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "run_manifest.txt")
    with open(path, "w") as fh:
        fh.write(f"command={command}\n")
        fh.write(f"version={__version__}\n")
        fh.write(f"build={_build_id()}\n")
        fh.write(f"seed={seed}\n")
        for key, value in sorted(config_items.items()):
            fh.write(f"{key}={value}\n")
        for name in outputs:
            fh.write(f"output.{name}\n")
    return path


def _parse_stages(text):
    if not text:
        return ()
    try:
        stages = tuple(sorted({int(s) for s in text.split(",") if s.strip()}))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad stage list {text!r}; expected e.g. '1,2,3'")
    if any(s not in (1, 2, 3) for s in stages):
        raise argparse.ArgumentTypeError("stages must be in {1,2,3}")
    return stages


def _load_config_file(path):
    kv = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or "=" not in line:
                continue
            key, value = line.split("=", 1)
            kv[key.strip()] = value.strip()
    return kv


def _train_config(args):
    """Resolve TrainConfig with flag > config file > default precedence."""
    values = {}
    if args.config:
        kv = _load_config_file(args.config)
        casts = {f.name: f for f in fields(TrainConfig)}
        for key, raw in kv.items():
            name = key[len("train."):] if key.startswith("train.") else key
            if name not in casts:
                continue
            default = getattr(TrainConfig, name)
            if isinstance(default, bool):
                values[name] = raw.lower() in ("1", "true", "yes")
            elif isinstance(default, tuple):
                values[name] = tuple(float(v) for v in raw.split(","))
            elif isinstance(default, float):
                values[name] = float(raw)
            elif isinstance(default, int):
                values[name] = int(raw)
            else:
                values[name] = raw
    for name in ("base_lr", "power", "epochs", "batch_size", "weight_decay",
                 "momentum", "noise_prob", "feature_kind"):
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if args.seed is not None:
        values["rng_seed"] = args.seed
    if getattr(args, "no_augment", False):
        values["augment"] = False
    return TrainConfig(**values)


def _data_dir(args):
    path = args.data_dir or os.environ.get(DATA_DIR_ENV)
    if not path:
        raise SystemExit(f"error: no data directory given (flag --data-dir or ${DATA_DIR_ENV})")
    return path


# -- subcommands -------------------------------------------------------------


def cmd_prepare_data(args):
    records = D.scan(_data_dir(args), args.val_pct, args.test_pct)
    D.write_manifest(records, args.manifest_out)
    counts = D.split_counts(records)
    total = len(records)
    print(f"scanned {total} files")
    for split in ("train", "val", "test"):
        print(f"  {split}: {counts[split]} ({100.0 * counts[split] / total:.1f}%)")
    return 0


def cmd_train(args):
    cfg = _train_config(args)
    model_config = ModelConfig(variant=args.variant, gcn_stages=args.gcn_stages)
    records = D.scan(_data_dir(args))
    noise = D.load_noise_clips(_data_dir(args))
    manifest_items = {f"train.{f.name}": getattr(cfg, f.name) for f in fields(cfg)}
    manifest_items.update({"variant": model_config.variant,
                           "gcn_stages": ",".join(map(str, model_config.gcn_stages)),
                           "data_dir": _data_dir(args)})
    write_run_manifest(args.out_dir, "train", cfg.rng_seed, manifest_items,
                       ["metrics.csv", "epochNNNN.ckpt", "best.ckpt"])
    model = build(model_config, rng_seed=cfg.rng_seed)
    train_records = [r for r in records if r.split == "train"]
    val_records = [r for r in records if r.split == "val"]
    result = train(model, train_records, cfg, out_dir=args.out_dir,
                   val_records=val_records or None, noise_clips=noise,
                   model_config=model_config, log_fn=print if args.verbose else None)
    if result["best_checkpoint"]:
        print(f"best checkpoint: {result['best_checkpoint']} (val_acc {result['best_val']:.4f})")
    print(f"metrics: {result['metrics_path']}")
    return 0


def cmd_eval(args):
    model, state = load_checkpoint(args.checkpoint)
    cfg = TrainConfig(feature_kind=state["train_kv"].get("feature_kind", "mfcc"),
                      rng_seed=args.seed or 0)
    records = [r for r in D.scan(_data_dir(args)) if r.split == args.split]
    if not records:
        raise SystemExit(f"error: no records in split {args.split!r}")
    noise = D.load_noise_clips(_data_dir(args))
    silence_count = int(round(0.1 * len(records))) if noise else 0
    write_run_manifest(args.roc_out, "eval", cfg.rng_seed,
                       {"checkpoint": args.checkpoint, "split": args.split,
                        "n_records": len(records), "silence_count": silence_count},
                       ["accuracy.txt", "roc_<keyword>.csv", "roc_overall.csv"])
    feats, labels = load_split_features(records, cfg, noise_clips=noise,
                                        silence_count=silence_count, silence_seed=cfg.rng_seed)
    acc, curves, overall = evaluate_model(model, feats, labels)
    print(f"accuracy {args.split}: {acc:.4f} over {len(labels)} samples")
    with open(os.path.join(args.roc_out, "accuracy.txt"), "w") as fh:
        fh.write(f"split={args.split} accuracy={acc:.6f} n={len(labels)}\n")
    for curve in curves + ([overall] if overall else []):
        name = D.LABEL_NAMES[int(curve.keyword)] if curve.keyword.isdigit() else curve.keyword
        path = os.path.join(args.roc_out, f"roc_{name}.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "far", "frr"])
            writer.writerows(curve.rows())
    if overall:
        print(f"overall ROC AUC: {overall.auc:.5f}")
    return 0


def cmd_footprint(args):
    model = build(variant=args.variant, gcn_stages=args.gcn_stages)
    params = count_params(model)
    macs_wo = count_macs(model, convention="weights-only")
    macs_full = count_macs(model, convention="full")
    print(macs_wo.to_table())
    print(f"\nparams: {params.total_params} total "
          f"({params.total_weight_params} conv/linear/gcn weights)")
    print(f"macs:   {macs_wo.total_macs} (weights-only convention), "
          f"{macs_full.total_macs} (full convention)")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(macs_wo.to_csv())
        print(f"wrote {args.out}")
    return 0


def cmd_features(args):
    clip = load_wav(args.wav)
    feats = compute_features(clip, args.kind)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in feats.values:
            writer.writerow([f"{v:.6f}" for v in row])
    print(f"wrote {feats.t}x{feats.f} {feats.kind} features to {args.out}")
    return 0


def cmd_feature_map(args):
    model, state = load_checkpoint(args.checkpoint)
    kind = state["train_kv"].get("feature_kind", "mfcc")
    feats = compute_features(load_wav(args.wav), kind)
    grid = export_stage_feature_map(model, feats.values, args.stage, args.when)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in grid:
            writer.writerow([f"{v:.6f}" for v in row])
    print(f"wrote {grid.shape[0]}x{grid.shape[1]} stage-{args.stage} {args.when}-gcn map to {args.out}")
    return 0


# -- parser -------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="cenet-kws",
                                     description="Small-footprint keyword spotting toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="scan dataset and write the split manifest")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--manifest-out", required=True)
    p.add_argument("--val-pct", type=float, default=10.0)
    p.add_argument("--test-pct", type=float, default=10.0)
    p.set_defaults(fn=cmd_prepare_data)

    p = sub.add_parser("train", help="train a model variant")
    p.add_argument("--data-dir", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--variant", choices=VARIANTS, default="cenet6")
    p.add_argument("--gcn-stages", type=_parse_stages, default=(), help="comma list, e.g. 1,2,3")
    p.add_argument("--config", default=None, help="key=value TrainConfig file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=None)
    p.add_argument("--base-lr", type=float, dest="base_lr", default=None)
    p.add_argument("--power", type=float, default=None)
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--weight-decay", type=float, dest="weight_decay", default=None)
    p.add_argument("--noise-prob", type=float, dest="noise_prob", default=None)
    p.add_argument("--feature-kind", choices=("mfcc", "fbank"), dest="feature_kind", default=None)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--roc-out", required=True, help="output directory for ROC CSVs")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("footprint", help="parameter and multiply accounting")
    p.add_argument("--variant", choices=VARIANTS, default="cenet6")
    p.add_argument("--gcn-stages", type=_parse_stages, default=())
    p.add_argument("--out", default=None, help="write the per-layer CSV here")
    p.set_defaults(fn=cmd_footprint)

    p = sub.add_parser("features", help="extract features from one WAV to CSV")
    p.add_argument("--wav", required=True)
    p.add_argument("--kind", choices=("mfcc", "fbank"), default="mfcc")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("feature-map", help="stage activation grid for one WAV, as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--stage", type=int, choices=(1, 2, 3), default=1)
    p.add_argument("--when", choices=("pre", "post"), default="pre")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_feature_map)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except SystemExit:
        raise
    except (ValueError, FileNotFoundError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
