"""Command-line interface: ingest, segment, train, compare.

Exit codes: 0 success, 1 partial failure (some entries failed), 2
usage/config error. No output artifact contains timestamps or hostnames,
so reruns with identical inputs produce identical bytes.
"""

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, fields

from . import classical, metrics, phantom, unet as unet_mod
from .errors import DecodeError, SizeMismatchError, UnsupportedFormatError
from .imgio import (DatasetEntry, SplitSpec, load_image, read_mask,
                    resize_bilinear, resize_nearest, scan_dataset,
                    split_dataset, write_mask, write_overlay_panel)
from .tensorcore import load_model, save_model

RAW_SUFFIXES = {".raw", ".img"}


@dataclass
class RunConfig:
    dataset_root: str = ""
    output_dir: str = "out"
    method: str = "cca"
    working_size: int = 128
    seed: int = 42
    invert_input: bool = True
    threshold: float = 0.5
    sure_fg_factor: float = 0.4
    synthetic: int = 0
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 4
    loss_mix: float = 0.5
    folds: int = 10
    depth: int = 3
    base_channels: int = 8

    def validate(self):
        if self.method not in ("cca", "watershed", "unet"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.working_size < 1:
            raise ValueError("working_size must be positive")
        if self.method == "unet" and self.working_size % (1 << self.depth):
            raise ValueError(f"working_size {self.working_size} not divisible "
                             f"by 2^depth = {1 << self.depth}")

    def dump(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"


def _parse_config_file(path) -> dict:
    """Flat `key = value` lines; '#' starts a comment; blank lines ignored."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _coerce(name: str, text: str, target_type):
    if target_type is bool:
        low = text.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {name}: expected boolean, got {text!r}")
    return target_type(text)


def build_config(args) -> RunConfig:
    """Defaults, overridden by --config file values, overridden by flags."""
    cfg = RunConfig()
    types = {f.name: f.type for f in fields(cfg)}
    concrete = {"str": str, "int": int, "float": float, "bool": bool}
    if getattr(args, "config", None):
        for key, text in _parse_config_file(args.config).items():
            if key not in types:
                raise ValueError(f"unknown config key {key!r}")
            t = types[key]
            t = concrete.get(t, t) if isinstance(t, str) else t
            setattr(cfg, key, _coerce(key, text, t))
    overrides = {
        "dataset_root": getattr(args, "dataset_root", None),
        "output_dir": getattr(args, "out", None),
        "method": getattr(args, "method", None),
        "working_size": getattr(args, "size", None),
        "seed": getattr(args, "seed", None),
        "invert_input": getattr(args, "invert", None),
        "threshold": getattr(args, "threshold", None),
        "sure_fg_factor": getattr(args, "sure_fg_factor", None),
        "synthetic": getattr(args, "synthetic", None),
        "learning_rate": getattr(args, "learning_rate", None),
        "epochs": getattr(args, "epochs", None),
        "batch_size": getattr(args, "batch_size", None),
        "loss_mix": getattr(args, "loss_mix", None),
        "folds": getattr(args, "folds", None),
        "depth": getattr(args, "depth", None),
        "base_channels": getattr(args, "base_channels", None),
    }
    for key, value in overrides.items():
        if value is not None:
            if isinstance(value, str) and key == "invert_input":
                value = _coerce(key, value, bool)
            setattr(cfg, key, value)
    cfg.validate()
    return cfg


def _warn(msg: str):
    print(f"warning: {msg}", file=sys.stderr)


def _error(msg: str):
    print(f"error: {msg}", file=sys.stderr)


def _raw_side(path) -> int:
    """Infer the square side of a headerless 16-bit raw from its size."""
    nbytes = os.path.getsize(path)
    side = math.isqrt(max(nbytes // 2, 0))
    if 2 * side * side != nbytes:
        raise UnsupportedFormatError(
            f"{path}: {nbytes} bytes is not a square 16-bit raster")
    return side


def _image_dims(path) -> tuple:
    ext = os.path.splitext(path)[1].lower()
    if ext in RAW_SUFFIXES:
        side = _raw_side(path)
        return side, side
    from PIL import Image

    with Image.open(path) as im:
        return im.width, im.height


def write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "image_path", "mask_path", "width", "height"])
        for row in rows:
            writer.writerow(row)


def read_manifest(path) -> list:
    """Rows as dicts; relative paths resolve against the manifest's folder."""
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rec = dict(rec)
            for key in ("image_path", "mask_path"):
                if rec.get(key) and not os.path.isabs(rec[key]):
                    rec[key] = os.path.join(base, rec[key])
            rec["width"] = int(rec["width"])
            rec["height"] = int(rec["height"])
            rows.append(rec)
    return rows


def _load_entry(row, size: int, invert: bool, need_mask: bool) -> DatasetEntry:
    img = load_image(row["image_path"], width=row["width"],
                     height=row["height"], invert=invert)
    if img.shape != (size, size):
        img = resize_bilinear(img, size, size)
    mask = None
    if row.get("mask_path"):
        mask = read_mask(row["mask_path"])
        if mask.shape != (size, size):
            mask = resize_nearest(mask, size, size)
    if need_mask and mask is None:
        raise ValueError(f"entry {row['id']!r} has no mask")
    return DatasetEntry(id=row["id"], image=img, mask=mask)


def cmd_ingest(args) -> int:
    cfg = build_config(args)
    if args.dump_config:
        print(cfg.dump(), end="")
        return 0
    root = cfg.dataset_root or os.path.join(cfg.output_dir, "dataset")
    os.makedirs(cfg.output_dir, exist_ok=True)
    if cfg.synthetic > 0:
        phantom.write_dataset(root, cfg.synthetic, size=cfg.working_size,
                              seed=cfg.seed)
        print(f"generated {cfg.synthetic} phantoms under {root}")

    manifest_path = os.path.join(cfg.output_dir, "manifest.csv")
    try:
        pairs = scan_dataset(root)
    except FileNotFoundError as exc:
        _error(str(exc))
        write_manifest(manifest_path, [])
        return 2
    if not pairs:
        _error(f"no images found under {root}")
        write_manifest(manifest_path, [])
        return 2

    rows = []
    failures = 0
    unmatched = 0
    for entry_id, image_path, mask_path in pairs:
        try:
            w, h = _image_dims(image_path)
        except (OSError, SizeMismatchError, UnsupportedFormatError) as exc:
            _warn(f"skipping {entry_id}: {exc}")
            failures += 1
            continue
        if mask_path is None:
            _warn(f"no mask for image {entry_id}")
            unmatched += 1
        base = os.path.abspath(cfg.output_dir)
        rows.append([entry_id, os.path.relpath(os.path.abspath(image_path), base),
                     os.path.relpath(os.path.abspath(mask_path), base)
                     if mask_path else "", w, h])
    write_manifest(manifest_path, rows)
    print(f"wrote {manifest_path}: {len(rows)} entries, "
          f"{unmatched} without masks")
    return 1 if failures else 0


def _segment_one(method: str, entry: DatasetEntry, model, cfg: RunConfig):
    if method == "cca":
        return classical.cca_lung_pipeline(entry.image)
    if method == "watershed":
        return classical.watershed_lung_pipeline(
            entry.image, sure_fg_factor=cfg.sure_fg_factor)
    return unet_mod.predict_mask(model, entry.image, threshold=cfg.threshold)


def cmd_segment(args) -> int:
    cfg = build_config(args)
    if args.dump_config:
        print(cfg.dump(), end="")
        return 0
    if cfg.method == "unet" and not args.model:
        _error("method unet requires --model (no checkpoint given)")
        return 2
    try:
        rows = read_manifest(args.manifest)
    except OSError as exc:
        _error(f"cannot read manifest: {exc}")
        return 2
    model = None
    if cfg.method == "unet":
        try:
            model = load_model(args.model)
        except (OSError, DecodeError) as exc:
            _error(f"cannot load model: {exc}")
            return 2
    os.makedirs(cfg.output_dir, exist_ok=True)

    failures = 0
    for row in rows:
        try:
            native = load_image(row["image_path"], width=row["width"],
                                height=row["height"], invert=cfg.invert_input)
            working = native
            if cfg.method != "unet" and native.shape != (cfg.working_size,) * 2:
                working = resize_bilinear(native, cfg.working_size,
                                          cfg.working_size)
            entry = DatasetEntry(id=row["id"], image=working)
            pred = _segment_one(cfg.method, entry, model, cfg)
            if pred.shape != native.shape:
                pred = resize_nearest(pred, native.shape[1], native.shape[0])
            write_mask(pred, os.path.join(cfg.output_dir,
                                          f"{row['id']}_mask.png"))
            if row.get("mask_path"):
                truth = read_mask(row["mask_path"])
                write_overlay_panel(native, pred, truth,
                                    os.path.join(cfg.output_dir,
                                                 f"{row['id']}_overlay.png"))
        except Exception as exc:  # per-entry isolation, run continues
            _error(f"entry {row['id']}: {exc}")
            failures += 1
    done = len(rows) - failures
    print(f"segmented {done}/{len(rows)} entries with {cfg.method}")
    return 1 if failures else 0


def _records_to_csv(path, records):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "epoch", "train_loss", "val_loss", "val_dice"])
        for r in records:
            writer.writerow([r.fold, r.epoch, f"{r.train_loss:.12g}",
                             f"{r.val_loss:.12g}", f"{r.val_dice:.12g}"])


def cmd_train(args) -> int:
    cfg = build_config(args)
    if args.dump_config:
        print(cfg.dump(), end="")
        return 0
    if cfg.working_size % (1 << cfg.depth):
        _error(f"working_size {cfg.working_size} not divisible by 2^depth")
        return 2
    try:
        rows = read_manifest(args.manifest)
    except OSError as exc:
        _error(f"cannot read manifest: {exc}")
        return 2
    missing = [row["id"] for row in rows if not row.get("mask_path")]
    if missing:
        _error(f"entry {missing[0]!r} has no mask (training needs masks for "
               f"all {len(missing)} unpaired entries)")
        return 2
    try:
        entries = [_load_entry(row, cfg.working_size, cfg.invert_input,
                               need_mask=True) for row in rows]
        ucfg = unet_mod.UNetConfig(depth=cfg.depth,
                                   base_channels=cfg.base_channels,
                                   input_size=cfg.working_size)
        tcfg = unet_mod.TrainConfig(learning_rate=cfg.learning_rate,
                                    epochs=cfg.epochs,
                                    batch_size=cfg.batch_size,
                                    loss_mix=cfg.loss_mix, folds=cfg.folds,
                                    seed=cfg.seed)
        model = unet_mod.build_unet(ucfg, seed=cfg.seed)
        records = unet_mod.train(model, entries, tcfg)
    except ValueError as exc:
        _error(str(exc))
        return 2
    os.makedirs(cfg.output_dir, exist_ok=True)
    save_model(model, os.path.join(cfg.output_dir, "model.ckpt"))
    _records_to_csv(os.path.join(cfg.output_dir, "train_records.csv"), records)
    split = split_dataset(len(entries), seed=cfg.seed)
    with open(os.path.join(cfg.output_dir, "split.json"), "w") as fh:
        json.dump(split.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"trained on {len(split.train) + len(split.val)} pooled entries "
          f"({cfg.folds} folds x {cfg.epochs} epochs); "
          f"{len(split.test)} test entries held out")
    return 0


def _cv_mean_dice(records_path) -> float:
    by_fold = {}
    with open(records_path, newline="") as fh:
        for rec in csv.DictReader(fh):
            fold = int(rec["fold"])
            epoch = int(rec["epoch"])
            prev = by_fold.get(fold)
            if prev is None or epoch > prev[0]:
                by_fold[fold] = (epoch, float(rec["val_dice"]))
    if not by_fold:
        raise ValueError(f"{records_path}: no records")
    return sum(v for _, v in by_fold.values()) / len(by_fold)


def cmd_compare(args) -> int:
    cfg = build_config(args)
    if args.dump_config:
        print(cfg.dump(), end="")
        return 0
    if not args.model:
        _error("compare requires --model")
        return 2
    try:
        rows = read_manifest(args.manifest)
        model = load_model(args.model)
    except (OSError, DecodeError) as exc:
        _error(str(exc))
        return 2

    subset_note = "all labeled entries"
    if args.split:
        try:
            with open(args.split) as fh:
                split = SplitSpec.from_dict(json.load(fh))
        except (OSError, ValueError, KeyError) as exc:
            _error(f"cannot read split: {exc}")
            return 2
        if max(split.test, default=-1) >= len(rows):
            _error("split.json indexes beyond the manifest")
            return 2
        rows = [rows[i] for i in split.test]
        subset_note = "test split"
    rows = [row for row in rows if row.get("mask_path")]
    if not rows:
        _error("no labeled entries to score")
        return 2

    failures = 0
    methods = ("cca", "watershed", "unet")
    scores = {m: [] for m in methods}
    for row in rows:
        try:
            entry = _load_entry(row, cfg.working_size, cfg.invert_input,
                                need_mask=True)
            for method in methods:
                pred = _segment_one(method, entry, model, cfg)
                scores[method].append(
                    metrics.score_pair(entry.id, pred, entry.mask))
        except Exception as exc:
            _error(f"entry {row['id']}: {exc}")
            failures += 1
    if any(not s for s in scores.values()):
        _error("no entries were scored")
        return 2

    reports = [metrics.aggregate(m, scores[m]) for m in methods]
    table = metrics.render_markdown(reports)
    lines = [
        "# Comparative Result Analysis",
        "",
        f"Macro-averaged over {len(scores['cca'])} images "
        f"({subset_note}, working size {cfg.working_size}).",
        "",
        table.rstrip("\n"),
    ]
    if args.records:
        try:
            cv_dice = _cv_mean_dice(args.records)
        except (OSError, ValueError) as exc:
            _error(f"cannot read records: {exc}")
            return 2
        lines += ["", f"U-Net CV mean validation DICE (final epoch, "
                      f"macro over folds): {100.0 * cv_dice:.1f}"]
    lines.append("")
    os.makedirs(cfg.output_dir, exist_ok=True)
    report_md = os.path.join(cfg.output_dir, "comparison.md")
    with open(report_md, "w") as fh:
        fh.write("\n".join(lines))
    metrics.write_scores_csv(os.path.join(cfg.output_dir, "report.csv"),
                             reports)
    metrics.write_summary_csv(os.path.join(cfg.output_dir, "summary.csv"),
                              reports)
    print(table, end="")
    return 1 if failures else 0


def _add_common(p):
    p.add_argument("--config", help="flat key = value config file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--size", type=int, help="working image size in pixels")
    p.add_argument("--invert", choices=["true", "false"],
                   help="invert input polarity on load (default true)")
    p.add_argument("--dump-config", action="store_true",
                   help="print the effective configuration and exit")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lungseg",
        description="Lung segmentation on chest radiographs: Otsu+CCA, "
                    "marker watershed, and a from-scratch UNet.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="scan a dataset folder into a manifest")
    p.add_argument("--dataset-root", help="folder with images/ and masks/")
    p.add_argument("--synthetic", type=int,
                   help="generate N phantom images into the dataset root")
    _add_common(p)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("segment", help="write masks (and overlays) per entry")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=["cca", "watershed", "unet"])
    p.add_argument("--model", help="checkpoint path (unet only)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--sure-fg-factor", type=float, dest="sure_fg_factor")
    _add_common(p)
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("train", help="train the UNet with k-fold CV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--loss-mix", type=float, dest="loss_mix")
    p.add_argument("--depth", type=int)
    p.add_argument("--base-channels", type=int, dest="base_channels")
    _add_common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("compare", help="score all three methods side by side")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", help="trained UNet checkpoint")
    p.add_argument("--split", help="split.json restricting scoring to the "
                                   "test subset")
    p.add_argument("--records", help="train_records.csv for the CV summary")
    p.add_argument("--threshold", type=float)
    p.add_argument("--sure-fg-factor", type=float, dest="sure_fg_factor")
    _add_common(p)
    p.set_defaults(fn=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ValueError as exc:
        _error(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())
