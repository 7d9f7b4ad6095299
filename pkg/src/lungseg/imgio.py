"""Image and dataset I/O.

Conventions used across the package:

* grayscale image: 2-D float32 array, values in [0, 1], row-major
* binary mask:     2-D bool array of the same layout
* JSRT raw file:   headerless big-endian 16-bit words, 12-bit payload,
                   default 2048x2048 (8,388,608 bytes)

Mask files are 8-bit grayscale PNG or binary PGM with 255 = lung. Masks are
paired with images by filename stem in parallel ``images/`` and ``masks/``
directories.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, SizeMismatchError, UnsupportedFormatError
from .rng import SplitMix64, derive_seed

JSRT_MAX = 4095  # 12-bit payload
RAW_SUFFIXES = {".raw", ".img"}
RASTER_SUFFIXES = {".png", ".pgm", ".ppm"}


@dataclass
class DatasetEntry:
    id: str
    image: np.ndarray
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mask is not None and self.mask.shape != self.image.shape:
            raise ValueError(
                f"entry {self.id}: mask shape {self.mask.shape} != "
                f"image shape {self.image.shape}")


@dataclass
class SplitSpec:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    test: list = field(default_factory=list)
    seed: int = 0

    def validate(self, n: int):
        groups = [set(self.train), set(self.val), set(self.test)]
        if sum(len(g) for g in groups) != len(self.train) + len(self.val) + len(self.test):
            raise ValueError("split contains duplicate indices")
        union = groups[0] | groups[1] | groups[2]
        if groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2]:
            raise ValueError("split groups overlap")
        if union != set(range(n)):
            raise ValueError(f"split does not cover 0..{n - 1}")

    def to_dict(self) -> dict:
        return {"train": list(self.train), "val": list(self.val),
                "test": list(self.test), "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(list(d["train"]), list(d["val"]), list(d["test"]), int(d["seed"]))


def read_jsrt_raw(path, width: int = 2048, height: int = 2048,
                  invert: bool = False) -> np.ndarray:
    """Read a headerless big-endian 16-bit raw radiograph.

    Words are clamped to the 12-bit range before normalizing to [0, 1];
    out-of-range words are treated as correctable corruption. ``invert``
    flips polarity (1 - v) for distributions that store dark anatomy as
    high values.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such raw file: {path}")
    blob = path.read_bytes()
    expected = width * height * 2
    if len(blob) != expected:
        raise SizeMismatchError(expected, len(blob))
    words = np.frombuffer(blob, dtype=">u2").astype(np.int32)
    words = np.minimum(words, JSRT_MAX)
    img = (words / float(JSRT_MAX)).astype(np.float32).reshape(height, width)
    if invert:
        img = np.float32(1.0) - img
    return img


def write_jsrt_raw(img: np.ndarray, path) -> None:
    """Serialize a [0,1] grayscale image back to 12-bit big-endian words."""
    words = np.clip(np.rint(img.astype(np.float64) * JSRT_MAX), 0, JSRT_MAX)
    Path(path).write_bytes(words.astype(">u2").tobytes())


def read_mask(path) -> np.ndarray:
    """Read a grayscale PNG / binary PGM mask; pixel > 127 means lung."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such mask file: {path}")
    try:
        im = Image.open(path)
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a PNG or PGM mask") from exc
    if im.format not in ("PNG", "PPM"):
        raise UnsupportedFormatError(f"{path}: unsupported format {im.format}")
    if im.mode not in ("L", "1"):
        raise UnsupportedFormatError(f"{path}: mask must be grayscale, got mode {im.mode}")
    try:
        if im.mode == "1":
            im = im.convert("L")
        arr = np.asarray(im)
    except OSError as exc:
        raise DecodeError(f"{path}: corrupt mask data") from exc
    return arr > 127


def write_mask(mask: np.ndarray, path) -> None:
    """Write a bool mask as 8-bit PNG, 255 = lung."""
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path)


def load_image(path, width: Optional[int] = None, height: Optional[int] = None,
               invert: bool = False) -> np.ndarray:
    """Load an image by extension: JSRT raw (.raw/.img) or grayscale raster."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in RAW_SUFFIXES:
        return read_jsrt_raw(path, width or 2048, height or 2048, invert=invert)
    if suffix in RASTER_SUFFIXES:
        im = Image.open(path)
        if im.mode not in ("L", "1"):
            im = im.convert("L")
        img = np.asarray(im, dtype=np.float32) / np.float32(255.0)
        return np.float32(1.0) - img if invert else img
    raise UnsupportedFormatError(f"{path}: unknown image extension {suffix}")


def _sample_coords(n_src: int, n_out: int) -> np.ndarray:
    # align-corners=false: output pixel centers mapped into source pixel space
    scale = n_src / n_out
    return (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    h, w = img.shape
    if (out_h, out_w) == (h, w):
        return img.copy()
    ys = _sample_coords(h, out_h)
    xs = _sample_coords(w, out_w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    src = img.astype(np.float64)
    ia = src[np.ix_(y0c, x0c)]
    ib = src[np.ix_(y0c, x1c)]
    ic = src[np.ix_(y1c, x0c)]
    id_ = src[np.ix_(y1c, x1c)]
    top = ia + wx * (ib - ia)
    bot = ic + wx * (id_ - ic)
    out = top + wy * (bot - top)
    # convexity guard: bilinear output never leaves the source value range
    out = np.clip(out, src.min(), src.max())
    return out.astype(img.dtype)


def resize_nearest(mask: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Nearest-neighbor resize; equidistant ties go to the smaller source index."""
    if out_w < 1 or out_h < 1:
        raise ValueError("output dimensions must be >= 1")
    h, w = mask.shape
    ys = np.clip(np.ceil(_sample_coords(h, out_h) - 0.5).astype(np.int64), 0, h - 1)
    xs = np.clip(np.ceil(_sample_coords(w, out_w) - 0.5).astype(np.int64), 0, w - 1)
    return mask[np.ix_(ys, xs)]


def split_dataset(n: int, ratios=(8, 1, 1), seed: int = 0) -> SplitSpec:
    """8:1:1 split by seeded shuffle; floor sizes, remainder goes to train."""
    if n < 3:
        raise ValueError(f"need at least 3 entries to split, got {n}")
    total = sum(ratios)
    n_train = n * ratios[0] // total
    n_val = n * ratios[1] // total
    n_test = n * ratios[2] // total
    n_train += n - (n_train + n_val + n_test)
    perm = SplitMix64(derive_seed(seed, 0x5EED)).permutation(n)
    spec = SplitSpec(
        train=sorted(int(i) for i in perm[:n_train]),
        val=sorted(int(i) for i in perm[n_train:n_train + n_val]),
        test=sorted(int(i) for i in perm[n_train + n_val:]),
        seed=seed,
    )
    spec.validate(n)
    return spec


def scan_dataset(root) -> list:
    """Pair images with masks by stem under root/images and root/masks.

    Returns (id, image_path, mask_path_or_None) sorted by id.
    """
    root = Path(root)
    images_dir = root / "images"
    if not images_dir.is_dir():
        raise FileNotFoundError(f"missing images directory: {images_dir}")
    masks_dir = root / "masks"
    mask_by_stem = {}
    if masks_dir.is_dir():
        for p in sorted(masks_dir.iterdir()):
            if p.suffix.lower() in RASTER_SUFFIXES:
                mask_by_stem[p.stem] = p
    rows = []
    for p in sorted(images_dir.iterdir()):
        if p.suffix.lower() in RAW_SUFFIXES | RASTER_SUFFIXES:
            rows.append((p.stem, p, mask_by_stem.get(p.stem)))
    return rows


# Fig-4 style overlay hues (RGB)
HUE_AGREE = (0, 200, 0)
HUE_TRUTH_ONLY = (220, 40, 40)
HUE_PRED_ONLY = (60, 90, 230)
GUTTER_VALUE = 128


def write_overlay_panel(img: np.ndarray, predicted: np.ndarray,
                        truth: np.ndarray, path, gutter: int = 4) -> None:
    """Write the four-panel comparison PNG.

    Panels left to right: preprocessed image, prediction-vs-truth
    superimposition (agreement green, truth-only red, prediction-only blue),
    predicted mask, per-pixel disagreement map.
    """
    if img.shape != predicted.shape or img.shape != truth.shape:
        raise ValueError(
            f"dimension mismatch: image {img.shape}, predicted "
            f"{predicted.shape}, truth {truth.shape}")
    h, w = img.shape
    gray = np.clip(np.rint(img.astype(np.float64) * 255), 0, 255).astype(np.uint8)
    gray3 = np.repeat(gray[:, :, None], 3, axis=2)

    color = np.zeros((h, w, 3), dtype=np.uint8)
    agree = predicted & truth
    truth_only = truth & ~predicted
    pred_only = predicted & ~truth
    color[agree] = HUE_AGREE
    color[truth_only] = HUE_TRUTH_ONLY
    color[pred_only] = HUE_PRED_ONLY
    any_mask = (agree | truth_only | pred_only)[:, :, None]
    blended = np.where(any_mask, (gray3 // 2 + color // 2), gray3)

    pred3 = np.repeat((predicted.astype(np.uint8) * 255)[:, :, None], 3, axis=2)
    diff3 = np.repeat(((predicted ^ truth).astype(np.uint8) * 255)[:, :, None], 3, axis=2)

    gut = np.full((h, gutter, 3), GUTTER_VALUE, dtype=np.uint8)
    canvas = np.concatenate([gray3, gut, blended, gut, pred3, gut, diff3], axis=1)
    Image.fromarray(canvas, mode="RGB").save(path)
