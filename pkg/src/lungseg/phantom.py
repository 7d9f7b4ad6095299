"""Synthetic chest phantoms with exact ground-truth lung masks.

Each phantom is a bright field with two dark lung ellipses. On top of the
clean anatomy the generator adds structured nuisance:

* bright lateral wedges cutting into the lungs (rib-like occlusions that
  thresholding methods lose but that remain lung in the truth mask),
* small bright holes inside the lungs (vessel cross-sections),
* dark distractor shapes below the lungs, each connected to a lung by a
  thin dark bridge, so that pure connected-component selection drags them
  into the lung component while marker-based methods can still separate
  them,
* an optional dark band along one image border (exercises border
  suppression; it never touches the lungs).

Truth masks contain exactly the two ellipses. All geometry and noise come
from one SplitMix64 stream per phantom, so the corpus is reproducible
across platforms.
"""

import math

import numpy as np

from .imgio import DatasetEntry, write_jsrt_raw, write_mask
from .rng import SplitMix64, derive_seed


def _ellipse(h, w, cy, cx, ay, ax):
    yy, xx = np.ogrid[:h, :w]
    return ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 <= 1.0


def _disk(h, w, cy, cx, r):
    return _ellipse(h, w, cy, cx, r, r)


def _thick_segment(h, w, p0, p1, half_width):
    """Pixels within L2 distance half_width of segment p0-p1 (row, col)."""
    yy, xx = np.mgrid[:h, :w]
    dy = p1[0] - p0[0]
    dx = p1[1] - p0[1]
    norm2 = dy * dy + dx * dx
    if norm2 == 0:
        t = np.zeros((h, w))
    else:
        t = np.clip(((yy - p0[0]) * dy + (xx - p0[1]) * dx) / norm2, 0.0, 1.0)
    ry = yy - (p0[0] + t * dy)
    rx = xx - (p0[1] + t * dx)
    return ry * ry + rx * rx <= half_width * half_width


def _add_wedge(img, lung, side, cy, cx, ay, ax, bright, rng):
    """Cut a bright rectangle from a lung's lateral edge into its interior."""
    h, w = img.shape
    height = 3 + int(rng.randint(0, 3))
    depth = (2.0 * ax) * rng.uniform_range(0.22, 0.38)
    row0 = int(round(cy + ay * rng.uniform_range(-0.25, 0.25) - height / 2.0))
    row0 = max(0, min(h - height, row0))
    if side < 0:
        x_lo, x_hi = cx - ax - 1.0, cx - ax + depth
    else:
        x_lo, x_hi = cx + ax - depth, cx + ax + 1.0
    cols = np.arange(w)
    band = np.zeros((h, w), dtype=bool)
    band[row0:row0 + height, :] = (cols >= x_lo) & (cols <= x_hi)
    wedge = band & lung
    img[wedge] = bright
    return wedge


def make_phantom(size: int, rng: SplitMix64):
    """Generate one phantom; returns (image float32 in [0,1], truth bool)."""
    if size < 64:
        raise ValueError(f"phantom size must be >= 64, got {size}")
    h = w = size
    field = rng.uniform_range(0.80, 0.92)
    dark = rng.uniform_range(0.15, 0.28)
    img = np.full((h, w), field, dtype=np.float64)

    lungs = []
    for side, cx_lo, cx_hi in ((-1, 0.26, 0.31), (1, 0.69, 0.74)):
        cx = w * rng.uniform_range(cx_lo, cx_hi)
        cy = h * rng.uniform_range(0.42, 0.50)
        ax = w * rng.uniform_range(0.13, 0.16)
        ay = h * rng.uniform_range(0.20, 0.26)
        lungs.append((side, cy, cx, ay, ax))
    truth = np.zeros((h, w), dtype=bool)
    for side, cy, cx, ay, ax in lungs:
        truth |= _ellipse(h, w, cy, cx, ay, ax)
    img[truth] = dark + rng.uniform_range(-0.02, 0.02)

    # rib-like bright wedges: lung in the truth, background to a threshold
    for side, cy, cx, ay, ax in lungs:
        lung = _ellipse(h, w, cy, cx, ay, ax)
        _add_wedge(img, lung, side, cy, cx, ay, ax, field, rng)

    # vessel holes hug the lateral boundary; a hole near the lung centre
    # would carve the distance transform into a thin ring and split the
    # watershed marker
    for side, cy, cx, ay, ax in lungs:
        for _ in range(2):
            r = rng.uniform_range(1.2, 2.0)
            hy = cy + ay * rng.uniform_range(-0.55, 0.55)
            local = ax * math.sqrt(max(0.0, 1.0 - ((hy - cy) / ay) ** 2))
            if local < r + 5.0:
                continue
            depth = rng.uniform_range(r + 1.5, r + 3.0)
            img[_disk(h, w, hy, cx + side * (local - depth), r)] = field

    # dark distractors bridged to the lungs; their own cores are wide
    # enough to earn a watershed marker, so only plain component-keeping
    # absorbs them
    swap = rng.uniform() < 0.5
    bubble_lung = lungs[1] if swap else lungs[0]
    blob_lung = lungs[0] if swap else lungs[1]
    margin = 4.0

    _, cy, cx, ay, ax = bubble_lung
    bax = w * rng.uniform_range(0.12, 0.16)
    bay = h * rng.uniform_range(0.0775, 0.082)
    bcy = min(cy + ay + bay + rng.uniform_range(3.0, 6.0), h - 1 - margin - bay)
    bcx = min(max(cx + w * rng.uniform_range(-0.04, 0.04), margin + bax),
              w - 1 - margin - bax)
    bubble = _ellipse(h, w, bcy, bcx, bay, bax)
    img[bubble] = dark + rng.uniform_range(-0.02, 0.02)
    img[_thick_segment(h, w, (cy, cx), (bcy, bcx), 1.5)] = dark

    _, cy, cx, ay, ax = blob_lung
    br = w * rng.uniform_range(0.078, 0.086)
    pcy = min(cy + ay + br + rng.uniform_range(3.0, 6.0), h - 1 - margin - br)
    pcx = min(max(cx + w * rng.uniform_range(-0.04, 0.04), margin + br),
              w - 1 - margin - br)
    img[_disk(h, w, pcy, pcx, br)] = dark + rng.uniform_range(-0.02, 0.02)
    img[_thick_segment(h, w, (cy, cx), (pcy, pcx), 1.5)] = dark

    # occasional dark border band, separated from the anatomy
    if rng.uniform() < 0.25:
        width = int(round(size * rng.uniform_range(0.04, 0.07)))
        shade = rng.uniform_range(0.12, 0.25)
        edge = int(rng.randint(0, 4))
        if edge == 0:
            img[:width, :] = shade
        elif edge == 1:
            img[-width:, :] = shade
        elif edge == 2:
            img[:, :width] = shade
        else:
            img[:, -width:] = shade

    img += rng.normal(h * w, sigma=0.05).reshape(h, w)
    np.clip(img, 0.02, 0.98, out=img)
    return img.astype(np.float32), truth


def make_dataset(n: int, size: int = 128, seed: int = 0):
    """Generate ``n`` phantom entries; entry i depends only on (seed, i)."""
    entries = []
    for i in range(n):
        rng = SplitMix64(derive_seed(seed, 0xFA7, i))
        img, mask = make_phantom(size, rng)
        entries.append(DatasetEntry(id=f"phantom_{i:03d}", image=img, mask=mask))
    return entries


def write_dataset(root, n: int, size: int = 128, seed: int = 0):
    """Write phantoms under root/images and root/masks in dataset layout.

    Images are stored as raw files with inverted polarity (matching the
    source radiographs, where lungs are bright), so the standard
    invert-on-load path reproduces the in-memory phantom. Returns the
    generated entries.
    """
    import os

    images_dir = os.path.join(root, "images")
    masks_dir = os.path.join(root, "masks")
    os.makedirs(images_dir, exist_ok=True)
    os.makedirs(masks_dir, exist_ok=True)
    entries = make_dataset(n, size=size, seed=seed)
    for e in entries:
        write_jsrt_raw(1.0 - e.image, os.path.join(images_dir, f"{e.id}.raw"))
        write_mask(e.mask, os.path.join(masks_dir, f"{e.id}.png"))
    return entries
