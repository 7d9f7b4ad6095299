"""Classical lung segmentation: Otsu thresholding plus connected-component
analysis, and marker-based watershed.

Images are 2-D float arrays in [0, 1] with lungs darker than the
surrounding field; masks are boolean with True = lung.
"""

import heapq
from fractions import Fraction

import numpy as np

from . import backend

CROSS_NEIGHBORS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def quantize256(img: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to intensity bins 0..255 via floor(v * 255)."""
    q = np.floor(img.astype(np.float64) * 255.0)
    return np.clip(q, 0, 255).astype(np.uint8)


def histogram256(img: np.ndarray) -> np.ndarray:
    return np.bincount(quantize256(img).ravel(), minlength=256)


def otsu_threshold(img: np.ndarray) -> int:
    """Otsu's threshold over a 256-bin histogram of the image.

    Returns the bin t maximizing the between-class variance of the split
    {bins <= t} vs {bins > t}. The argmax is evaluated in exact rational
    arithmetic so equal scores are impossible to misorder; ties take the
    smallest t. A single-intensity image returns that intensity's bin.
    """
    if img.size == 0:
        raise ValueError("otsu_threshold: empty image")
    hist = histogram256(img)
    nonzero = np.flatnonzero(hist)
    if nonzero.size == 1:
        return int(nonzero[0])

    counts = hist.tolist()
    total = sum(counts)
    total_sum = sum(i * c for i, c in enumerate(counts))

    # between-class variance = w0*w1*(mu0-mu1)^2; dropping the constant
    # 1/total^2 gives score(t) = (s0*n1 - s1*n0)^2 / (n0*n1)
    best_t = 0
    best_score = Fraction(-1)
    n0 = 0
    s0 = 0
    for t in range(256):
        n0 += counts[t]
        s0 += t * counts[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            score = Fraction(0)
        else:
            diff = s0 * n1 - (total_sum - s0) * n0
            score = Fraction(diff * diff, n0 * n1)
        if score > best_score:
            best_score = score
            best_t = t
    return best_t


def binarize(img: np.ndarray, threshold: int, lungs_dark: bool = True) -> np.ndarray:
    """Threshold the quantized image; True marks the (dark) lung side."""
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must be in 0..255, got {threshold}")
    q = quantize256(img)
    return q <= threshold if lungs_dark else q > threshold


def connected_components(mask: np.ndarray, connectivity: int = 8):
    """Label connected True regions of a boolean mask.

    Returns (labels, count) where labels is int32, 0 means background and
    components are numbered 1..count in the raster order of their first
    pixel.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    if mask.ndim != 2:
        raise ValueError("connected_components expects a 2-D mask")
    view = np.ascontiguousarray(mask, dtype=np.uint8)
    return backend.active.label_components(view, connectivity)


def distance_transform_l1(mask: np.ndarray) -> np.ndarray:
    """L1 (city-block) distance from each pixel to the nearest False pixel.

    Distances are measured inside the image only; a mask with no False
    pixels saturates at height + width everywhere.
    """
    if mask.ndim != 2:
        raise ValueError("distance_transform_l1 expects a 2-D mask")
    view = np.ascontiguousarray(mask, dtype=np.uint8)
    return backend.active.chamfer_l1(view)


def _shifted(mask: np.ndarray, dy: int, dx: int, fill: bool) -> np.ndarray:
    out = np.full_like(mask, fill)
    h, w = mask.shape
    ys = slice(max(dy, 0), h + min(dy, 0))
    xs = slice(max(dx, 0), w + min(dx, 0))
    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
    out[ys, xs] = mask[ys_src, xs_src]
    return out


def morphology(mask: np.ndarray, op: str) -> np.ndarray:
    """Binary morphology with a 3x3 cross element.

    op is "erode", "dilate" or "open". Erosion treats pixels beyond the
    border as background; dilation cannot grow past the border.
    """
    if mask.ndim != 2:
        raise ValueError("morphology expects a 2-D mask")
    if op == "erode":
        out = mask.copy()
        for dy, dx in CROSS_NEIGHBORS:
            out &= _shifted(mask, dy, dx, fill=False)
        return out
    if op == "dilate":
        out = mask.copy()
        for dy, dx in CROSS_NEIGHBORS:
            out |= _shifted(mask, dy, dx, fill=False)
        return out
    if op == "open":
        return morphology(morphology(mask, "erode"), "dilate")
    raise ValueError(f"unknown morphology op {op!r}")


def watershed(elevation: np.ndarray, markers: np.ndarray) -> np.ndarray:
    """Priority-flood watershed from integer markers over an elevation map.

    Marker pixels (values > 0) keep their labels and seed a min-heap keyed
    by elevation; pixels at equal elevation are processed in insertion
    (FIFO) order. Each popped pixel claims its unlabeled 4-neighbors.
    Every pixel ends up labeled; there are no watershed-line pixels.
    """
    if elevation.ndim != 2:
        raise ValueError("watershed expects a 2-D elevation map")
    if elevation.shape != markers.shape:
        raise ValueError(f"elevation shape {elevation.shape} != markers shape "
                         f"{markers.shape}")
    labels = markers.astype(np.int32, copy=True)
    if labels.min(initial=0) < 0:
        raise ValueError("watershed markers must be non-negative")
    if labels.max(initial=0) <= 0:
        raise ValueError("watershed requires at least one marker pixel")

    h, w = elevation.shape
    elev = elevation
    heap = []
    counter = 0
    for r, c in zip(*np.nonzero(labels > 0)):
        heap.append((float(elev[r, c]), counter, int(r), int(c)))
        counter += 1
    heapq.heapify(heap)

    push = heapq.heappush
    pop = heapq.heappop
    while heap:
        _, _, r, c = pop(heap)
        lab = labels[r, c]
        for dy, dx in CROSS_NEIGHBORS:
            nr = r + dy
            nc = c + dx
            if 0 <= nr < h and 0 <= nc < w and labels[nr, nc] == 0:
                labels[nr, nc] = lab
                counter += 1
                push(heap, (float(elev[nr, nc]), counter, nr, nc))
    return labels


def _border_label_set(labels: np.ndarray) -> set:
    edges = np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    return set(int(v) for v in np.unique(edges) if v > 0)


def _component_sizes(labels: np.ndarray, count: int) -> np.ndarray:
    return np.bincount(labels.ravel(), minlength=count + 1)


def _two_largest(candidates, sizes) -> list:
    """Pick up to two labels by decreasing size; equal sizes prefer the
    smaller label."""
    ranked = sorted(candidates, key=lambda lab: (-int(sizes[lab]), lab))
    return ranked[:2]


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Fill background regions not connected (4-adjacency) to the border."""
    inv = ~mask
    labels, count = connected_components(inv, connectivity=4)
    if count == 0:
        return mask.copy()
    border = _border_label_set(labels)
    holes = (labels > 0)
    for lab in border:
        holes &= labels != lab
    return mask | holes


def cca_lung_pipeline(img: np.ndarray) -> np.ndarray:
    """Segment lungs by thresholding plus connected-component selection.

    Otsu-binarize with lungs dark, 8-connected labeling, drop components
    touching the image border, keep the two largest that remain, and fill
    the holes of each kept component. Returns a boolean mask.
    """
    threshold = otsu_threshold(img)
    binary = binarize(img, threshold, lungs_dark=True)
    labels, count = connected_components(binary, connectivity=8)
    out = np.zeros(img.shape, dtype=bool)
    if count == 0:
        return out
    border = _border_label_set(labels)
    sizes = _component_sizes(labels, count)
    candidates = [lab for lab in range(1, count + 1) if lab not in border]
    for lab in _two_largest(candidates, sizes):
        out |= fill_holes(labels == lab)
    return out


def watershed_regions(img: np.ndarray, sure_fg_factor: float = 0.4):
    """Run the watershed stage stack and return its region decomposition.

    Otsu-binarize with lungs dark, open with a 3x3 cross, take the L1
    distance transform of the cleaned mask, and mark sure-foreground where
    distance exceeds ``sure_fg_factor`` times its maximum. Each sure-
    foreground component seeds one region; pixels outside the dilated mask
    seed one shared background region. The flood runs over the image
    itself as the elevation map (lungs are dark, so lung interiors are
    troughs).

    Returns (regions, kept): the full label map (background label is
    fg_count + 1; None when no foreground marker exists) and the lung
    labels that survive border suppression, at most the two largest.
    """
    if not 0.0 < sure_fg_factor < 1.0:
        raise ValueError(f"sure_fg_factor must be in (0, 1), got {sure_fg_factor}")
    threshold = otsu_threshold(img)
    binary = binarize(img, threshold, lungs_dark=True)
    opened = morphology(binary, "open")

    dist = distance_transform_l1(opened)
    max_dist = int(dist.max(initial=0))
    if max_dist == 0:
        return None, []
    sure_fg = dist > sure_fg_factor * max_dist
    fg_labels, fg_count = connected_components(sure_fg, connectivity=8)
    if fg_count == 0:
        return None, []

    markers = fg_labels.copy()
    background = ~morphology(opened, "dilate")
    markers[background] = fg_count + 1

    regions = watershed(img, markers)
    border = _border_label_set(regions)
    sizes = _component_sizes(regions, fg_count + 1)
    candidates = [lab for lab in range(1, fg_count + 1) if lab not in border]
    return regions, _two_largest(candidates, sizes)


def watershed_lung_pipeline(img: np.ndarray, sure_fg_factor: float = 0.4) -> np.ndarray:
    """Segment lungs with marker-based watershed; union of the kept regions
    from watershed_regions."""
    regions, kept = watershed_regions(img, sure_fg_factor)
    out = np.zeros(img.shape, dtype=bool)
    for lab in kept:
        out |= regions == lab
    return out

