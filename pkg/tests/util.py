"""Shared fixtures and independent oracles used across the test suite.

The oracles here deliberately re-derive results through a different
algorithm or formula than the library (breadth-first flooding instead of
union-find, brute-force scans instead of sweeps, the textbook Otsu
formula instead of the rearranged one) so agreement is meaningful.
"""

import pathlib
from collections import deque
from fractions import Fraction

import numpy as np

from lungseg import unet as unet_mod
from lungseg.rng import SplitMix64, derive_seed
from lungseg.tensorcore import (Parameter, Tensor, add, bce_loss,
                                concat_channels, conv2d, conv_transpose2d,
                                grad_check, maxpool2d, mixed_loss, relu,
                                scale, sigmoid, soft_dice_loss)
from lungseg.tensorcore.tensor import accumulate_grad

GOLDEN_DIR = pathlib.Path(__file__).parent / "golden"


def ssum(t: Tensor) -> Tensor:
    """Scalar sum over a tensor, built the same way the library ops are."""
    out = Tensor(np.asarray(t.data.sum(), dtype=t.data.dtype),
                 requires_grad=t.requires_grad)
    out._parents = (t,)

    def _bw(gy):
        if t.requires_grad:
            accumulate_grad(t, gy * np.ones_like(t.data))

    out._backward = _bw
    return out


class LoggingList(list):
    """List that records every index handed to __getitem__."""

    def __init__(self, items):
        super().__init__(items)
        self.accessed = []

    def __getitem__(self, i):
        self.accessed.append(i)
        return super().__getitem__(i)


def random_mask(rng: SplitMix64, h: int, w: int, p: float = 0.45) -> np.ndarray:
    return rng.uniform(h * w).reshape(h, w) < p


def random_image(rng: SplitMix64, h: int, w: int) -> np.ndarray:
    return rng.uniform(h * w).reshape(h, w)


def clean_phantom(size: int, seed: int):
    """Two dark ellipses on a bright field with mild noise.

    This is the benign case every classical pipeline must handle well; the
    adversarial corpus lives in lungseg.phantom.
    """
    rng = SplitMix64(seed)
    img = np.full((size, size), 0.88, dtype=np.float64)
    truth = np.zeros((size, size), dtype=bool)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    for fx in (0.30, 0.70):
        cy = 0.46 * size + rng.uniform_range(-1.5, 1.5)
        cx = fx * size + rng.uniform_range(-1.5, 1.5)
        ay = 0.24 * size
        ax = 0.14 * size
        inside = ((yy - cy) / ay) ** 2 + ((xx - cx) / ax) ** 2 <= 1.0
        img[inside] = 0.20
        truth |= inside
    img += rng.normal(size * size, 0.02).reshape(size, size)
    return np.clip(img, 0.0, 1.0), truth


# --------------------------------------------------------------- oracles


def otsu_oracle(img: np.ndarray) -> int:
    """Exhaustive scan of the textbook objective w0*w1*(mu0 - mu1)^2 in
    exact rational arithmetic; strict improvement keeps the smallest t."""
    q = np.clip(np.floor(img.astype(np.float64) * 255.0), 0, 255).astype(int)
    hist = [int(v) for v in np.bincount(q.ravel(), minlength=256)]
    present = [i for i, c in enumerate(hist) if c]
    if len(present) == 1:
        return present[0]
    total = sum(hist)
    grand = sum(i * c for i, c in enumerate(hist))
    best_t = 0
    best = Fraction(-1)
    n0 = 0
    s0 = 0
    for t in range(256):
        n0 += hist[t]
        s0 += t * hist[t]
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            score = Fraction(0)
        else:
            mu0 = Fraction(s0, n0)
            mu1 = Fraction(grand - s0, n1)
            score = Fraction(n0, total) * Fraction(n1, total) * (mu0 - mu1) ** 2
        if score > best:
            best = score
            best_t = t
    return best_t


def flood_label_oracle(mask: np.ndarray, connectivity: int):
    """Label components by raster-order BFS flooding."""
    h, w = mask.shape
    if connectivity == 4:
        neigh = ((-1, 0), (1, 0), (0, -1), (0, 1))
    else:
        neigh = tuple((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)
                      if (dy, dx) != (0, 0))
    labels = np.zeros((h, w), dtype=np.int32)
    count = 0
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or labels[r, c]:
                continue
            count += 1
            labels[r, c] = count
            queue = deque([(r, c)])
            while queue:
                y, x = queue.popleft()
                for dy, dx in neigh:
                    ny = y + dy
                    nx = x + dx
                    if (0 <= ny < h and 0 <= nx < w and mask[ny, nx]
                            and not labels[ny, nx]):
                        labels[ny, nx] = count
                        queue.append((ny, nx))
    return labels, count


def brute_l1_distance(mask: np.ndarray) -> np.ndarray:
    """O(n^2) exact L1 distance to the nearest False pixel inside the
    image, saturating at h + w when the mask has no False pixel."""
    h, w = mask.shape
    m = np.asarray(mask, dtype=bool)
    out = np.full((h, w), h + w, dtype=np.int64)
    bg = np.argwhere(~m)
    if bg.size == 0:
        return out
    ys = bg[:, 0]
    xs = bg[:, 1]
    for r in range(h):
        for c in range(w):
            if not m[r, c]:
                out[r, c] = 0
            else:
                out[r, c] = int(np.min(np.abs(ys - r) + np.abs(xs - c)))
    return out


def check_watershed_invariants(labels: np.ndarray, markers: np.ndarray):
    """Assert the four properties any marker flood must satisfy."""
    assert labels.shape == markers.shape
    assert labels.min() > 0, "every pixel must end up labeled"
    marker_set = set(int(v) for v in np.unique(markers) if v > 0)
    assert set(int(v) for v in np.unique(labels)) <= marker_set
    seeded = markers > 0
    assert np.array_equal(labels[seeded], markers[seeded]), \
        "marker pixels must keep their labels"
    # each connected piece of a region must contain one of its own markers
    for lab in np.unique(labels):
        region = labels == lab
        comp, count = flood_label_oracle(region, 4)
        for k in range(1, count + 1):
            assert np.any(seeded[comp == k] & (markers[comp == k] == lab)), \
                f"label {lab}: component {k} grew without a seed"


# ------------------------------------------------- per-layer grad checks


def _param(rng: SplitMix64, name, shape, sigma=1.0):
    data = rng.normal(int(np.prod(shape)), sigma).reshape(shape)
    return Parameter(np.asarray(data, dtype=np.float64), name=name)


def _unit_param(rng: SplitMix64, name, shape, lo=0.05, hi=0.95):
    data = rng.uniform_range(lo, hi, int(np.prod(shape))).reshape(shape)
    return Parameter(np.asarray(data, dtype=np.float64), name=name)


def _mix_tensor(rng: SplitMix64, channels):
    return Tensor(rng.normal(channels).reshape(1, channels, 1, 1))


def check_conv2d(seed: int) -> float:
    rng = SplitMix64(derive_seed(seed, 0x11))
    x = _param(rng, "x", (2, 2, 6, 6), 0.8)
    w = _param(rng, "w", (3, 2, 3, 3), 0.4)
    b = _param(rng, "b", (3,), 0.5)
    mix = _mix_tensor(rng, 3)

    def fn():
        return ssum(conv2d(conv2d(x.value, w.value, b.value, padding=1),
                           mix, padding=0))

    return grad_check(fn, [x, w, b], seed=seed)


def check_conv_transpose2d(seed: int) -> float:
    rng = SplitMix64(derive_seed(seed, 0x12))
    x = _param(rng, "x", (1, 2, 3, 3), 0.8)
    w = _param(rng, "w", (2, 3, 2, 2), 0.6)
    mix = _mix_tensor(rng, 3)

    def fn():
        return ssum(conv2d(conv_transpose2d(x.value, w.value), mix,
                           padding=0))

    return grad_check(fn, [x, w], seed=seed)


def check_maxpool2d(seed: int) -> float:
    for attempt in range(20):
        rng = SplitMix64(derive_seed(seed, 0x13, attempt))
        data = rng.normal(1 * 2 * 6 * 6).reshape(1, 2, 6, 6)
        win = data.reshape(1, 2, 3, 2, 3, 2).transpose(0, 1, 2, 4, 3, 5)
        top = np.sort(win.reshape(1, 2, 3, 3, 4), axis=-1)
        if (top[..., 3] - top[..., 2]).min() >= 1e-3:
            break
    else:
        raise AssertionError(f"no tie-free pooling input for seed {seed}")
    x = Parameter(data, name="x")
    mix = _mix_tensor(rng, 2)

    def fn():
        return ssum(conv2d(maxpool2d(x.value), mix, padding=0))

    return grad_check(fn, [x], seed=seed)


def check_relu(seed: int) -> float:
    for attempt in range(20):
        rng = SplitMix64(derive_seed(seed, 0x14, attempt))
        data = rng.normal(1 * 1 * 4 * 4).reshape(1, 1, 4, 4)
        if np.abs(data).min() >= 1e-3:
            break
    else:
        raise AssertionError(f"no kink-free relu input for seed {seed}")
    x = Parameter(data, name="x")
    mix = _mix_tensor(rng, 1)

    def fn():
        return ssum(conv2d(relu(x.value), mix, padding=0))

    return grad_check(fn, [x], seed=seed)


def check_sigmoid(seed: int) -> float:
    rng = SplitMix64(derive_seed(seed, 0x15))
    x = _param(rng, "x", (1, 1, 4, 4), 1.5)
    mix = _mix_tensor(rng, 1)

    def fn():
        return ssum(conv2d(sigmoid(x.value), mix, padding=0))

    return grad_check(fn, [x], seed=seed)


def check_concat_channels(seed: int) -> float:
    rng = SplitMix64(derive_seed(seed, 0x16))
    a = _param(rng, "a", (1, 2, 4, 4), 0.8)
    b = _param(rng, "b", (1, 3, 4, 4), 0.8)
    mix = _mix_tensor(rng, 5)

    def fn():
        return ssum(conv2d(concat_channels(a.value, b.value), mix, padding=0))

    return grad_check(fn, [a, b], seed=seed)


def check_add_scale(seed: int) -> float:
    rng = SplitMix64(derive_seed(seed, 0x17))
    a = _param(rng, "a", (2, 3), 0.8)
    b = _param(rng, "b", (2, 3), 0.8)

    def fn():
        return ssum(add(scale(a.value, 1.7), scale(b.value, -0.6)))

    return grad_check(fn, [a, b], seed=seed)


def check_bce_loss(seed: int) -> float:
    rng = SplitMix64(derive_seed(seed, 0x18))
    pred = _unit_param(rng, "pred", (1, 1, 4, 4))
    target = Tensor((rng.uniform(16).reshape(1, 1, 4, 4) < 0.5)
                    .astype(np.float64))

    def fn():
        return bce_loss(pred.value, target)

    return grad_check(fn, [pred], seed=seed)


def check_soft_dice_loss(seed: int) -> float:
    rng = SplitMix64(derive_seed(seed, 0x19))
    pred = _unit_param(rng, "pred", (2, 1, 4, 4))
    target = Tensor((rng.uniform(32).reshape(2, 1, 4, 4) < 0.5)
                    .astype(np.float64))

    def fn():
        return soft_dice_loss(pred.value, target)

    return grad_check(fn, [pred], seed=seed)


def check_mixed_loss(seed: int) -> float:
    rng = SplitMix64(derive_seed(seed, 0x1A))
    pred = _unit_param(rng, "pred", (1, 1, 4, 4))
    target = Tensor((rng.uniform(16).reshape(1, 1, 4, 4) < 0.5)
                    .astype(np.float64))

    def fn():
        return mixed_loss(pred.value, target, 0.3)

    return grad_check(fn, [pred], seed=seed)


def check_conv_bce_pipeline(seed: int) -> float:
    """The conv2d -> sigmoid -> bce pipeline on a random 1x1x8x8 input."""
    for attempt in range(20):
        rng = SplitMix64(derive_seed(seed, 0x1B, attempt))
        x = Tensor(rng.uniform(64).reshape(1, 1, 8, 8))
        w = _param(rng, "w", (1, 1, 3, 3), 0.5)
        b = _param(rng, "b", (1,), 0.4)
        logits = conv2d(x, w.value, b.value, padding=1)
        if np.abs(logits.data).max() <= 8.0:
            break
    else:
        raise AssertionError(f"no unsaturated pipeline for seed {seed}")
    target = Tensor((rng.uniform(64).reshape(1, 1, 8, 8) < 0.5)
                    .astype(np.float64))

    def fn():
        return bce_loss(sigmoid(conv2d(x, w.value, b.value, padding=1)),
                        target)

    return grad_check(fn, [w, b], seed=seed)


LAYER_CHECKS = {
    "conv2d": check_conv2d,
    "conv_transpose2d": check_conv_transpose2d,
    "maxpool2d": check_maxpool2d,
    "relu": check_relu,
    "sigmoid": check_sigmoid,
    "concat_channels": check_concat_channels,
    "add_scale": check_add_scale,
    "bce_loss": check_bce_loss,
    "soft_dice_loss": check_soft_dice_loss,
    "mixed_loss": check_mixed_loss,
    "conv_bce_pipeline": check_conv_bce_pipeline,
}


# ------------------------------------------------- whole-net grad checks


def randomize_for_gradcheck(model, seed: int):
    """Move the net to a generic random point in parameter space.

    Freshly initialized nets sit exactly on relu kinks (zero biases) and
    near-zero logits, where finite differences are meaningless: biases are
    lifted into [0.2, 0.7), weights get moderate spread, and the final
    projection is kept small so the sigmoid never saturates.
    """
    rng = SplitMix64(seed)
    for name, param in model.named_parameters():
        shape = param.value.data.shape
        size = int(np.prod(shape))
        if name == "final_w":
            vals = rng.normal(size, 0.08)
        elif name.endswith("_b"):
            vals = rng.uniform_range(0.2, 0.7, size)
        else:
            vals = rng.normal(size, 0.35)
        param.assign(np.asarray(vals, dtype=np.float64).reshape(shape))


def unet_screen(model, x: np.ndarray):
    """Replay the forward pass and measure how numerically safe it is.

    Returns (margin, logit_mag): the smallest distance of any relu input
    from its kink or any pool window's top value from the runner-up, and
    the largest |logit| entering the sigmoid.
    """
    cfg = model.config
    p = {name: par.value for name, par in model.named_parameters()}
    margins = []

    def conv_relu(h, key):
        pre = conv2d(h, p[f"{key}_w"], p[f"{key}_b"], padding=1)
        margins.append(float(np.abs(pre.data).min()))
        return relu(pre)

    def pool(h):
        d = h.data
        n, c, hh, ww = d.shape
        win = d.reshape(n, c, hh // 2, 2, ww // 2, 2)
        win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, hh // 2, ww // 2, 4)
        top = np.sort(win, axis=-1)
        # all-zero windows (every entry clamped by the preceding relu) are
        # flat under small perturbations; only windows with a positive max
        # can flip their argmax
        live = top[..., 3] > 0.0
        if np.any(live):
            margins.append(float((top[..., 3] - top[..., 2])[live].min()))
        return maxpool2d(h)

    h = Tensor(x)
    skips = []
    for i in range(cfg.depth):
        h = conv_relu(h, f"enc{i}_conv1")
        h = conv_relu(h, f"enc{i}_conv2")
        skips.append(h)
        h = pool(h)
    h = conv_relu(h, "bottleneck_conv1")
    h = conv_relu(h, "bottleneck_conv2")
    for i in range(cfg.depth - 1, -1, -1):
        h = concat_channels(conv_transpose2d(h, p[f"dec{i}_up_w"]), skips[i])
        h = conv_relu(h, f"dec{i}_conv1")
        h = conv_relu(h, f"dec{i}_conv2")
    logits = conv2d(h, p["final_w"], p["final_b"], padding=0)
    return min(margins), float(np.abs(logits.data).max())


def _planned_coords(params, coords_per_param: int, seed: int):
    """The exact coordinate subsample grad_check will draw for this seed."""
    rng = SplitMix64(derive_seed(seed, 0x6AD))
    plan = []
    for p in params:
        n = p.value.data.size
        if n <= coords_per_param:
            plan.append((p, list(range(n))))
        else:
            plan.append((p, rng.permutation(n)[:coords_per_param].tolist()))
    return plan


def whole_net_gradcheck(seed: int, h: float = 1e-5, coords: int = 4,
                        margin: float = 5e-4, max_attempts: int = 20) -> float:
    """Max relative finite-difference error of a depth-2 / base-2 UNet on
    a 16x16 input at a screened random point; deterministic in seed.

    A point qualifies when three conditions hold. No relu input or
    contested pool window may sit within ``margin`` of a kink (a +-h
    weight step moves preactivations by ~2e-4, which must not cross). No
    logit may saturate the sigmoid. And every coordinate the checker will
    probe must carry an analytic gradient that is either exactly zero (a
    dead relu path, flat under the margin, where central differences
    return exactly zero too) or at least 1e-6: the loss is O(1), so
    differences at h=1e-5 resolve nothing below ~5e-12, and the pinned
    relative-error formula would measure that noise instead of the
    backward pass.
    """
    cfg = unet_mod.UNetConfig(depth=2, base_channels=2, input_size=16)
    model = unet_mod.UNet(cfg, seed=0, dtype=np.float64)
    x = SplitMix64(derive_seed(seed, 0x6E7)).uniform(256).reshape(1, 1, 16, 16)
    t = (SplitMix64(derive_seed(seed, 0xDA7A)).uniform(256)
         .reshape(1, 1, 16, 16) < 0.5).astype(np.float64)

    def fn():
        return mixed_loss(model.forward(Tensor(x)), Tensor(t))

    def informative(value: float) -> bool:
        return value == 0.0 or value >= 1e-6

    for attempt in range(max_attempts):
        randomize_for_gradcheck(model, derive_seed(seed, 0xC2, attempt))
        kink_margin, logit_mag = unet_screen(model, x)
        if kink_margin < margin or logit_mag > 8.0:
            continue
        params = model.parameters()
        for p in params:
            p.zero_grad()
        fn().backward()
        if all(informative(abs(float(p.value.grad.reshape(-1)[i])))
               for p, idx in _planned_coords(params, coords, seed)
               for i in idx):
            break
    else:
        raise AssertionError(f"no differentiable point found for seed {seed}")

    return grad_check(fn, model.parameters(), h=h, coords_per_param=coords,
                      seed=seed)
