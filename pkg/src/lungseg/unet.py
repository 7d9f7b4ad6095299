"""UNet assembly, cross-validated training harness, and mask inference.

The dataset protocol: hold out the 10% test split untouched, run k-fold
cross-validation over the remaining train+val pool for robustness
statistics, then retrain on the full pool to produce the final model.
"""

from dataclasses import dataclass

import numpy as np

from .imgio import resize_bilinear, resize_nearest, split_dataset
from .metrics import dice as dice_score
from .rng import SplitMix64, derive_seed
from .tensorcore import (Tensor, Parameter, conv2d, conv_transpose2d,
                         maxpool2d, relu, sigmoid, concat_channels,
                         mixed_loss, adam_step_all)


@dataclass
class UNetConfig:
    depth: int = 3
    base_channels: int = 8
    in_channels: int = 1
    out_channels: int = 1
    input_size: int = 128

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1:
            raise ValueError(f"base_channels must be >= 1, got {self.base_channels}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.input_size % (1 << self.depth) != 0:
            raise ValueError(f"input_size {self.input_size} not divisible by "
                             f"2^depth = {1 << self.depth}")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 50
    batch_size: int = 4
    loss_mix: float = 0.5
    folds: int = 10
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss_mix <= 1.0:
            raise ValueError(f"loss_mix must lie in [0, 1], got {self.loss_mix}")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass
class TrainRecord:
    fold: int
    epoch: int
    train_loss: float
    val_loss: float
    val_dice: float


class UNet:
    """Encoder-decoder with skip connections, built from tensorcore ops.

    Parameters are declared encoder-first, then bottleneck, then decoder
    from the deepest level up, then the final 1x1 projection; weight
    initialization and the checkpoint format both follow this order.
    """

    def __init__(self, config: UNetConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self._params = {}
        self._order = []
        self._declare()
        self.reinitialize(seed)

    def _add(self, name: str, shape, fan_in: int):
        param = Parameter(np.zeros(shape, dtype=self.dtype), name=name)
        param.fan_in = fan_in
        self._params[name] = param
        self._order.append(name)

    def _declare(self):
        cfg = self.config
        ch = [cfg.base_channels << i for i in range(cfg.depth + 1)]
        prev = cfg.in_channels
        for i in range(cfg.depth):
            self._add(f"enc{i}_conv1_w", (ch[i], prev, 3, 3), prev * 9)
            self._add(f"enc{i}_conv1_b", (ch[i],), 0)
            self._add(f"enc{i}_conv2_w", (ch[i], ch[i], 3, 3), ch[i] * 9)
            self._add(f"enc{i}_conv2_b", (ch[i],), 0)
            prev = ch[i]
        deep = ch[cfg.depth]
        self._add("bottleneck_conv1_w", (deep, prev, 3, 3), prev * 9)
        self._add("bottleneck_conv1_b", (deep,), 0)
        self._add("bottleneck_conv2_w", (deep, deep, 3, 3), deep * 9)
        self._add("bottleneck_conv2_b", (deep,), 0)
        for i in range(cfg.depth - 1, -1, -1):
            above = ch[i + 1]
            self._add(f"dec{i}_up_w", (above, ch[i], 2, 2), above)
            self._add(f"dec{i}_conv1_w", (ch[i], 2 * ch[i], 3, 3), 2 * ch[i] * 9)
            self._add(f"dec{i}_conv1_b", (ch[i],), 0)
            self._add(f"dec{i}_conv2_w", (ch[i], ch[i], 3, 3), ch[i] * 9)
            self._add(f"dec{i}_conv2_b", (ch[i],), 0)
        self._add("final_w", (cfg.out_channels, cfg.base_channels, 1, 1),
                  cfg.base_channels)
        self._add("final_b", (cfg.out_channels,), 0)

    def reinitialize(self, seed: int):
        """He-uniform weights, zero biases, fresh optimizer state.

        All weights draw from one splitmix stream in declaration order, so
        a seed fully determines every parameter.
        """
        rng = SplitMix64(derive_seed(seed, 0x1A17))
        for name in self._order:
            param = self._params[name]
            shape = param.value.data.shape
            if param.fan_in == 0:  # bias
                param.assign(np.zeros(shape, dtype=self.dtype))
                continue
            limit = np.sqrt(6.0 / param.fan_in)
            size = int(np.prod(shape))
            draws = (2.0 * rng.uniform(size) - 1.0) * limit
            param.assign(draws.reshape(shape).astype(self.dtype))

    def parameters(self):
        return [self._params[name] for name in self._order]

    def named_parameters(self):
        return [(name, self._params[name]) for name in self._order]

    def forward(self, x: Tensor) -> Tensor:
        cfg = self.config
        if x.data.ndim != 4 or x.data.shape[1] != cfg.in_channels:
            raise ValueError(f"forward expects (N, {cfg.in_channels}, S, S), "
                             f"got {x.data.shape}")
        if x.data.shape[2] != cfg.input_size or x.data.shape[3] != cfg.input_size:
            raise ValueError(f"forward expects spatial size {cfg.input_size}, "
                             f"got {x.data.shape[2]}x{x.data.shape[3]}")
        p = self._params
        skips = []
        h = x
        for i in range(cfg.depth):
            h = relu(conv2d(h, p[f"enc{i}_conv1_w"].value,
                            p[f"enc{i}_conv1_b"].value, padding=1))
            h = relu(conv2d(h, p[f"enc{i}_conv2_w"].value,
                            p[f"enc{i}_conv2_b"].value, padding=1))
            skips.append(h)
            h = maxpool2d(h)
        h = relu(conv2d(h, p["bottleneck_conv1_w"].value,
                        p["bottleneck_conv1_b"].value, padding=1))
        h = relu(conv2d(h, p["bottleneck_conv2_w"].value,
                        p["bottleneck_conv2_b"].value, padding=1))
        for i in range(cfg.depth - 1, -1, -1):
            h = conv_transpose2d(h, p[f"dec{i}_up_w"].value)
            h = concat_channels(h, skips[i])
            h = relu(conv2d(h, p[f"dec{i}_conv1_w"].value,
                            p[f"dec{i}_conv1_b"].value, padding=1))
            h = relu(conv2d(h, p[f"dec{i}_conv2_w"].value,
                            p[f"dec{i}_conv2_b"].value, padding=1))
        logits = conv2d(h, p["final_w"].value, p["final_b"].value, padding=0)
        return sigmoid(logits)


def build_unet(cfg: UNetConfig, seed: int) -> UNet:
    return UNet(cfg, seed=seed)


def _as_batch(entry_img, entry_mask, size, dtype):
    img = entry_img
    if img.shape != (size, size):
        img = resize_bilinear(img, size, size)
    x = img.astype(dtype, copy=False)[None]
    if entry_mask is None:
        return x, None
    mask = entry_mask
    if mask.shape != (size, size):
        mask = resize_nearest(mask, size, size)
    return x, mask.astype(dtype, copy=False)[None]


def _gather(data, indices, cfg, dtype):
    """Materialize (X, Y, ids) arrays for the given dataset indices."""
    xs, ys, ids = [], [], []
    for i in indices:
        entry = data[i]
        if entry.mask is None:
            raise ValueError(f"entry {entry.id!r} has no mask")
        x, y = _as_batch(entry.image, entry.mask, cfg.input_size, dtype)
        xs.append(x)
        ys.append(y)
        ids.append(entry.id)
    return np.stack(xs), np.stack(ys), ids


def fit(model: UNet, images: np.ndarray, masks: np.ndarray, tcfg: TrainConfig,
        on_epoch=None):
    """Train in place on (M,1,S,S) arrays; returns per-epoch mean train loss.

    Batch order reshuffles deterministically from seed + epoch. When given,
    ``on_epoch(epoch, train_loss)`` runs after each epoch.
    """
    m = images.shape[0]
    if m == 0:
        raise ValueError("fit: empty training set")
    params = model.parameters()
    epoch_losses = []
    for epoch in range(tcfg.epochs):
        order = SplitMix64(derive_seed(tcfg.seed + epoch, 0x5F1E)).permutation(m)
        total = 0.0
        for start in range(0, m, tcfg.batch_size):
            idx = order[start:start + tcfg.batch_size]
            pred = model.forward(Tensor(images[idx]))
            loss = mixed_loss(pred, Tensor(masks[idx]), tcfg.loss_mix)
            for p in params:
                p.zero_grad()
            loss.backward()
            adam_step_all(params, lr=tcfg.learning_rate)
            total += loss.item() * len(idx)
        epoch_losses.append(total / m)
        if on_epoch is not None:
            on_epoch(epoch, epoch_losses[-1])
    return epoch_losses


def predict_proba(model: UNet, images: np.ndarray, batch_size: int = 4) -> np.ndarray:
    """Forward (M,1,S,S) inputs in batches; returns probabilities."""
    outs = []
    for start in range(0, images.shape[0], batch_size):
        outs.append(model.forward(Tensor(images[start:start + batch_size])).data)
    return np.concatenate(outs, axis=0)


def evaluate(model: UNet, images: np.ndarray, masks: np.ndarray,
             tcfg: TrainConfig, threshold: float = 0.5):
    """Mean mixed loss and mean DICE over a labeled array set."""
    m = images.shape[0]
    total_loss = 0.0
    dices = []
    for start in range(0, m, tcfg.batch_size):
        x = images[start:start + tcfg.batch_size]
        y = masks[start:start + tcfg.batch_size]
        pred = model.forward(Tensor(x))
        loss = mixed_loss(pred, Tensor(y), tcfg.loss_mix)
        total_loss += loss.item() * x.shape[0]
        for j in range(x.shape[0]):
            dices.append(dice_score(pred.data[j, 0] > threshold,
                                    y[j, 0] > 0.5))
    return total_loss / m, float(np.mean(dices))


def cv_folds(pool, folds: int, seed: int):
    """Shuffle the pool deterministically and deal it into ``folds`` slices
    whose sizes differ by at most one."""
    perm = SplitMix64(derive_seed(seed, 0xF01D)).permutation(len(pool))
    return [sorted(pool[j] for j in perm[i::folds]) for i in range(folds)]


def train(model: UNet, data, tcfg: TrainConfig):
    """Cross-validated training over the train+val pool of an 8:1:1 split.

    For each fold the model is freshly re-seeded, trained on the other
    folds, and scored on the held-out fold after every epoch; afterwards
    the model is re-seeded once more and retrained on the whole pool,
    which is the state it is left in. Test indices are never read.
    Returns the per-fold, per-epoch TrainRecords (folds x epochs of them).
    """
    n = len(data)
    if n == 0:
        raise ValueError("train: empty dataset")
    split = split_dataset(n, seed=tcfg.seed)
    pool = sorted(split.train + split.val)
    if tcfg.folds > len(pool):
        raise ValueError(f"folds={tcfg.folds} exceeds train+val pool of "
                         f"{len(pool)} entries")
    cfg = model.config
    folds = cv_folds(pool, tcfg.folds, tcfg.seed)
    records = []
    for f in range(tcfg.folds):
        train_idx = sorted(i for k in range(tcfg.folds) if k != f
                           for i in folds[k])
        xt, yt, _ = _gather(data, train_idx, cfg, model.dtype)
        xv, yv, _ = _gather(data, folds[f], cfg, model.dtype)
        model.reinitialize(derive_seed(tcfg.seed, 0x171, f))

        def on_epoch(epoch, train_loss, _f=f, _xv=xv, _yv=yv):
            val_loss, val_dice = evaluate(model, _xv, _yv, tcfg)
            records.append(TrainRecord(fold=_f, epoch=epoch,
                                       train_loss=train_loss,
                                       val_loss=val_loss, val_dice=val_dice))

        fit(model, xt, yt, tcfg, on_epoch=on_epoch)

    model.reinitialize(derive_seed(tcfg.seed, 0xF17A))
    xp, yp, _ = _gather(data, pool, cfg, model.dtype)
    fit(model, xp, yp, tcfg)
    return records


def predict_mask(model: UNet, img: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Segment one grayscale image at its native resolution.

    The image is resized to the model's input size, pushed through the
    net, thresholded with strict >, and the mask is resized back with
    nearest-neighbor.
    """
    h, w = img.shape
    size = model.config.input_size
    x, _ = _as_batch(img, None, size, model.dtype)
    prob = model.forward(Tensor(x[None]))
    mask = prob.data[0, 0] > threshold
    if mask.shape != (h, w):
        mask = resize_nearest(mask, w, h)
    return mask
