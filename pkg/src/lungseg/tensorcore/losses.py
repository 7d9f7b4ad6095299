"""Segmentation losses: binary cross-entropy and soft Dice."""

import numpy as np

from .tensor import Tensor, accumulate_grad
from .ops import add, scale


def bce_loss(pred: Tensor, target: Tensor, eps: float = 1e-7) -> Tensor:
    """Mean binary cross-entropy with predictions clamped to [eps, 1-eps].

    Elements whose raw prediction lies outside the clamp range contribute
    zero gradient.
    """
    if pred.data.shape != target.data.shape:
        raise ValueError(f"bce_loss shape mismatch: {pred.data.shape} vs "
                         f"{target.data.shape}")
    raw = pred.data
    p = np.clip(raw, eps, 1.0 - eps)
    y = target.data
    vals = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    out = Tensor(np.asarray(vals.mean(), dtype=pred.data.dtype),
                 requires_grad=pred.requires_grad)
    out._parents = (pred,)

    def _bw(gy):
        if pred.requires_grad:
            inside = (raw > eps) & (raw < 1.0 - eps)
            g = (p - y) / (p * (1.0 - p))
            g *= inside
            accumulate_grad(pred, gy * g / raw.size)

    out._backward = _bw
    return out


def soft_dice_loss(pred: Tensor, target: Tensor, smooth: float = 1.0) -> Tensor:
    """1 - soft Dice, computed per batch item over (C, H, W) and averaged.

    soft_dice = (2*sum(p*y) + smooth) / (sum(p) + sum(y) + smooth)
    """
    if pred.data.shape != target.data.shape:
        raise ValueError(f"soft_dice_loss shape mismatch: {pred.data.shape} vs "
                         f"{target.data.shape}")
    if pred.data.ndim != 4:
        raise ValueError("soft_dice_loss expects NCHW tensors")
    p = pred.data
    y = target.data
    n = p.shape[0]
    axes = (1, 2, 3)
    inter = (p * y).sum(axis=axes)
    num = 2.0 * inter + smooth
    den = p.sum(axis=axes) + y.sum(axis=axes) + smooth
    vals = 1.0 - num / den
    out = Tensor(np.asarray(vals.mean(), dtype=pred.data.dtype),
                 requires_grad=pred.requires_grad)
    out._parents = (pred,)

    def _bw(gy):
        if pred.requires_grad:
            num4 = num.reshape(n, 1, 1, 1)
            den4 = den.reshape(n, 1, 1, 1)
            g = -(2.0 * y * den4 - num4) / (den4 * den4)
            accumulate_grad(pred, (gy * g / n).astype(p.dtype, copy=False))

    out._backward = _bw
    return out


def mixed_loss(pred: Tensor, target: Tensor, mix: float = 0.5) -> Tensor:
    """mix * BCE + (1 - mix) * soft Dice."""
    if not 0.0 <= mix <= 1.0:
        raise ValueError(f"loss mix must lie in [0, 1], got {mix}")
    return add(scale(bce_loss(pred, target), mix),
               scale(soft_dice_loss(pred, target), 1.0 - mix))
