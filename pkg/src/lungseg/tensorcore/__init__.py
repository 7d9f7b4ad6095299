"""Minimal tensor library: autodiff tape, NCHW ops, losses, Adam."""

from .tensor import Tensor, Parameter
from .ops import (conv2d, conv_transpose2d, maxpool2d, relu, sigmoid,
                  concat_channels, add, scale)
from .losses import bce_loss, soft_dice_loss, mixed_loss
from .optim import adam_step, adam_step_all
from .gradcheck import grad_check
from .checkpoint import save_model, load_model, MAGIC

__all__ = [
    "Tensor", "Parameter",
    "conv2d", "conv_transpose2d", "maxpool2d", "relu", "sigmoid",
    "concat_channels", "add", "scale",
    "bce_loss", "soft_dice_loss", "mixed_loss",
    "adam_step", "adam_step_all", "grad_check",
    "save_model", "load_model", "MAGIC",
]
