"""Differentiable ops on NCHW tensors.

Convolutions are cross-correlations (no kernel flip). Heavy kernels
(conv2d, maxpool2d) dispatch through the active backend; the rest is
plain numpy.
"""

import numpy as np

from .. import backend
from .tensor import Tensor, accumulate_grad


def _result(data, *parents):
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    out._parents = tuple(parents)
    return out


def conv2d(x: Tensor, weight: Tensor, bias=None, padding: int = 1) -> Tensor:
    """2-D convolution, stride 1, zero padding.

    x is (N, C, H, W) and weight is (outC, C, kh, kw). bias, when given,
    is a 1-D tensor of length outC added per output channel.
    """
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv2d expects 4-D input and weight")
    n, c, h, w = x.data.shape
    oc, wc, kh, kw = weight.data.shape
    if wc != c:
        raise ValueError(f"conv2d channel mismatch: input has {c}, weight expects {wc}")
    if bias is not None and bias.data.shape != (oc,):
        raise ValueError("conv2d bias must be 1-D of length out_channels")

    y = backend.active.conv2d_forward(x.data, weight.data, padding)
    if bias is not None:
        y += bias.data.reshape(1, oc, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)
    out = _result(y, *parents)

    def _bw(gy):
        if x.requires_grad:
            accumulate_grad(x, backend.active.conv2d_backward_input(
                gy, weight.data, padding, h, w))
        if weight.requires_grad:
            accumulate_grad(weight, backend.active.conv2d_backward_weight(
                gy, x.data, padding, kh, kw))
        if bias is not None and bias.requires_grad:
            accumulate_grad(bias, gy.sum(axis=(0, 2, 3)))

    out._backward = _bw
    return out


def conv_transpose2d(x: Tensor, weight: Tensor) -> Tensor:
    """2x2 stride-2 transposed convolution (exact 2x upsampling).

    x is (N, C, H, W), weight is (C, outC, 2, 2); output is
    (N, outC, 2H, 2W). With stride equal to the kernel size the output
    taps never overlap, so each input pixel expands into an independent
    2x2 block.
    """
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv_transpose2d expects 4-D input and weight")
    n, c, h, w = x.data.shape
    wc, oc, kh, kw = weight.data.shape
    if wc != c:
        raise ValueError(f"conv_transpose2d channel mismatch: input has {c}, "
                         f"weight expects {wc}")
    if (kh, kw) != (2, 2):
        raise ValueError("conv_transpose2d kernel must be 2x2")

    t = np.tensordot(x.data, weight.data, axes=([1], [0]))  # (N,H,W,oc,2,2)
    y = np.ascontiguousarray(
        t.transpose(0, 3, 1, 4, 2, 5).reshape(n, oc, 2 * h, 2 * w))
    out = _result(y, x, weight)

    def _bw(gy):
        g6 = gy.reshape(n, oc, h, 2, w, 2).transpose(0, 2, 4, 1, 3, 5)
        if x.requires_grad:
            gx = np.tensordot(g6, weight.data, axes=([3, 4, 5], [1, 2, 3]))
            accumulate_grad(x, np.ascontiguousarray(gx.transpose(0, 3, 1, 2)))
        if weight.requires_grad:
            gw = np.tensordot(x.data, g6, axes=([0, 2, 3], [0, 1, 2]))
            accumulate_grad(weight, np.ascontiguousarray(gw))

    out._backward = _bw
    return out


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 stride-2 max pooling; ties route the gradient to the first
    maximum in row-major window order."""
    if x.data.ndim != 4:
        raise ValueError("maxpool2d expects a 4-D tensor")
    if x.data.shape[2] % 2 or x.data.shape[3] % 2:
        raise ValueError(f"maxpool2d needs even spatial dims, got "
                         f"{x.data.shape[2]}x{x.data.shape[3]}")
    y, idx = backend.active.maxpool2_forward(x.data)
    out = _result(y, x)

    def _bw(gy):
        if x.requires_grad:
            accumulate_grad(x, backend.active.maxpool2_backward(gy, idx))

    out._backward = _bw
    return out


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0)
    out = _result(y, x)

    def _bw(gy):
        if x.requires_grad:
            accumulate_grad(x, gy * (x.data > 0))

    out._backward = _bw
    return out


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    y = np.empty_like(d)
    pos = d >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    y[~pos] = e / (1.0 + e)
    # keep the open interval (0, 1) even where the quotient rounds to an
    # endpoint, so strict-threshold semantics survive saturated logits
    info = np.finfo(y.dtype)
    np.clip(y, info.tiny, 1.0 - info.epsneg, out=y)
    out = _result(y, x)

    def _bw(gy):
        if x.requires_grad:
            accumulate_grad(x, gy * y * (1.0 - y))

    out._backward = _bw
    return out


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two NCHW tensors along the channel axis."""
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ValueError("concat_channels expects 4-D tensors")
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2:] != b.data.shape[2:]:
        raise ValueError(f"concat_channels batch/spatial mismatch: "
                         f"{a.data.shape} vs {b.data.shape}")
    ca = a.data.shape[1]
    out = _result(np.concatenate([a.data, b.data], axis=1), a, b)

    def _bw(gy):
        if a.requires_grad:
            accumulate_grad(a, gy[:, :ca])
        if b.requires_grad:
            accumulate_grad(b, np.ascontiguousarray(gy[:, ca:]))

    out._backward = _bw
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = _result(a.data + b.data, a, b)

    def _bw(gy):
        if a.requires_grad:
            accumulate_grad(a, gy)
        if b.requires_grad:
            accumulate_grad(b, gy)

    out._backward = _bw
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    out = _result(a.data * a.data.dtype.type(factor), a)

    def _bw(gy):
        if a.requires_grad:
            accumulate_grad(a, gy * factor)

    out._backward = _bw
    return out
