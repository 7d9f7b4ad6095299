"""Compiled extension vs NumPy fallback: same outputs on every kernel."""

import numpy as np
import pytest

from lungseg import backend
from lungseg._kernels import fallback
from lungseg.rng import SplitMix64

from util import random_mask

compiled = backend.available().get("compiled")
needs_compiled = pytest.mark.skipif(compiled is None,
                                    reason="compiled extension not built")


def _rand(rng, shape, dtype):
    return (rng.uniform(int(np.prod(shape))).reshape(shape) - 0.5).astype(dtype)


@needs_compiled
@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-5), (np.float64, 1e-12)])
@pytest.mark.parametrize("padding", [0, 1])
def test_conv2d_forward_parity(dtype, tol, padding):
    rng = SplitMix64(1)
    x = _rand(rng, (2, 3, 12, 11), dtype)
    w = _rand(rng, (4, 3, 3, 3), dtype)
    a = fallback.conv2d_forward(x, w, padding)
    b = compiled.conv2d_forward(x, w, padding)
    assert a.shape == b.shape
    assert np.allclose(a, b, rtol=tol, atol=tol)


@needs_compiled
@pytest.mark.parametrize("padding", [0, 1])
def test_conv2d_backward_input_parity(padding):
    rng = SplitMix64(2)
    h, wd = 12, 11
    ho, wo = h + 2 * padding - 2, wd + 2 * padding - 2
    gy = _rand(rng, (2, 4, ho, wo), np.float64)
    w = _rand(rng, (4, 3, 3, 3), np.float64)
    a = fallback.conv2d_backward_input(gy, w, padding, h, wd)
    b = compiled.conv2d_backward_input(gy, w, padding, h, wd)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_compiled
@pytest.mark.parametrize("padding", [0, 1])
def test_conv2d_backward_weight_parity(padding):
    rng = SplitMix64(3)
    h, wd = 12, 11
    ho, wo = h + 2 * padding - 2, wd + 2 * padding - 2
    x = _rand(rng, (2, 3, h, wd), np.float64)
    gy = _rand(rng, (2, 4, ho, wo), np.float64)
    a = fallback.conv2d_backward_weight(gy, x, padding, 3, 3)
    b = compiled.conv2d_backward_weight(gy, x, padding, 3, 3)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_compiled
def test_maxpool_parity_including_tie_break():
    rng = SplitMix64(4)
    x = _rand(rng, (2, 3, 8, 10), np.float64)
    # force exact ties in several windows; both backends must pick the
    # first maximum in row-major window order
    x[0, 0, 0:2, 0:2] = 0.75
    x[1, 2, 4:6, 2:4] = -0.25
    ya, ia = fallback.maxpool2_forward(x)
    yb, ib = compiled.maxpool2_forward(x)
    assert np.array_equal(ya, yb)
    assert np.array_equal(ia, ib)

    gy = _rand(rng, ya.shape, np.float64)
    ga = fallback.maxpool2_backward(gy, ia)
    gb = compiled.maxpool2_backward(gy, ib)
    assert np.array_equal(ga, gb)


@needs_compiled
@pytest.mark.parametrize("connectivity", [4, 8])
def test_label_components_parity(connectivity):
    rng = SplitMix64(5)
    for _ in range(20):
        mask = random_mask(rng, 23, 31)
        la, na = fallback.label_components(mask, connectivity)
        lb, nb = compiled.label_components(mask, connectivity)
        assert na == nb
        assert np.array_equal(la, lb)


@needs_compiled
def test_chamfer_parity():
    rng = SplitMix64(6)
    for _ in range(20):
        mask = random_mask(rng, 19, 27)
        assert np.array_equal(fallback.chamfer_l1(mask),
                              compiled.chamfer_l1(mask))
    full = np.ones((5, 7), dtype=bool)
    assert np.array_equal(fallback.chamfer_l1(full), compiled.chamfer_l1(full))
    empty = np.zeros((5, 7), dtype=bool)
    assert np.array_equal(fallback.chamfer_l1(empty),
                          compiled.chamfer_l1(empty))


@needs_compiled
def test_set_backend_swaps_live_dispatch():
    from lungseg.tensorcore import Tensor, conv2d

    rng = SplitMix64(7)
    x = Tensor(_rand(rng, (1, 2, 8, 8), np.float64))
    w = Tensor(_rand(rng, (3, 2, 3, 3), np.float64))
    prev = backend.set_backend("fallback")
    try:
        assert backend.name() == "fallback"
        y_fallback = conv2d(x, w).data
        backend.set_backend("compiled")
        assert backend.name() == "compiled"
        y_compiled = conv2d(x, w).data
    finally:
        backend.active = prev
    assert np.allclose(y_fallback, y_compiled, rtol=1e-12, atol=1e-12)


def test_unknown_backend_rejected():
    with pytest.raises(KeyError):
        backend.set_backend("turbo")
    # a failed swap must leave the active backend untouched
    assert backend.name() in ("fallback", "compiled")
