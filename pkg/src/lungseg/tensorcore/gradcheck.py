"""Central-difference gradient checking for the autodiff tape."""

import numpy as np

from ..rng import SplitMix64, derive_seed


def grad_check(fn, params, h: float = 1e-5, coords_per_param=None, seed: int = 0):
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` must rebuild its graph from the current parameter values each
    call and return a scalar Tensor. Parameters should hold float64 data;
    float32 loses too many digits for a meaningful comparison. When a
    parameter has more coordinates than ``coords_per_param``, a seeded
    subsample of coordinates is checked instead of all of them.

    Returns the maximum relative error
    ``|a - n| / max(1e-12, |a| + |n|)`` over all checked coordinates.
    """
    for p in params:
        p.zero_grad()
    out = fn()
    out.backward()
    analytic = []
    for p in params:
        if p.value.grad is None:
            analytic.append(np.zeros_like(p.value.data))
        else:
            analytic.append(p.value.grad.copy())

    rng = SplitMix64(derive_seed(seed, 0x6AD))
    max_rel = 0.0
    for p, ana in zip(params, analytic):
        flat = p.value.data.reshape(-1)
        n = flat.size
        if coords_per_param is None or n <= coords_per_param:
            coords = range(n)
        else:
            coords = rng.permutation(n)[:coords_per_param]
        for i in coords:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = fn().item()
            flat[i] = orig - h
            f_minus = fn().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(ana.reshape(-1)[i])
            rel = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
            max_rel = max(max_rel, rel)
    return max_rel
