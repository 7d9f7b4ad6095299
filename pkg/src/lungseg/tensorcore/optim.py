"""Adam optimizer acting on Parameter objects, one step at a time."""

import numpy as np

from .tensor import Parameter


def adam_step(param: Parameter, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """Apply one bias-corrected Adam update in place.

    Raises ValueError if the parameter has no gradient (backward not run).
    """
    g = param.value.grad
    if g is None:
        raise ValueError(f"adam_step: parameter {param.name!r} has no gradient")
    param.step_count += 1
    t = param.step_count
    m = param.adam_m
    v = param.adam_v
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    param.value.data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(
        param.value.data.dtype, copy=False)


def adam_step_all(params, lr: float = 1e-3, beta1: float = 0.9,
                  beta2: float = 0.999, eps: float = 1e-8):
    for p in params:
        adam_step(p, lr=lr, beta1=beta1, beta2=beta2, eps=eps)
