"""Decoupled-weight-decay Adam with bias correction."""

from __future__ import annotations

import numpy as np

from ..errors import MissingGrad
from .checkpoint import ModelCheckpoint


def adamw_step(ckpt: ModelCheckpoint, lr: float, beta1: float = 0.9,
               beta2: float = 0.999, eps: float = 1e-8,
               weight_decay: float = 0.01) -> None:
    """One update over every unfrozen parameter; frozen ones are untouched.

    p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
    """
    trainable = ckpt.trainable()
    for name, t in trainable:
        if t.grad is None:
            raise MissingGrad(f"parameter {name!r} has no gradient")
    ckpt.opt_step += 1
    step = ckpt.opt_step
    bc1 = 1.0 - beta1 ** step
    bc2 = 1.0 - beta2 ** step
    for name, t in trainable:
        g = t.grad
        m = ckpt.opt_m.get(name)
        v = ckpt.opt_v.get(name)
        if m is None:
            m = np.zeros_like(t.values)
            v = np.zeros_like(t.values)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        ckpt.opt_m[name] = m
        ckpt.opt_v[name] = v
        m_hat = m / bc1
        v_hat = v / bc2
        t.values = t.values - lr * (m_hat / (np.sqrt(v_hat) + eps)
                                    + weight_decay * t.values)
