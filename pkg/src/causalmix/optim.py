"""Bias-corrected Adam over named parameter arrays."""

from __future__ import annotations

import numpy as np

from .errors import ContractError

DEFAULT_HYPER = {"lr": 5e-4, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8}


class AdamState:
    """First/second moment estimates plus the step counter."""

    def __init__(self, params):
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0


def adam_step(params, grads, state, hyper=None):
    """One in-place Adam update. `params` and `grads` map name -> ndarray."""
    h = dict(DEFAULT_HYPER)
    if hyper:
        h.update(hyper)
    lr, b1, b2, eps = h["lr"], h["beta1"], h["beta2"], h["eps"]
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ContractError(
                f"gradient shape {g.shape} != param shape {p.shape} for '{name}'")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state
