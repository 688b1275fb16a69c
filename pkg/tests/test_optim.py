"""Adam optimizer contract tests."""

import numpy as np
import pytest

from causalmix.errors import ContractError
from causalmix.optim import DEFAULT_HYPER, AdamState, adam_step


def test_defaults():
    assert DEFAULT_HYPER == {"lr": 5e-4, "beta1": 0.9, "beta2": 0.999,
                             "eps": 1e-8}


def test_zero_gradients_leave_params_unchanged():
    # [TRIVIAL] zero gradients with fresh moments: params unchanged
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState(params)
    adam_step(params, {"w": np.zeros(2)}, state)
    assert np.array_equal(params["w"], [1.0, -2.0])
    # nonzero moments decay toward zero under zero gradients
    state.m["w"][:] = 1.0
    state.v["w"][:] = 1.0
    adam_step(params, {"w": np.zeros(2)}, state)
    assert np.all(state.m["w"] < 1.0)
    assert np.all(state.v["w"] < 1.0)


def test_first_step_magnitude_is_lr():
    # [TRIVIAL] first bias-corrected Adam step has magnitude ~= lr
    params = {"p": np.array([1.0])}
    state = AdamState(params)
    adam_step(params, {"p": np.array([1.0])}, state, {"lr": 0.1})
    assert abs(params["p"][0] - 0.9) < 1e-6


def test_quadratic_convergence():
    # [DERIVED] 100 steps on f(p) = (p - 3)^2 from p = 0
    params = {"p": np.array([0.0])}
    state = AdamState(params)
    for _ in range(100):
        g = 2.0 * (params["p"] - 3.0)
        adam_step(params, {"p": g}, state, {"lr": 0.1})
    assert abs(params["p"][0] - 3.0) < 0.1


def test_determinism():
    def run():
        params = {"p": np.array([0.5, -0.5])}
        state = AdamState(params)
        for t in range(10):
            adam_step(params, {"p": np.array([0.1 * t, -0.2])}, state)
        return params["p"].copy()

    assert np.array_equal(run(), run())


def test_shape_mismatch_rejected():
    params = {"p": np.zeros(3)}
    state = AdamState(params)
    with pytest.raises(ContractError):
        adam_step(params, {"p": np.zeros(2)}, state)
