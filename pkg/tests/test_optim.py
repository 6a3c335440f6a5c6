"""Adam update oracles."""

import numpy as np
import pytest

from silmesh.autodiff import Tensor
from silmesh.optim import Adam, AdamState, adam_update


def test_first_step_moves_by_lr_signs():
    # with bias correction the first step is exactly lr * sign(g) (eps aside)
    value = np.zeros(4, np.float32)
    grad = np.array([1.0, -2.0, 0.5, -0.25], np.float32)
    state = AdamState(np.zeros(4, np.float32), np.zeros(4, np.float32))
    new, state = adam_update(value, grad, state, lr=1e-3)
    assert new == pytest.approx(-1e-3 * np.sign(grad), rel=1e-4)
    assert state.step == 1


def test_two_steps_match_reference_formula():
    lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
    v0 = np.array([0.3], np.float32)
    g1, g2 = np.array([0.7], np.float32), np.array([-0.2], np.float32)

    m = v = 0.0
    x = float(v0[0])
    for t, g in enumerate([float(g1[0]), float(g2[0])], start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)

    state = AdamState(np.zeros(1, np.float32), np.zeros(1, np.float32))
    out, state = adam_update(v0, g1, state, lr=lr)
    out, state = adam_update(out, g2, state, lr=lr)
    assert out[0] == pytest.approx(x, rel=1e-5)
    assert state.step == 2


def test_shape_mismatch_rejected():
    state = AdamState(np.zeros(2, np.float32), np.zeros(2, np.float32))
    with pytest.raises(ValueError):
        adam_update(np.zeros(3, np.float32), np.zeros(3, np.float32), state)


def test_group_converges_on_quadratic():
    # minimize sum((x - c)^2); Adam should close most of the gap
    c = np.array([1.0, -2.0, 0.5], np.float32)
    p = Tensor(np.zeros(3, np.float32), requires_grad=True)
    opt = Adam({"p": p}, lr=0.05)
    for _ in range(400):
        opt.step({id(p): 2.0 * (p.data - c)})
    assert np.abs(p.data - c).max() < 1e-2


def test_missing_grad_means_zero_update_direction():
    p = Tensor(np.full(2, 5.0, np.float32), requires_grad=True)
    opt = Adam({"p": p}, lr=0.1)
    opt.step({})
    assert np.array_equal(p.data, np.full(2, 5.0, np.float32))
    assert opt.state["p"].step == 1
