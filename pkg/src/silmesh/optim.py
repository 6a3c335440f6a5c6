"""Adam optimizer with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor

_f32 = np.float32


@dataclass
class AdamState:
    """First/second moment buffers and the step count for one tensor."""
    m: np.ndarray
    v: np.ndarray
    step: int = 0


def adam_update(value: np.ndarray, grad: np.ndarray, state: AdamState,
                lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
                eps: float = 1e-8) -> tuple[np.ndarray, AdamState]:
    """One Adam step on a single array; returns the new value and state."""
    if value.shape != grad.shape or value.shape != state.m.shape:
        raise ValueError("adam_update: value, grad and state shapes must match")
    t = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * (grad * grad)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_value = (value - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(_f32)
    return new_value, AdamState(m.astype(_f32), v.astype(_f32), t)


class Adam:
    """Adam over a named group of tensors, applied in sorted-name order."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = {name: AdamState(np.zeros_like(t.data), np.zeros_like(t.data))
                      for name, t in self.params.items()}

    def step(self, grads_by_id: dict[int, np.ndarray]) -> None:
        """Apply one update using a gradient map keyed by id(tensor)."""
        for name in sorted(self.params):
            p = self.params[name]
            g = grads_by_id.get(id(p))
            if g is None:
                g = np.zeros_like(p.data)
            p.data, self.state[name] = adam_update(
                p.data, np.asarray(g, dtype=_f32), self.state[name],
                self.lr, self.beta1, self.beta2, self.eps)
