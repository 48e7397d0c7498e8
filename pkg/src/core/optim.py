"""
Adam optimizer and gradient-norm clipping over lists of float64 arrays.
"""

from typing import Dict, List, Sequence, Tuple

import numpy as np


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_grad_norm(grads: Sequence[np.ndarray], max_norm: float) -> Tuple[List[np.ndarray], float]:
    """
    Rescale gradients so their joint L2 norm is at most ``max_norm``.

    Returns:
        Tuple of (clipped gradients, norm before clipping)
    """
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return [np.array(g) for g in grads], norm
    factor = max_norm / norm
    return [g * factor for g in grads], norm


class Adam:
    """Adam with bias correction; parameters are updated in place."""

    def __init__(self, params: Sequence[np.ndarray], lr: float,
                 betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p) for p in self.params]
        self._v = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValueError(f"Adam.step: expected {len(self.params)} gradients, got {len(grads)}")
        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(self.params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def snapshot(self) -> Dict[str, object]:
        return {
            "params": [p.copy() for p in self.params],
            "m": [m.copy() for m in self._m],
            "v": [v.copy() for v in self._v],
            "step_count": self.step_count,
        }

    def restore(self, state: Dict[str, object]) -> None:
        for target, saved in zip(self.params, state["params"]):
            np.copyto(target, saved)
        for target, saved in zip(self._m, state["m"]):
            np.copyto(target, saved)
        for target, saved in zip(self._v, state["v"]):
            np.copyto(target, saved)
        self.step_count = state["step_count"]
