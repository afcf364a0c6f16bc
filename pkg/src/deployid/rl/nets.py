"""Minimal dense networks and optimizer for the policy-gradient learner.

Plain numpy multilayer perceptrons (tanh hidden activations, linear output,
orthogonal initialization) with explicit forward caches and hand-written
backpropagation, plus Adam and global-norm gradient clipping.  Everything
operates on lists of parameter arrays in a fixed canonical order so the
whole parameter set can be flattened for finite-difference verification.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal weight matrix scaled by gain."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # deterministic orientation
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def mlp_init(sizes: list[int], rng: np.random.Generator,
             hidden_gain: float = np.sqrt(2.0), out_gain: float = 1.0) -> list[np.ndarray]:
    """Alternating [W, b, W, b, ...] for a tanh MLP with a linear head."""
    if len(sizes) < 2:
        raise ValidationError("an MLP needs at least input and output sizes")
    params: list[np.ndarray] = []
    for i in range(len(sizes) - 1):
        gain = out_gain if i == len(sizes) - 2 else hidden_gain
        params.append(orthogonal((sizes[i], sizes[i + 1]), gain, rng))
        params.append(np.zeros(sizes[i + 1]))
    return params


def mlp_forward(params: list[np.ndarray], x: np.ndarray):
    """Returns (output, cache). Hidden layers tanh, final layer linear."""
    if x.ndim != 2:
        raise ValidationError(f"expected a batch (B, in), got shape {x.shape}")
    activations = [x]
    h = x
    n_layers = len(params) // 2
    for layer in range(n_layers):
        z = h @ params[2 * layer] + params[2 * layer + 1]
        h = z if layer == n_layers - 1 else np.tanh(z)
        activations.append(h)
    return h, activations


def mlp_backward(params: list[np.ndarray], activations: list[np.ndarray],
                 grad_out: np.ndarray) -> list[np.ndarray]:
    """Gradients of a scalar loss with respect to every weight and bias.

    ``grad_out`` is dLoss/d(output) for the batch; returns grads in the same
    layout as ``params``.
    """
    n_layers = len(params) // 2
    grads: list[np.ndarray] = [np.empty(0)] * len(params)
    delta = grad_out
    for layer in range(n_layers - 1, -1, -1):
        h_in = activations[layer]
        grads[2 * layer] = h_in.T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer > 0:
            h_prev = activations[layer]  # post-activation of previous layer
            delta = (delta @ params[2 * layer].T) * (1.0 - h_prev * h_prev)
    return grads


def global_norm(arrays: list[np.ndarray]) -> float:
    total = 0.0
    for a in arrays:
        total += float(np.sum(a * a))
    return float(np.sqrt(total))


def clip_global_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Scale the whole gradient list so its joint norm is at most max_norm."""
    norm = global_norm(grads)
    scale = max_norm / (norm + 1e-6)
    if scale < 1.0:
        grads = [g * scale for g in grads]
    return grads, norm


class Adam:
    """Adam over a list of parameter arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float = 3e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-5):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        if len(grads) != len(self.params):
            raise ValidationError("gradient list does not match parameter list")
        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)

    def state_arrays(self) -> dict:
        return {"m": self.m, "v": self.v, "t": self.t}


def one_hot(index: int, size: int) -> np.ndarray:
    if not 0 <= index < size:
        raise ValidationError(f"index {index} outside [0, {size})")
    out = np.zeros(size)
    out[index] = 1.0
    return out


def one_hot_batch(indices, size: int) -> np.ndarray:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 1:
        raise ValidationError("indices must be 1-D")
    if np.any(indices < 0) or np.any(indices >= size):
        raise ValidationError("one-hot index outside range")
    out = np.zeros((indices.shape[0], size))
    out[np.arange(indices.shape[0]), indices] = 1.0
    return out
