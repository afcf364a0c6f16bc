"""Elastic distances between multivariate rate series.

Classic dynamic time warping and its differentiable soft-min relaxation,
both over squared-Euclidean frame costs with the monotone step set
{(1,0), (0,1), (1,1)}.  The soft variant admits an exact gradient through
the backward recursion of the same dynamic program, which drives barycenter
averaging and, through it, the classification reward.
"""

from __future__ import annotations

import numba
import numpy as np

from ..errors import ValidationError

_INF = np.inf


def _as_series(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} must be a T x D series, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite entries")
    return np.ascontiguousarray(arr)


def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = _as_series(a, "a")
    b = _as_series(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValidationError(
            f"channel counts differ: {a.shape[1]} vs {b.shape[1]}")
    return a, b


@numba.njit(cache=True)
def _cost_matrix(a, b):
    n, m = a.shape[0], b.shape[0]
    d = a.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for c in range(d):
                diff = a[i, c] - b[j, c]
                acc += diff * diff
            out[i, j] = acc
    return out


@numba.njit(cache=True)
def _dtw_dp(cost):
    n, m = cost.shape
    r = np.full((n + 1, m + 1), _INF)
    r[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            best = r[i - 1, j - 1]
            if r[i - 1, j] < best:
                best = r[i - 1, j]
            if r[i, j - 1] < best:
                best = r[i, j - 1]
            r[i, j] = cost[i - 1, j - 1] + best
    return r[n, m]


@numba.njit(cache=True, inline="always")
def _softmin3(x, y, z, gamma):
    lo = min(x, min(y, z))
    if lo == _INF:
        return _INF
    s = (np.exp(-(x - lo) / gamma) + np.exp(-(y - lo) / gamma)
         + np.exp(-(z - lo) / gamma))
    return lo - gamma * np.log(s)


@numba.njit(cache=True)
def _soft_dtw_dp(cost, gamma):
    """Forward pass; returns the padded accumulated-cost table."""
    n, m = cost.shape
    r = np.full((n + 2, m + 2), _INF)
    r[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            r[i, j] = cost[i - 1, j - 1] + _softmin3(
                r[i - 1, j - 1], r[i - 1, j], r[i, j - 1], gamma)
    return r


@numba.njit(cache=True)
def _soft_dtw_backward(cost, r, gamma):
    """Alignment-weight table of the soft-min dynamic program."""
    n, m = cost.shape
    d = np.zeros((n + 2, m + 2))
    d[1:n + 1, 1:m + 1] = cost
    e = np.zeros((n + 2, m + 2))
    for i in range(1, n + 1):
        r[i, m + 1] = -_INF
    for j in range(1, m + 1):
        r[n + 1, j] = -_INF
    r[n + 1, m + 1] = r[n, m]
    e[n + 1, m + 1] = 1.0
    for j in range(m, 0, -1):
        for i in range(n, 0, -1):
            wa = np.exp((r[i + 1, j] - r[i, j] - d[i + 1, j]) / gamma)
            wb = np.exp((r[i, j + 1] - r[i, j] - d[i, j + 1]) / gamma)
            wc = np.exp((r[i + 1, j + 1] - r[i, j] - d[i + 1, j + 1]) / gamma)
            e[i, j] = wa * e[i + 1, j] + wb * e[i, j + 1] + wc * e[i + 1, j + 1]
    return e[1:n + 1, 1:m + 1]


@numba.njit(cache=True)
def _soft_dtw_grad_from_alignment(a, b, align):
    n, d = a.shape
    m = b.shape[0]
    grad = np.zeros((n, d))
    for i in range(n):
        for j in range(m):
            w = align[i, j]
            if w != 0.0:
                for c in range(d):
                    grad[i, c] += w * 2.0 * (a[i, c] - b[j, c])
    return grad


def dtw_distance(a, b) -> float:
    """Minimum accumulated squared-Euclidean cost over monotone warping paths."""
    a, b = _check_pair(a, b)
    return float(_dtw_dp(_cost_matrix(a, b)))


def _validated_gamma(gamma) -> float:
    if not gamma > 0.0:
        raise ValidationError(f"gamma must be > 0, got {gamma}")
    return float(gamma)


def soft_dtw(a, b, gamma: float) -> float:
    """Soft-min relaxation of the warping cost; may be negative, never clamped."""
    a, b = _check_pair(a, b)
    gamma = _validated_gamma(gamma)
    r = _soft_dtw_dp(_cost_matrix(a, b), gamma)
    return float(r[a.shape[0], b.shape[0]])


def soft_dtw_gradient(a, b, gamma: float) -> np.ndarray:
    """Exact derivative of soft_dtw(a, b, gamma) with respect to ``a``."""
    a, b = _check_pair(a, b)
    gamma = _validated_gamma(gamma)
    cost = _cost_matrix(a, b)
    r = _soft_dtw_dp(cost, gamma)
    align = _soft_dtw_backward(cost, r, gamma)
    return _soft_dtw_grad_from_alignment(a, b, align)


def soft_dtw_value_and_gradient(a, b, gamma: float) -> tuple[float, np.ndarray]:
    """Value and gradient in one pass (one forward table shared)."""
    a, b = _check_pair(a, b)
    gamma = _validated_gamma(gamma)
    cost = _cost_matrix(a, b)
    r = _soft_dtw_dp(cost, gamma)
    value = float(r[a.shape[0], b.shape[0]])
    align = _soft_dtw_backward(cost, r, gamma)
    return value, _soft_dtw_grad_from_alignment(a, b, align)
