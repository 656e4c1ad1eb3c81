"""Per-sample losses and their derivatives in network-output space.

Two kinds are supported: "mse" is 0.5 * ||y - f||^2 against a real target
vector, "cross_entropy" is softmax cross-entropy against an integer class
index, computed through a log-sum-exp so large logits stay finite.
"""

from __future__ import annotations

import numpy as np

KINDS = ("mse", "cross_entropy")


def _check_kind(kind: str):
    if kind not in KINDS:
        raise ValueError(f"unknown loss kind {kind!r}; expected one of {KINDS}")


def _log_sum_exp(f: np.ndarray) -> float:
    m = float(np.max(f))
    return m + float(np.log(np.sum(np.exp(f - m))))


def softmax(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    p = np.exp(f - np.max(f))
    return p / np.sum(p)


def value(kind: str, f: np.ndarray, y) -> float:
    """Loss at output vector f for target y (vector for mse, index for ce)."""
    _check_kind(kind)
    f = np.asarray(f, dtype=np.float64)
    if kind == "mse":
        r = f - np.asarray(y, dtype=np.float64)
        return 0.5 * float(r @ r)
    return _log_sum_exp(f) - float(f[int(y)])


def grad_f(kind: str, f: np.ndarray, y) -> np.ndarray:
    """Gradient of the loss with respect to the outputs f."""
    _check_kind(kind)
    f = np.asarray(f, dtype=np.float64)
    if kind == "mse":
        return f - np.asarray(y, dtype=np.float64)
    g = softmax(f)
    g[int(y)] -= 1.0
    return g


def hess_f(kind: str, f: np.ndarray, y=None) -> np.ndarray:
    """Hessian of the loss with respect to the outputs f.

    mse gives the identity exactly.  cross_entropy gives diag(p) - p p^T
    with p = softmax(f): positive semi-definite with rank K - 1, rows
    summing to zero, and the whole matrix vanishing as p approaches a
    one-hot vector.
    """
    _check_kind(kind)
    f = np.asarray(f, dtype=np.float64)
    if kind == "mse":
        return np.eye(f.shape[0])
    p = softmax(f)
    return np.diag(p) - np.outer(p, p)


def residual_energy(kind: str, f: np.ndarray, y) -> float:
    """Squared norm of the output-space loss gradient, ||grad_f||^2."""
    g = grad_f(kind, f, y)
    return float(g @ g)
