"""Batch losses returning (value, gradient w.r.t. the prediction).

Norms are taken over all non-batch axes; values are averaged over the batch.
"""
from __future__ import annotations

import numpy as np


def _flat(a):
    a = np.asarray(a, dtype=float)
    return a.reshape(a.shape[0], -1)


def loss_squared(y, y_hat):
    if np.shape(y) != np.shape(y_hat):
        raise ValueError(f"shape mismatch {np.shape(y)} vs {np.shape(y_hat)}")
    d = _flat(y_hat) - _flat(y)
    n = d.shape[0]
    with np.errstate(over="ignore"):  # reported as a divergence by the trainer
        value = float(np.sum(d * d) / n)
    grad = (2.0 / n) * d
    return value, grad.reshape(np.shape(y_hat))


def loss_relative(y, y_hat):
    """Mean of ||y - y_hat|| / ||y||; the gradient at y_hat = y is taken as 0."""
    if np.shape(y) != np.shape(y_hat):
        raise ValueError(f"shape mismatch {np.shape(y)} vs {np.shape(y_hat)}")
    yf = _flat(y)
    d = _flat(y_hat) - yf
    ny = np.linalg.norm(yf, axis=1)
    if np.any(ny == 0):
        raise ValueError("relative loss needs nonzero targets")
    nd = np.linalg.norm(d, axis=1)
    n = d.shape[0]
    value = float(np.mean(nd / ny))
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(nd > 0, 1.0 / (n * nd * ny), 0.0)
    grad = scale[:, None] * d
    return value, grad.reshape(np.shape(y_hat))


LOSSES = {"squared": loss_squared, "relative": loss_relative}
