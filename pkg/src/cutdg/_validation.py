"""Argument checks shared by the estimators and the CLI."""

from __future__ import annotations

import numbers

import numpy as np


def check_order(order):
    if not isinstance(order, numbers.Integral) or order not in (1, 2, 3):
        raise ValueError(f"order must be 1, 2 or 3, got {order!r}")
    return int(order)


def check_positive_int(value, name):
    if not isinstance(value, numbers.Integral) or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_nonnegative(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a non-negative finite number, got {value!r}")
    return float(value)


def check_gamma(gamma):
    g = np.asarray(gamma, dtype=float).ravel()
    if len(g) == 0 or np.any(~np.isfinite(g)) or np.any(g < 0):
        raise ValueError(f"gamma must be a non-empty sequence of non-negative numbers, "
                         f"got {gamma!r}")
    return tuple(float(t) for t in g)


def check_points(X, dim):
    """(n, dim) float array of evaluation points."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1 and dim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"expected points of shape (n, {dim}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("points contain NaN or inf")
    return X


def check_is_fitted(estimator, attribute="coef_"):
    if not hasattr(estimator, attribute):
        raise RuntimeError(f"{type(estimator).__name__} is not fitted; call fit() first")
