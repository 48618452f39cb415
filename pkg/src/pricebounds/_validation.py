"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array, check_consistent_length

from .exceptions import InvalidInputError


def check_margin_pairs(X, y=None):
    """Return ``(current, next)`` 1-D float arrays from sklearn-style input.

    Accepts either ``X`` of shape (n, 2) holding ``[current, next]`` columns
    with ``y=None``, or ``X`` of shape (n,) / (n, 1) with current margins and
    ``y`` the next margins.
    """
    if y is None:
        X = check_array(X, dtype=float, ensure_min_samples=0)
        if X.shape[1] != 2:
            raise InvalidInputError(
                f"X must have 2 columns (current, next) when y is None, got {X.shape[1]}")
        return X[:, 0].copy(), X[:, 1].copy()
    cur = check_current_margins(X)
    nxt = check_array(np.asarray(y, dtype=float).reshape(-1, 1), dtype=float,
                      ensure_min_samples=0).ravel()
    check_consistent_length(cur, nxt)
    return cur, nxt


def check_current_margins(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if X.shape[1] < 1:
            raise InvalidInputError("X has no columns")
        X = X[:, 0]
    return check_array(X.reshape(-1, 1), dtype=float, ensure_min_samples=0).ravel()


def check_fraction(value, name, low=0.0, high=1.0, low_open=False):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise InvalidInputError(f"{name} must be a number, got {value!r}") from None
    below = value <= low if low_open else value < low
    if below or value > high or not np.isfinite(value):
        bracket = "(" if low_open else "["
        raise InvalidInputError(f"{name} must lie in {bracket}{low}, {high}], got {value}")
    return value
