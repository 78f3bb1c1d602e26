"""Goodness-of-fit, similarity and model-selection metrics.

Throughout, ``x`` holds observations and ``y`` model values.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, NumericError


def _paired(x, y, min_len: int = 1) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DataError(f"length mismatch: {x.size} observations vs {y.size} model values")
    if x.size < min_len:
        raise DataError(f"need at least {min_len} pairs, got {x.size}")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataError("metric inputs must be finite")
    return x, y


def rmse(x, y) -> float:
    x, y = _paired(x, y)
    return math.sqrt(float(np.mean((x - y) ** 2)))


def r_squared(x, y) -> float:
    """Coefficient of determination; negative when worse than the mean of ``x``."""
    x, y = _paired(x, y, 2)
    ss_tot = float(np.sum((x - x.mean()) ** 2))
    if ss_tot == 0.0:
        raise NumericError("undefined R²: observations are constant")
    return 1.0 - float(np.sum((x - y) ** 2)) / ss_tot


def msim(x, y) -> float:
    """Mean similarity, the average of ``1 - |y-x| / (|y|+|x|)``."""
    x, y = _paired(x, y)
    denom = np.abs(x) + np.abs(y)
    if (denom == 0).any():
        raise NumericError("MSIM undefined: a pair has |x| + |y| = 0")
    return float(np.mean(1.0 - np.abs(y - x) / denom))


def pearson_r(x, y) -> float:
    x, y = _paired(x, y, 2)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise NumericError("Pearson r undefined for a constant series")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def significance_threshold(n: int) -> float:
    """Smallest |r| that is significant at p < 0.05 for ``n`` pairs."""
    if n < 2:
        raise DataError("significance threshold needs n >= 2")
    return 1.96 / math.sqrt(n)


def aic_ls(n: int, sse: float, k: int) -> float:
    """Least-squares AIC, ``n log(sse/n) + 2k`` (natural log)."""
    if n < 1 or k < 0:
        raise DataError("aic_ls needs n >= 1 and k >= 0")
    if not sse > 0:
        raise NumericError("perfect fit, AIC undefined in this form")
    return n * math.log(sse / n) + 2 * k


FitPredict = Callable[[np.ndarray | None, np.ndarray, np.ndarray | None], float]


def loocv_score(fit_predict: FitPredict, y: Sequence[float], X=None) -> float:
    """Leave-one-out cross-validation error in RMSE form.

    ``fit_predict(X_train, y_train, x_test)`` must fit on the training rows and
    return the prediction for the held-out row. ``X`` may be ``None`` for
    models without covariates, in which case ``None`` is passed through.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 3:
        raise DataError("LOOCV needs at least 3 observations")
    if X is not None:
        X = np.asarray(X, dtype=float)
        if X.shape[0] != n:
            raise DataError("X and y differ in length")
    errors = np.empty(n)
    mask = np.ones(n, dtype=bool)
    for i in range(n):
        mask[i] = False
        try:
            pred = fit_predict(
                None if X is None else X[mask], y[mask], None if X is None else X[i]
            )
        except Exception as exc:
            raise NumericError(f"LOOCV fold {i} failed: {exc}") from exc
        finally:
            mask[i] = True
        errors[i] = y[i] - float(pred)
    return math.sqrt(float(np.mean(errors**2)))
