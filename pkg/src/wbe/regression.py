"""Lag analysis and least-squares regression of the WBE signal on indicators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import timedelta
from typing import Mapping, Sequence

import numpy as np

from . import metrics
from .errors import DataError, NumericError
from .series import RegularSeries
from .studentt import t_ppf, t_two_sided_p

MIN_OVERLAP = 10


@dataclass(frozen=True)
class LagTable:
    lags: tuple[int, ...]
    r: tuple[float, ...]
    n: tuple[int, ...]
    best_lag: int
    best_r: float
    threshold: float
    step_days: int = 1

    @property
    def significant(self) -> bool:
        return abs(self.best_r) > self.threshold


def _aligned_pairs(x: RegularSeries, y: RegularSeries, lag: int) -> tuple[np.ndarray, np.ndarray]:
    """x at date t paired with y at date t + lag steps, both present."""
    offset_days = (x.start - y.start).days + lag * x.step_days
    if offset_days % x.step_days:
        raise DataError("series grids are not aligned")
    shift = offset_days // x.step_days
    xa, ya = x.array, y.array
    i = np.arange(len(xa))
    j = i + shift
    ok = (j >= 0) & (j < len(ya))
    xi, yj = xa[i[ok]], ya[j[ok]]
    present = ~(np.isnan(xi) | np.isnan(yj))
    return xi[present], yj[present]


def cross_correlate(x: RegularSeries, y: RegularSeries, max_lag: int = 14) -> LagTable:
    """Pearson r of ``x_t`` against ``y_{t+lag}`` for lag = 0..max_lag.

    A positive best lag means the indicator ``y`` trails the signal ``x``.
    Ties go to the smallest lag.
    """
    if x.step_days != y.step_days:
        raise DataError("cross-correlation needs series on the same grid step")
    if max_lag < 0:
        raise DataError("max_lag must be >= 0")
    lags, rs, ns = [], [], []
    for lag in range(max_lag + 1):
        xa, ya = _aligned_pairs(x, y, lag)
        if xa.size < MIN_OVERLAP:
            raise DataError(f"insufficient overlap at lag {lag}: {xa.size} < {MIN_OVERLAP}")
        lags.append(lag)
        rs.append(metrics.pearson_r(xa, ya))
        ns.append(int(xa.size))
    best = max(range(len(lags)), key=lambda i: (rs[i], -lags[i]))
    return LagTable(
        tuple(lags), tuple(rs), tuple(ns), lags[best], rs[best],
        metrics.significance_threshold(ns[best]), x.step_days,
    )


@dataclass(frozen=True)
class DesignMatrix:
    """Feature rows (without the intercept column) and the target."""

    features: np.ndarray
    target: np.ndarray
    names: tuple[str, ...] = ()
    intercept: bool = True
    dates: tuple = ()

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.features, dtype=float))
        if X.shape[0] == 1 and np.ndim(self.features) == 1:
            X = X.T
        y = np.asarray(self.target, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise DataError("feature rows and target differ in length")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise DataError("design matrix has missing or non-finite entries")
        names = tuple(self.names) or tuple(f"x{i + 1}" for i in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError("one name per feature column required")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.target.size

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def full(self, rows: np.ndarray | None = None) -> np.ndarray:
        X = self.features if rows is None else rows
        if not self.intercept:
            return X
        return np.column_stack([np.ones(X.shape[0]), X])


@dataclass(frozen=True)
class CoefficientTest:
    name: str
    estimate: float
    std_error: float
    t: float
    p: float
    significant: bool


@dataclass(frozen=True)
class RegressionFit:
    coefficients: np.ndarray  # intercept first when present
    names: tuple[str, ...]
    residual_sd: float
    r_squared: float
    rmse: float
    loocv: float
    t_stats: tuple[CoefficientTest, ...]
    dof: int
    n: int
    fitted: np.ndarray = field(repr=False)
    residuals: np.ndarray = field(repr=False)
    cov_unscaled: np.ndarray = field(repr=False)
    intercept: bool = True
    polynomial_order: int | None = None

    def expand(self, X_new) -> np.ndarray:
        """Turn raw feature rows into design rows (powers, intercept)."""
        X = np.asarray(X_new, dtype=float)
        if self.polynomial_order is not None:
            X = polynomial_features(X.ravel(), self.polynomial_order)
        d = len(self.coefficients) - int(self.intercept)
        X = X[:, None] if X.ndim == 1 and d == 1 else np.atleast_2d(X)
        if X.shape[1] != d:
            raise DataError(f"feature dimension {X.shape[1]} does not match fit ({d})")
        if self.intercept:
            X = np.column_stack([np.ones(X.shape[0]), X])
        return X


def _solve_ls(A: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-equilibrated Householder QR. Returns (beta, (A'A)^-1)."""
    norms = np.linalg.norm(A, axis=0)
    if (norms == 0).any():
        raise NumericError("singular design: a column is identically zero")
    As = A / norms
    Q, R = np.linalg.qr(As)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * diag.max():
        raise NumericError("singular design: columns are (nearly) collinear")
    beta_s = np.linalg.solve(R, Q.T @ y)
    R_inv = np.linalg.solve(R, np.eye(R.shape[0]))
    cov_s = R_inv @ R_inv.T
    return beta_s / norms, cov_s / np.outer(norms, norms)


def fit_linear(X: DesignMatrix, alpha: float = 0.05, _poly: int | None = None) -> RegressionFit:
    """Ordinary least squares with t-tests and exact leave-one-out error.

    LOOCV uses the hat-matrix identity e_i / (1 - h_ii), which equals a
    full refit with row i removed.
    """
    A = X.full()
    y = X.target
    n, k = A.shape
    dof = n - k
    if dof <= 0:
        raise DataError(f"need more observations ({n}) than parameters ({k})")
    beta, cov = _solve_ls(A, y)
    fitted = A @ beta
    resid = y - fitted
    sse = float(resid @ resid)
    sigma2 = sse / dof
    se = np.sqrt(np.clip(np.diag(cov), 0, None) * sigma2)
    names = (("intercept",) if X.intercept else ()) + X.names
    tests = []
    for name, b, s in zip(names, beta, se):
        if s > 0:
            t = b / s
            p = t_two_sided_p(t, dof)
        else:
            # exact fit: zero standard error
            t = math.copysign(math.inf, b) if b else 0.0
            p = 0.0 if b else 1.0
        tests.append(CoefficientTest(name, float(b), float(s), float(t), float(p), p < alpha))
    h = np.einsum("ij,jk,ik->i", A, cov, A)
    if (h >= 1 - 1e-12).any():
        raise NumericError("LOOCV undefined: an observation has leverage 1")
    loo = resid / (1.0 - h)
    return RegressionFit(
        coefficients=beta,
        names=names,
        residual_sd=math.sqrt(sigma2),
        r_squared=metrics.r_squared(y, fitted),
        rmse=math.sqrt(sse / n),
        loocv=math.sqrt(float(np.mean(loo**2))),
        t_stats=tuple(tests),
        dof=dof,
        n=n,
        fitted=fitted,
        residuals=resid,
        cov_unscaled=cov,
        intercept=X.intercept,
        polynomial_order=_poly,
    )


def polynomial_features(x, order: int) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    return np.column_stack([x**p for p in range(1, order + 1)])


def fit_polynomial(x: Sequence[float], y: Sequence[float], order: int = 3) -> RegressionFit:
    """Least squares of ``y`` on ``x, x², ..., x^order`` plus intercept."""
    if order < 1:
        raise DataError("polynomial order must be >= 1")
    x = np.asarray(x, dtype=float).ravel()
    if x.size <= order + 1:
        raise DataError(f"need more than {order + 1} observations for order {order}")
    names = tuple("x" if p == 1 else f"x^{p}" for p in range(1, order + 1))
    dm = DesignMatrix(polynomial_features(x, order), np.asarray(y, dtype=float), names)
    return fit_linear(dm, _poly=order)


def predict(fit: RegressionFit, X_new) -> np.ndarray:
    return fit.expand(X_new) @ fit.coefficients


def confidence_band(fit: RegressionFit, X_new, level: float = 0.90) -> tuple[np.ndarray, np.ndarray]:
    """Two-sided band for the mean response at ``level`` (default 5%-95%)."""
    if not 0.0 < level < 1.0:
        raise DataError("confidence level must lie in (0, 1)")
    if fit.dof <= 0:
        raise DataError("confidence band needs positive degrees of freedom")
    A = fit.expand(X_new)
    pred = A @ fit.coefficients
    se = fit.residual_sd * np.sqrt(np.einsum("ij,jk,ik->i", A, fit.cov_unscaled, A))
    q = t_ppf(1.0 - (1.0 - level) / 2.0, fit.dof)
    return pred - q * se, pred + q * se


def build_design(
    signal: RegularSeries,
    target: RegularSeries,
    lag: int = 0,
    covariates: Mapping[str, RegularSeries] | None = None,
    signal_name: str = "l_virus",
) -> DesignMatrix:
    """Join features at date t with the target at t + lag steps.

    Rows with any missing entry are dropped.
    """
    covariates = dict(covariates or {})
    for s in (target, *covariates.values()):
        if s.step_days != signal.step_days:
            raise DataError("all regression series must share one grid step")
    rows, ys, dates = [], [], []
    lookup = {name: dict(zip(s.dates, s.values)) for name, s in covariates.items()}
    tmap = dict(zip(target.dates, target.values))
    for d, v in zip(signal.dates, signal.values):
        yv = tmap.get(d + timedelta(days=lag * signal.step_days))
        feats = [v] + [lookup[name].get(d, math.nan) for name in covariates]
        if yv is None or math.isnan(yv) or any(f is None or math.isnan(f) for f in feats):
            continue
        rows.append(feats)
        ys.append(yv)
        dates.append(d)
    if not rows:
        raise DataError("no complete rows after joining regression series")
    return DesignMatrix(np.array(rows), np.array(ys), (signal_name, *covariates), True, tuple(dates))


def incidence(new_infections: RegularSeries, population: float) -> RegularSeries:
    """Trailing 7-day sum of daily new infections per 100 000 persons."""
    if new_infections.step_days != 1:
        raise DataError("incidence is computed from a daily series")
    if not population > 0:
        raise DataError("population must be positive")
    x = new_infections.array
    out = np.full(len(x), np.nan)
    csum = np.convolve(x, np.ones(7), mode="valid")
    out[6:] = csum * 1e5 / population
    return new_infections.with_values(out)
