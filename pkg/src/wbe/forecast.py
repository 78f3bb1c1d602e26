"""Univariate short-term forecasting: SES and AR(p) with stationarity transforms.

Forecast chain for one training window::

    y --Box-Cox(λ)--> level --difference--> z --fit/iterate--> ẑ
    ẑ --cumulate from last level--> level forecast --inverse Box-Cox--> ŷ

Multistep forecasts are produced by iteration, feeding forecasts back as
observations. The post-sample harness walks forward over the series and
scores each forecast only against observations the fit never saw.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Sequence

import numpy as np

from . import metrics
from .errors import DataError, NumericError
from .regression import DesignMatrix, fit_linear
from .series import RegularSeries

METHODS = ("ses", "ar")
TRANSFORMS = ("none", "difference", "boxcox_then_difference")
DF_CRITICAL_5PCT = -2.86
BOXCOX_MIN_N = 20

# ---------------------------------------------------------------------------
# Box-Cox
# ---------------------------------------------------------------------------


def _positive(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if not (np.isfinite(y).all() and (y > 0).all()):
        raise DataError("Box-Cox requires positive data")
    return y


def boxcox(y, lam: float) -> np.ndarray:
    y = _positive(y)
    if lam == 0:
        return np.log(y)
    return np.expm1(lam * np.log(y)) / lam


def inv_boxcox(z, lam: float) -> np.ndarray:
    """Inverse transform. Values beyond the transform's range map to its limit."""
    z = np.asarray(z, dtype=float)
    if lam == 0:
        return np.exp(z)
    base = lam * z + 1.0
    # a forecast can leave the image of the transform; clamp instead of NaN
    base = np.maximum(base, 1e-12)
    return np.exp(np.log(base) / lam)


def boxcox_loglik(y, lam: float) -> float:
    """Profile log-likelihood of λ under normality of the transformed data.

    ``-n/2 * ln(var(y^(λ))) + (λ - 1) * Σ ln y`` with the ML (1/n) variance.
    """
    y = _positive(y)
    z = boxcox(y, lam)
    var = float(np.mean((z - z.mean()) ** 2))
    if var <= 0:
        raise NumericError("Box-Cox likelihood undefined for constant data")
    return -0.5 * y.size * math.log(var) + (lam - 1.0) * float(np.log(y).sum())


def boxcox_mle(y, lo: float = -2.0, hi: float = 2.0, step: float = 0.001, min_n: int = BOXCOX_MIN_N) -> float:
    """Grid search for the λ maximising :func:`boxcox_loglik`.

    Ties are resolved towards the smallest |λ|.
    """
    y = _positive(y)
    if y.size < min_n:
        raise DataError(f"Box-Cox MLE needs at least {min_n} values, got {y.size}")
    n_steps = int(round((hi - lo) / step))
    grid = np.round(lo + step * np.arange(n_steps + 1), 10)
    logy = np.log(y)
    sum_log = float(logy.sum())
    n = y.size
    # var((y^λ - 1)/λ) = var(expm1(λ log y)) / λ², and var(log y) at λ = 0
    e = np.expm1(grid[:, None] * logy[None, :])
    e -= e.mean(axis=1, keepdims=True)
    var = np.einsum("ij,ij->i", e, e) / n
    zero = grid == 0
    var[~zero] /= grid[~zero] ** 2
    var[zero] = logy.var()
    if (var <= 0).any():
        raise NumericError("Box-Cox likelihood undefined for constant data")
    ll = -0.5 * n * np.log(var) + (grid - 1.0) * sum_log
    best = ll.max()
    ties = grid[ll == best]
    return float(ties[np.argmin(np.abs(ties))])


def qq_points(values) -> tuple[np.ndarray, np.ndarray]:
    """Theoretical standard-normal quantiles vs. standardized sorted data.

    Plotting positions (i - 0.5) / n.
    """
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    if n < 2:
        raise DataError("Q-Q data needs at least 2 values")
    nd = NormalDist()
    theo = np.array([nd.inv_cdf((i + 0.5) / n) for i in range(n)])
    sd = x.std(ddof=1)
    sample = (x - x.mean()) / sd if sd > 0 else x - x.mean()
    return theo, sample


# ---------------------------------------------------------------------------
# Stationarity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ADFResult:
    beta: float
    t_stat: float
    stationary: bool
    critical: float
    p_plain: float
    mode: str


def adf_test(y, critical: float = DF_CRITICAL_5PCT, mode: str = "df", min_n: int = 20) -> ADFResult:
    """Augmented Dickey-Fuller test with one lagged difference and a constant.

    Fits ``Δy_t = a + β y_{t-1} + γ Δy_{t-1}``. In ``"df"`` mode the series is
    called stationary when the t statistic of β is below the Dickey-Fuller
    critical value. ``"plain"`` mode reads β with an ordinary two-sided
    t-test: a significant β means non-stationary.
    """
    if isinstance(y, RegularSeries):
        y = y.require_complete("the ADF test")
    y = np.asarray(y, dtype=float)
    if y.size < min_n:
        raise DataError(f"ADF test needs at least {min_n} values, got {y.size}")
    if mode not in ("df", "plain"):
        raise DataError(f"unknown ADF mode {mode!r}")
    dy = np.diff(y)
    target = dy[1:]
    feats = np.column_stack([y[1:-1], dy[:-1]])
    fit = fit_linear(DesignMatrix(feats, target, ("y_lag", "dy_lag")))
    beta = fit.t_stats[1]
    if mode == "df":
        stationary = beta.t < critical
    else:
        stationary = not beta.significant
    return ADFResult(beta.estimate, beta.t, bool(stationary), critical, beta.p, mode)


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 1.0:
        raise DataError(f"alpha must lie in (0, 1], got {alpha}")


def ses_one_step(y, alpha: float) -> float:
    """SES one-step forecast with the first forecast set to the first observation.

    Closed form of ``ŷ_{t+1} = α y_t + (1-α) ŷ_t``, ``ŷ_0 = y_0``.
    """
    _check_alpha(alpha)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise DataError("SES needs at least one observation")
    n = y.size
    decay = (1.0 - alpha) ** np.arange(n - 1, -1, -1)
    return float((1.0 - alpha) ** n * y[0] + alpha * (decay @ y))


def ses_fitted(y, alpha: float) -> np.ndarray:
    """All one-step forecasts ``ŷ_0 .. ŷ_N`` of the SES recursion."""
    _check_alpha(alpha)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise DataError("SES needs at least one observation")
    out = np.empty(y.size + 1)
    out[0] = y[0]
    for t, v in enumerate(y):
        out[t + 1] = alpha * v + (1.0 - alpha) * out[t]
    return out


def ses_forecast(y, alpha: float, horizon: int) -> np.ndarray:
    """Iterated SES forecast. Feeding forecasts back leaves them unchanged,
    so every step equals the one-step value."""
    if horizon < 1:
        raise DataError("horizon must be >= 1")
    return np.full(horizon, ses_one_step(y, alpha))


@dataclass(frozen=True)
class ARFit:
    c: float
    phi: np.ndarray
    sse: float
    n_obs: int

    @property
    def p(self) -> int:
        return self.phi.size

    @property
    def mean(self) -> float:
        """Unconditional mean c / (1 - Σφ) of a stationary model."""
        return self.c / (1.0 - float(self.phi.sum()))


def lag_matrix(y: np.ndarray, p: int) -> np.ndarray:
    """Rows ``(y_{t-1}, ..., y_{t-p})`` for t = p .. n-1."""
    n = y.size
    return np.column_stack([y[p - j : n - j] for j in range(1, p + 1)])


def ar_fit(y, p: int) -> ARFit:
    """Ordinary least squares of y_t on 1, y_{t-1}, ..., y_{t-p}."""
    y = np.asarray(y, dtype=float)
    if p < 1:
        raise DataError("AR order must be >= 1")
    if y.size <= 2 * p + 2:
        raise DataError(f"AR({p}) needs more than {2 * p + 2} observations, got {y.size}")
    X = np.column_stack([np.ones(y.size - p), lag_matrix(y, p)])
    target = y[p:]
    coef, _, rank, sv = np.linalg.lstsq(X, target, rcond=None)
    if rank < X.shape[1] or sv[-1] <= 1e-10 * sv[0]:
        raise NumericError(f"singular lag matrix for AR({p}) (constant series?)")
    resid = target - X @ coef
    return ARFit(float(coef[0]), coef[1:].copy(), float(resid @ resid), int(target.size))


def ar_forecast(model: ARFit, y, horizon: int) -> np.ndarray:
    """Iterate one-step AR predictions; the noise term is set to zero."""
    y = np.asarray(y, dtype=float)
    if y.size < model.p:
        raise DataError(f"history shorter than AR order {model.p}")
    if horizon < 1:
        raise DataError("horizon must be >= 1")
    p = model.p
    buf = np.empty(p + horizon)
    buf[:p] = y[-p:] if p else ()
    rev_phi = model.phi[::-1]
    for h in range(horizon):
        buf[p + h] = model.c + float(rev_phi @ buf[h : p + h])
    return buf[p:].copy()


# ---------------------------------------------------------------------------
# Transform chains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformChain:
    """Transform applied to one training window, with what is needed to undo it.

    ``anchors`` are (first level, last level), where the level is the series
    after the optional Box-Cox step and before differencing.
    """

    kind: str
    lam: float | None = None
    anchors: tuple[float, float] = (math.nan, math.nan)

    def __post_init__(self):
        if self.kind not in TRANSFORMS:
            raise DataError(f"unknown transform {self.kind!r}")
        if (self.kind == "boxcox_then_difference") != (self.lam is not None):
            raise DataError("λ must be given exactly for the Box-Cox chain")

    @property
    def differenced(self) -> bool:
        return self.kind != "none"

    @classmethod
    def fit(cls, y, kind: str, lam: float | None = None) -> tuple["TransformChain", np.ndarray]:
        """Build the chain for window ``y`` and return it with the transformed data.

        For the Box-Cox chain λ is estimated from ``y`` when not supplied.
        """
        y = np.asarray(y, dtype=float)
        if y.size < 2 and kind != "none":
            raise DataError("differencing needs at least 2 values")
        if kind == "boxcox_then_difference":
            lam = boxcox_mle(y) if lam is None else float(lam)
            level = boxcox(y, lam)
        else:
            lam = None
            level = y
        chain = cls(kind, lam, (float(level[0]), float(level[-1])))
        z = np.diff(level) if kind != "none" else level.copy()
        return chain, z

    def _from_level(self, level: np.ndarray) -> np.ndarray:
        return inv_boxcox(level, self.lam) if self.lam is not None else level

    def invert_forecast(self, zf) -> np.ndarray:
        """Map forecasts of the transformed series back to the original scale."""
        zf = np.asarray(zf, dtype=float)
        level = self.anchors[1] + np.cumsum(zf) if self.differenced else zf
        return self._from_level(level)

    def invert_window(self, z) -> np.ndarray:
        """Reconstruct the original training window from its transformed form."""
        z = np.asarray(z, dtype=float)
        if self.differenced:
            level = np.concatenate(([self.anchors[0]], self.anchors[0] + np.cumsum(z)))
        else:
            level = z
        return self._from_level(level)


@dataclass(frozen=True)
class ForecastModel:
    method: str
    transform: TransformChain
    alpha: float | None = None
    order_p: int | None = None
    phi: tuple[float, ...] = ()
    c: float | None = None
    sse: float = math.nan
    n_fit: int = 0
    history: np.ndarray = field(default=None, repr=False)

    @property
    def n_params(self) -> int:
        return 1 if self.method == "ses" else self.order_p + 1

    def forecast(self, horizon: int) -> np.ndarray:
        if self.method == "ses":
            zf = ses_forecast(self.history, self.alpha, horizon)
        else:
            fit = ARFit(self.c, np.asarray(self.phi), self.sse, self.n_fit)
            zf = ar_forecast(fit, self.history, horizon)
        return self.transform.invert_forecast(zf)


def fit_model(y, method: str, transform: str, param, lam: float | None = None) -> ForecastModel:
    """Fit SES (``param`` = α) or AR (``param`` = p) to a transformed window."""
    if method not in METHODS:
        raise DataError(f"unknown forecast method {method!r}")
    if isinstance(y, RegularSeries):
        y = y.require_complete("forecasting")
    chain, z = TransformChain.fit(y, transform, lam)
    if method == "ses":
        alpha = float(param)
        fitted = ses_fitted(z, alpha)[:-1]
        sse = float(np.sum((z - fitted) ** 2))
        return ForecastModel("ses", chain, alpha=alpha, sse=sse, n_fit=z.size, history=z)
    p = int(param)
    ar = ar_fit(z, p)
    return ForecastModel(
        "ar", chain, order_p=p, phi=tuple(ar.phi.tolist()), c=ar.c,
        sse=ar.sse, n_fit=ar.n_obs, history=z,
    )


def fit_and_forecast(y, method: str, transform: str, param, horizon: int, lam: float | None = None) -> np.ndarray:
    """Transform, fit, iterate and back-transform; no bias correction."""
    return fit_model(y, method, transform, param, lam).forecast(horizon)


# ---------------------------------------------------------------------------
# Post-sample evaluation
# ---------------------------------------------------------------------------

DEFAULT_ALPHAS = tuple(round(0.1 * i, 1) for i in range(1, 11))


@dataclass(frozen=True)
class EvaluationGrid:
    horizons: tuple[int, ...] | None = None  # steps; default 7/14 days
    ses_alphas: tuple[float, ...] = DEFAULT_ALPHAS
    ar_orders: tuple[int, ...] | None = None  # default 1..p_max
    ses_transforms: tuple[str, ...] = TRANSFORMS
    ar_transforms: tuple[str, ...] = TRANSFORMS
    p_max: int = 10

    def horizons_for(self, step_days: int) -> tuple[int, ...]:
        if self.horizons is not None:
            return tuple(self.horizons)
        return (7, 14) if step_days == 1 else (1, 2)

    def orders(self) -> tuple[int, ...]:
        return tuple(self.ar_orders) if self.ar_orders is not None else tuple(range(1, self.p_max + 1))

    def combos(self):
        for t in self.ses_transforms:
            for a in self.ses_alphas:
                yield "ses", t, a
        for t in self.ar_transforms:
            for p in self.orders():
                yield "ar", t, p


@dataclass
class EvaluationCell:
    method: str
    transform: str
    param: float
    horizon: int
    rmse: float
    aic: float | None
    n_origins: int
    forecasts: np.ndarray = field(default=None, repr=False)
    observed: np.ndarray = field(default=None, repr=False)

    @property
    def key(self) -> tuple:
        return (self.method, self.transform, self.param, self.horizon)


@dataclass
class EvaluationReport:
    cells: list[EvaluationCell]
    step_days: int
    first_origin: int  # length of the first training window
    n: int
    lam: float | None
    lambda_scope: str
    scoring: str
    origin_dates: list = field(default_factory=list)  # last training date per origin

    def cell(self, method, transform, param, horizon) -> EvaluationCell:
        for c in self.cells:
            if c.key == (method, transform, param, horizon):
                return c
        raise KeyError((method, transform, param, horizon))

    def best(self, method: str, horizon: int, by: str = "rmse", transform: str | None = None) -> EvaluationCell:
        pool = [
            c for c in self.cells
            if c.method == method and c.horizon == horizon
            and (transform is None or c.transform == transform)
            and math.isfinite(c.rmse)
        ]
        if not pool:
            raise KeyError((method, horizon, transform))
        if by == "aic":
            return min(pool, key=lambda c: (c.aic if c.aic is not None else math.inf, c.rmse))
        return min(pool, key=lambda c: c.rmse)

    def rows(self) -> list[dict]:
        return [
            {
                "method": c.method, "transform": c.transform, "param": c.param,
                "horizon_steps": c.horizon, "horizon_days": c.horizon * self.step_days,
                "rmse": c.rmse, "aic": c.aic, "n_origins": c.n_origins,
            }
            for c in self.cells
        ]


def _ses_walk_forward(values, transform, alpha, origins, f_max, lam) -> np.ndarray:
    """SES forecasts from every origin in one causal pass.

    With λ fixed, the transformed training window ending at origin i is a
    prefix of the transformed full series, and the SES recursion only looks
    backwards, so ``ses_fitted`` over the full series holds every origin's
    one-step forecast. Equal to refitting per origin.
    """
    chain, z = TransformChain.fit(values, transform, lam if transform == "boxcox_then_difference" else None)
    level = boxcox(values, chain.lam) if chain.lam is not None else values
    f1 = ses_fitted(z, alpha)
    steps = np.arange(1, f_max + 1)
    out = np.empty((len(origins), f_max))
    for oi, i in enumerate(origins):
        if chain.differenced:
            out[oi] = level[i - 1] + steps * f1[i - 1]
        else:
            out[oi] = f1[i]
    return chain._from_level(out)


def _ar_walk_forward(values, transform, p, origins, f_max, lam) -> np.ndarray:
    """AR forecasts from every origin, all windows solved in one batch.

    Each window's lag matrix is a prefix of the full one; rows past the
    window end are zeroed, which leaves its least-squares solution unchanged.
    Equal to :func:`ar_fit` per origin up to rounding.
    """
    chain, z = TransformChain.fit(values, transform, lam if transform == "boxcox_then_difference" else None)
    level = boxcox(values, chain.lam) if chain.lam is not None else values
    ends = np.asarray(origins) - (1 if chain.differenced else 0)  # window length in z
    if ends.min() <= 2 * p + 2:
        raise DataError(f"AR({p}) needs more than {2 * p + 2} observations, got {ends.min()}")
    A = np.column_stack([np.ones(z.size - p), lag_matrix(z, p)])
    target = z[p:]
    rows = np.arange(A.shape[0])
    mask = (rows[None, :] < (ends - p)[:, None]).astype(float)
    Ab = A[None, :, :] * mask[:, :, None]
    norms = np.sqrt(np.einsum("bij,bij->bj", Ab, Ab))
    if (norms == 0).any():
        raise NumericError(f"singular lag matrix for AR({p}) (constant series?)")
    # R of the design augmented with the target carries Q'y in its last column
    aug = np.concatenate([Ab / norms[:, None, :], (target[None, :] * mask)[:, :, None]], axis=2)
    R_aug = np.linalg.qr(aug, mode="r")
    R, qty = R_aug[:, : p + 1, : p + 1], R_aug[:, : p + 1, p + 1]
    diag = np.abs(np.diagonal(R, axis1=1, axis2=2))
    if (diag.min(axis=1) <= 1e-10 * diag.max(axis=1)).any():
        raise NumericError(f"singular lag matrix for AR({p}) (constant series?)")
    coef = np.linalg.solve(R, qty[:, :, None])[:, :, 0] / norms
    c, rev_phi = coef[:, 0], coef[:, :0:-1]
    buf = np.empty((len(origins), p + f_max))
    for oi, m in enumerate(ends):
        buf[oi, :p] = z[m - p : m]
    for h in range(f_max):
        buf[:, p + h] = c + np.einsum("bj,bj->b", rev_phi, buf[:, h : p + h])
    zf = buf[:, p:]
    if chain.differenced:
        out = level[np.asarray(origins) - 1][:, None] + np.cumsum(zf, axis=1)
    else:
        out = zf
    return chain._from_level(out)


def post_sample_evaluate(
    y: RegularSeries,
    grid: EvaluationGrid | None = None,
    lam: float | None = None,
    lambda_scope: str = "full",
    scoring: str = "endpoint",
    min_train: int | None = None,
) -> EvaluationReport:
    """Walk-forward post-sample evaluation over a grid of models.

    At origin ``i`` every model is fitted on ``y[:i]`` only and forecasts
    ``f_p`` steps; the error is taken at the horizon endpoint (or averaged
    over the horizon with ``scoring="mean"``). Origins run from
    ``max(p_max, min_train)`` to ``N - f_p``. ``min_train`` defaults to the
    shortest window on which AR(p_max) can be fitted after differencing.
With per-window λ the first window also holds at least 20 values.

    λ for Box-Cox chains: given explicitly, estimated once on the whole
    series (``lambda_scope="full"``), or re-estimated on every training
    window (``"origin"``).

    AIC per cell is ``n log(SSE/n) + 2k`` over the post-sample errors, with
    k the model's parameter count.
    """
    grid = grid or EvaluationGrid()
    if scoring not in ("endpoint", "mean"):
        raise DataError(f"unknown scoring {scoring!r}")
    if lambda_scope not in ("full", "origin"):
        raise DataError(f"unknown lambda scope {lambda_scope!r}")
    values = y.require_complete("forecast evaluation")
    n = values.size
    horizons = grid.horizons_for(y.step_days)
    f_max = max(horizons)
    p_max = grid.p_max
    min_train = 2 * max(grid.orders()) + 4 if min_train is None else min_train
    first = max(p_max, min_train)
    uses_boxcox = "boxcox_then_difference" in grid.ses_transforms + grid.ar_transforms
    if uses_boxcox and lambda_scope == "origin":
        first = max(first, BOXCOX_MIN_N)  # every window must support a λ estimate
    if n < p_max + f_max + 10 or n - f_max - first + 1 < 1:
        raise DataError(
            f"series too short for post-sample evaluation: need at least "
            f"{max(p_max + f_max + 10, first + f_max)} values, got {n}"
        )
    scope = "given" if lam is not None and lambda_scope == "full" else lambda_scope
    if uses_boxcox and lam is None and lambda_scope == "full":
        lam = boxcox_mle(values)
    origins = list(range(first, n - f_max + 1))
    n_org = len(origins)

    cells = []
    for method, transform, param in grid.combos():
        per_origin = transform == "boxcox_then_difference" and lambda_scope == "origin"
        if method == "ses" and not per_origin:
            fc = _ses_walk_forward(values, transform, float(param), origins, f_max, lam)
        elif not per_origin:
            fc = _ar_walk_forward(values, transform, int(param), origins, f_max, lam)
        else:
            fc = np.empty((n_org, f_max))
            for oi, i in enumerate(origins):
                window = values[:i]
                lam_i = None
                if transform == "boxcox_then_difference":
                    lam_i = boxcox_mle(window) if per_origin else lam
                fc[oi] = fit_and_forecast(window, method, transform, param, f_max, lam_i)
        k = 1 if method == "ses" else int(param) + 1
        for h in horizons:
            idx = np.array(origins)
            if scoring == "endpoint":
                obs = values[idx + h - 1]
                pred = fc[:, h - 1]
                sq = (obs - pred) ** 2
            else:
                obs = np.stack([values[i : i + h] for i in origins])
                pred = fc[:, :h]
                sq = np.mean((obs - pred) ** 2, axis=1)
            sse = float(np.sum(sq))
            rmse = math.sqrt(sse / n_org) if np.isfinite(sse) else math.inf
            aic = metrics.aic_ls(n_org, sse, k) if 0 < sse < math.inf else None
            cells.append(EvaluationCell(
                method, transform, param, h, rmse, aic, n_org,
                forecasts=pred if pred.ndim == 1 else pred[:, -1],
                observed=obs if obs.ndim == 1 else obs[:, -1],
            ))
    return EvaluationReport(
        cells, y.step_days, first, n, lam, scope, scoring,
        [y.date_at(i - 1) for i in origins],
    )
