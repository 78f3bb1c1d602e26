"""Simple moving average and LOESS smoothing with data-driven parameter choice."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date
from typing import Iterable, Sequence

import numpy as np

from . import metrics
from .errors import DataError, NumericError
from .series import RegularSeries, ScatteredSeries

DEFAULT_SMA_CANDIDATES = (3, 5, 7, 9)
DEFAULT_LOESS_CANDIDATES = (7, 9, 11, 15, 21)


@dataclass(frozen=True)
class SmootherSpec:
    method: str  # "sma" or "loess"
    window_k: int = 3
    neighbors_kL: int = 11

    def __post_init__(self):
        if self.method not in ("sma", "loess"):
            raise DataError(f"unknown smoother {self.method!r}")
        if self.method == "sma" and (self.window_k < 1 or self.window_k % 2 == 0):
            raise DataError("window must be odd")
        if self.method == "loess" and self.neighbors_kL < 3:
            raise DataError("LOESS needs at least 3 neighbours")

    @property
    def label(self) -> str:
        return f"sma{self.window_k}" if self.method == "sma" else f"loess{self.neighbors_kL}"


def sma(s: RegularSeries, k: int) -> RegularSeries:
    """Centred moving average; the (k-1)/2 entries at each end are missing."""
    if k < 1 or k % 2 == 0:
        raise DataError("window must be odd")
    x = s.require_complete("smoothing")
    if k > len(x):
        raise DataError(f"window {k} longer than series ({len(x)})")
    h = (k - 1) // 2
    out = np.full(len(x), np.nan)
    out[h : len(x) - h] = np.convolve(x, np.ones(k), mode="valid") / k
    return s.with_values(out)


def _loess_eval(t: np.ndarray, y: np.ndarray, x0: float, k: int) -> float:
    dist = np.abs(t - x0)
    idx = np.argsort(dist, kind="stable")[:k]
    d = dist[idx]
    d_max = d.max()
    if d_max == 0:
        raise NumericError("degenerate LOESS neighbourhood: all neighbours share one date")
    w = (1.0 - (d / d_max) ** 3) ** 3
    tt, yy = t[idx], y[idx]
    pos = w > 0
    sw = w.sum()
    if np.unique(tt[pos]).size < 2:
        # a single date carries weight (ties at d_max, e.g. k=3 on an even
        # grid): fall back to an unweighted line over the neighbourhood
        w = np.ones_like(w)
        sw = w.sum()
    # weighted least squares for a line centred on x0; value at x0 is the intercept
    u = tt - x0
    su, suu = w @ u, w @ (u * u)
    sy, suy = w @ yy, w @ (u * yy)
    det = sw * suu - su * su
    return float((suu * sy - su * suy) / det)


def loess_at(s: ScatteredSeries, k_L: int, at: Iterable[date]) -> np.ndarray:
    """Degree-1 LOESS with tricube weights over the ``k_L`` nearest samples.

    Evaluation dates outside the sampled period are refused.
    """
    if k_L < 3:
        raise DataError("LOESS needs k_L >= 3")
    if k_L > len(s):
        raise DataError(f"k_L = {k_L} exceeds series length {len(s)}")
    at = list(at)
    if any(d < s.first or d > s.last for d in at):
        raise DataError("extrapolation refused: LOESS evaluated outside the sampled period")
    t, y = s.ordinals, s.array
    return np.array([_loess_eval(t, y, float(d.toordinal()), k_L) for d in at])


def loess(s: ScatteredSeries, k_L: int) -> ScatteredSeries:
    """LOESS evaluated at the input dates."""
    return ScatteredSeries(s.dates, tuple(loess_at(s, k_L, s.dates)))


def loess_grid(s: ScatteredSeries, k_L: int, step_days: int = 1) -> RegularSeries:
    """LOESS evaluated on a regular grid from the first to the last sample."""
    n = (s.last - s.first).days // step_days + 1
    grid = RegularSeries(s.first, step_days, (0.0,) * n)
    return grid.with_values(loess_at(s, k_L, grid.dates))


def sma_loocv(s: RegularSeries, k: int) -> float:
    """Leave-one-out error of the SMA: each interior point is predicted by
    the mean of the other k-1 points in its window."""
    if k < 3 or k % 2 == 0:
        raise DataError("LOOCV window must be odd and >= 3")
    x = s.require_complete("smoothing")
    if k > len(x):
        raise DataError(f"window {k} longer than series ({len(x)})")
    window_sums = np.convolve(x, np.ones(k), mode="valid")
    h = (k - 1) // 2
    centre = x[h : len(x) - h]
    pred = (window_sums - centre) / (k - 1)
    return math.sqrt(float(np.mean((centre - pred) ** 2)))


def select_sma_window(
    s: RegularSeries, candidates: Sequence[int] = DEFAULT_SMA_CANDIDATES
) -> int:
    """Window with the smallest LOOCV error; ties go to the smallest window.

    Candidates longer than the series are skipped.
    """
    if not candidates:
        raise DataError("no SMA candidates given")
    scores = {}
    for k in sorted(set(candidates)):
        if k > len(s):
            continue
        scores[k] = sma_loocv(s, k)
    if not scores:
        raise DataError("series shorter than every SMA candidate")
    return min(scores, key=lambda k: (scores[k], k))


@dataclass(frozen=True)
class LoessMatch:
    k_L: int
    pearson: float
    msim: float
    table: dict


def loess_match(
    s_daily: ScatteredSeries,
    reference: RegularSeries,
    candidates: Sequence[int] = DEFAULT_LOESS_CANDIDATES,
) -> LoessMatch:
    """Pick the LOESS neighbour count whose output best matches ``reference``.

    Comparison uses the present reference entries inside the sampled period
    of ``s_daily``. Ranking: Pearson r, then MSIM, then the smaller k_L.
    """
    pairs = [
        (d, v)
        for d, v in zip(reference.dates, reference.values)
        if not math.isnan(v) and s_daily.first <= d <= s_daily.last
    ]
    if len(pairs) < 2:
        raise DataError("no overlapping dates between LOESS input and reference")
    dates = [d for d, _ in pairs]
    ref = np.array([v for _, v in pairs])
    table = {}
    for k in sorted(set(candidates)):
        if k < 3 or k > len(s_daily):
            continue
        est = loess_at(s_daily, k, dates)
        table[k] = (metrics.pearson_r(ref, est), metrics.msim(ref, est))
    if not table:
        raise DataError("no usable LOESS candidate")
    best = max(table, key=lambda k: (table[k][0], table[k][1], -k))
    return LoessMatch(best, table[best][0], table[best][1], table)


def match_loess_to_reference(
    s_daily: ScatteredSeries,
    reference: RegularSeries,
    candidates: Sequence[int] = DEFAULT_LOESS_CANDIDATES,
) -> int:
    return loess_match(s_daily, reference, candidates).k_L
