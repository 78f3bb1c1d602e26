"""Time-series value types and resampling of scattered data onto regular grids.

Two containers are used throughout the package:

* :class:`ScatteredSeries` -- the raw monitoring record, irregularly spaced.
* :class:`RegularSeries` -- an equally spaced grid (1 or 7 days) whose
  missing entries are stored as NaN.

Dates are plain :class:`datetime.date` objects (day resolution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, timedelta
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

TimePoint = date

ALLOWED_STEPS = (1, 7)


def _as_date(d) -> date:
    if isinstance(d, date):
        return d
    return date.fromisoformat(str(d))


@dataclass(frozen=True)
class ScatteredSeries:
    """Irregularly spaced, strictly time-ordered observations."""

    dates: tuple[date, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        dates = tuple(_as_date(d) for d in self.dates)
        values = tuple(float(v) for v in self.values)
        if len(dates) != len(values):
            raise DataError("dates and values differ in length")
        if not dates:
            raise DataError("empty input")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise DataError("dates must be strictly increasing")
        if not all(math.isfinite(v) for v in values):
            raise DataError("scattered series values must be finite")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[date, float]]) -> "ScatteredSeries":
        pairs = list(pairs)
        return cls(tuple(p[0] for p in pairs), tuple(p[1] for p in pairs))

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def ordinals(self) -> np.ndarray:
        return np.array([d.toordinal() for d in self.dates], dtype=float)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    @property
    def first(self) -> date:
        return self.dates[0]

    @property
    def last(self) -> date:
        return self.dates[-1]

    def to_regular(self, step_days: int = 1, start: date | None = None) -> "RegularSeries":
        """Place values on a grid without interpolation; other slots are missing.

        Sample dates that do not fall on the grid are an error.
        """
        start = self.first if start is None else start
        n = (self.last - start).days // step_days + 1
        out = np.full(n, np.nan)
        for d, v in zip(self.dates, self.values):
            offset = (d - start).days
            if offset < 0 or offset % step_days:
                raise DataError(f"{d} does not lie on the {step_days}-day grid from {start}")
            out[offset // step_days] = v
        return RegularSeries(start, step_days, out)


@dataclass(frozen=True)
class RegularSeries:
    """Equally spaced series; value ``i`` belongs to ``start + i * step_days``.

    Missing entries are NaN. Infinite values are rejected.
    """

    start: date
    step_days: int
    values: tuple[float, ...]

    def __post_init__(self):
        if self.step_days not in ALLOWED_STEPS:
            raise DataError(f"step_days must be one of {ALLOWED_STEPS}, got {self.step_days}")
        values = tuple(float(v) if v is not None else math.nan for v in self.values)
        if any(math.isinf(v) for v in values):
            raise DataError("regular series values must be finite or missing")
        object.__setattr__(self, "start", _as_date(self.start))
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    @property
    def dates(self) -> list[date]:
        return [self.date_at(i) for i in range(len(self))]

    @property
    def end(self) -> date:
        return self.date_at(len(self) - 1)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.array)

    @property
    def has_gaps(self) -> bool:
        return bool(self.missing.any())

    def date_at(self, i: int) -> date:
        return self.start + timedelta(days=i * self.step_days)

    def index_of(self, d: date) -> int | None:
        offset = (d - self.start).days
        if offset % self.step_days:
            return None
        i = offset // self.step_days
        return i if 0 <= i < len(self) else None

    def require_complete(self, what: str = "operation") -> np.ndarray:
        arr = self.array
        if np.isnan(arr).any():
            raise DataError(f"gaps must be filled before {what}")
        return arr

    def with_values(self, values: Sequence[float], start: date | None = None) -> "RegularSeries":
        return RegularSeries(self.start if start is None else start, self.step_days, tuple(values))

    def to_scattered(self) -> ScatteredSeries:
        """Drop missing entries and return the remaining points."""
        pairs = [(d, v) for d, v in zip(self.dates, self.values) if not math.isnan(v)]
        return ScatteredSeries.from_pairs(pairs)

    def slice_dates(self, first: date | None = None, last: date | None = None) -> "RegularSeries":
        """Restrict to grid points within ``[first, last]`` (inclusive)."""
        dates = self.dates
        keep = [
            i
            for i, d in enumerate(dates)
            if (first is None or d >= first) and (last is None or d <= last)
        ]
        if not keep:
            raise DataError("date range selects no grid points")
        return RegularSeries(dates[keep[0]], self.step_days, self.values[keep[0] : keep[-1] + 1])


def iso_week_monday(d: date) -> date:
    return d - timedelta(days=d.weekday())


def block_average_downsample(s: ScatteredSeries, step_days: int = 7) -> RegularSeries:
    """Average all samples of each ISO week (Monday-Sunday), labelled by the Monday.

    Weeks without a sample stay missing.
    """
    if step_days != 7:
        raise DataError("block averaging is defined for weekly slots only (step_days=7)")
    if len(s) == 0:
        raise DataError("empty input")
    start = iso_week_monday(s.first)
    n = (iso_week_monday(s.last) - start).days // 7 + 1
    slots: list[list[float]] = [[] for _ in range(n)]
    for d, v in zip(s.dates, s.values):
        slots[(iso_week_monday(d) - start).days // 7].append(v)
    # fsum is exactly rounded, so the mean does not depend on summation order
    means = [math.fsum(vs) / len(vs) if vs else math.nan for vs in slots]
    return RegularSeries(start, 7, tuple(means))


def _grid(s: ScatteredSeries, step_days: int, start: date | None, end: date | None) -> np.ndarray:
    if len(s) < 2:
        raise DataError("interpolation needs at least 2 points")
    if step_days not in ALLOWED_STEPS:
        raise DataError(f"step_days must be one of {ALLOWED_STEPS}")
    start = s.first if start is None else _as_date(start)
    end = s.last if end is None else _as_date(end)
    if start < s.first or end > s.last:
        raise DataError("extrapolation refused: grid extends beyond the sampled period")
    if end < start:
        raise DataError("grid end precedes grid start")
    n = (end - start).days // step_days + 1
    return start.toordinal() + step_days * np.arange(n, dtype=float)


def linear_interpolate(
    s: ScatteredSeries, step_days: int = 1, start: date | None = None, end: date | None = None
) -> RegularSeries:
    """Piecewise-linear interpolation of ``s`` onto a regular grid.

    The grid starts at ``start`` (default: first sample) and must stay inside
    the sampled period; sample values are reproduced exactly at sample dates.
    """
    t = _grid(s, step_days, start, end)
    values = np.interp(t, s.ordinals, s.array)
    return RegularSeries(date.fromordinal(int(t[0])), step_days, tuple(values))


def shepard_weights(t: np.ndarray, nodes: np.ndarray, power: float) -> np.ndarray:
    """Global inverse-distance weights, one row per evaluation point.

    Rows for evaluation points that coincide with a node are one-hot.
    """
    dist = np.abs(t[:, None] - nodes[None, :])
    exact = dist == 0
    with np.errstate(divide="ignore"):
        w = dist ** (-power)
    hit = exact.any(axis=1)
    w[hit] = exact[hit].astype(float)
    return w


def shepard_interpolate(
    s: ScatteredSeries,
    step_days: int = 1,
    power: float = 2.0,
    start: date | None = None,
    end: date | None = None,
) -> RegularSeries:
    """Inverse-distance-weighted (Shepard) interpolation onto a regular grid."""
    if not power > 0:
        raise DataError("Shepard power must be positive")
    t = _grid(s, step_days, start, end)
    w = shepard_weights(t, s.ordinals, power)
    values = (w @ s.array) / w.sum(axis=1)
    return RegularSeries(date.fromordinal(int(t[0])), step_days, tuple(values))


def fill_gaps(s: RegularSeries) -> RegularSeries:
    """Linearly interpolate interior missing entries of a regular series.

    Leading or trailing gaps would need extrapolation and raise instead.
    """
    arr = s.array
    miss = np.isnan(arr)
    if not miss.any():
        return s
    if miss[0] or miss[-1]:
        raise DataError("extrapolation refused: series starts or ends with a missing value")
    idx = np.arange(len(arr))
    arr[miss] = np.interp(idx[miss], idx[~miss], arr[~miss])
    return s.with_values(arr)


def difference(s: RegularSeries) -> RegularSeries:
    """First differences; the output starts one step later."""
    arr = s.require_complete("differencing")
    if len(arr) < 2:
        raise DataError("differencing needs at least 2 values")
    return RegularSeries(s.date_at(1), s.step_days, tuple(np.diff(arr)))


def undifference(d: RegularSeries, anchor: float) -> RegularSeries:
    """Inverse of :func:`difference`: cumulative sum seeded with ``anchor``."""
    arr = d.require_complete("undifferencing")
    out = np.cumsum(np.concatenate(([float(anchor)], arr)))
    return RegularSeries(d.start - timedelta(days=d.step_days), d.step_days, tuple(out))
