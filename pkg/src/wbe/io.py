"""CSV ingestion, stage series files and atomic, deterministic output.

Input schema (one row per calendar day, header required)::

    date,c_virus_cpl,flow_m3d,nh4_mgl,cod_mgl,ntot_mgl,tests,variant_share_pct,new_infections

Empty cells are missing. Rows with a virus concentration become samples;
rows without one still contribute flow to the flow record and indicator
values to the indicator series.

Stage series files are ``date,value,flags`` with ``;``-separated flags.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError
from .preprocess import Sample
from .series import RegularSeries, ScatteredSeries

logger = logging.getLogger(__name__)

INPUT_COLUMNS = (
    "date", "c_virus_cpl", "flow_m3d", "nh4_mgl", "cod_mgl", "ntot_mgl",
    "tests", "variant_share_pct", "new_infections",
)
INDICATOR_COLUMNS = {"tests": "tests", "variant_share_pct": "variant_share", "new_infections": "new_infections"}
SERIES_COLUMNS = ("date", "value", "flags")


@dataclass
class Dataset:
    samples: list[Sample]
    indicators: dict[str, RegularSeries]  # daily, NaN where missing
    flows: list[float]  # every flow value in the file, in date order
    warnings: list[str] = field(default_factory=list)


def parse_date(text: str, where: str = "") -> date:
    try:
        if len(text) != 10:
            raise ValueError
        return date.fromisoformat(text)
    except ValueError:
        raise DataError(f"{where}malformed date {text!r} (expected YYYY-MM-DD)") from None


def _number(text: str, where: str) -> float | None:
    text = text.strip()
    if text == "":
        return None
    try:
        v = float(text)
    except ValueError:
        raise DataError(f"{where}malformed number {text!r}") from None
    if not math.isfinite(v):
        raise DataError(f"{where}non-finite number {text!r}")
    return v


def read_input_csv(path: str | os.PathLike) -> Dataset:
    """Parse the monitoring CSV. Errors name the offending line."""
    with open(path, newline="", encoding="utf-8") as fh:
        return parse_input(fh, str(path))


def parse_input(fh, name: str = "<input>") -> Dataset:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{name}: empty file, header row required") from None
    if "date" not in header:
        raise DataError(f"{name}: header must contain a 'date' column")
    warnings = []
    unknown = [h for h in header if h not in INPUT_COLUMNS]
    for h in unknown:
        msg = f"{name}: unknown column {h!r} ignored"
        logger.warning(msg)
        warnings.append(msg)
    col = {h: i for i, h in enumerate(header)}

    rows: dict[date, dict[str, float | None]] = {}
    for lineno, raw in enumerate(reader, start=2):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) != len(header):
            raise DataError(f"{name} line {lineno}: expected {len(header)} fields, got {len(raw)}")
        where = f"{name} line {lineno}: "
        d = parse_date(raw[col["date"]].strip(), where)
        if d in rows:
            raise DataError(f"{where}duplicate date {d.isoformat()}")
        rows[d] = {
            h: _number(raw[col[h]], where) for h in INPUT_COLUMNS[1:] if h in col
        }
    if not rows:
        raise DataError(f"{name}: no data rows")

    dates = sorted(rows)
    samples, flows = [], []
    for d in dates:
        r = rows[d]
        if r.get("flow_m3d") is not None:
            flows.append(r["flow_m3d"])
        if r.get("c_virus_cpl") is None:
            continue
        samples.append(Sample(
            date=d,
            c_virus=r["c_virus_cpl"],
            flow=r.get("flow_m3d"),
            c_nh4=r.get("nh4_mgl"),
            c_cod=r.get("cod_mgl"),
            c_ntot=r.get("ntot_mgl"),
        ))

    indicators = {}
    for column, key in INDICATOR_COLUMNS.items():
        if column not in col:
            continue
        present = [(d, rows[d][column]) for d in dates if rows[d][column] is not None]
        if not present:
            continue
        start, end = present[0][0], present[-1][0]
        n = (end - start).days + 1
        vals = [math.nan] * n
        for d, v in present:
            vals[(d - start).days] = v
        indicators[key] = RegularSeries(start, 1, tuple(vals))
    return Dataset(samples, indicators, flows, warnings)


def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def input_csv_text(
    samples: Sequence[Sample],
    indicators: Mapping[str, RegularSeries] | None = None,
    flow_only: Iterable[tuple[date, float]] = (),
) -> str:
    """Render samples, indicator series and flow-only days in the input schema."""
    rows: dict[date, dict[str, str]] = {}

    def row(d):
        return rows.setdefault(d, {})

    for d, q in flow_only:
        row(d)["flow_m3d"] = _fmt(q)
    for s in samples:
        r = row(s.date)
        r.update(
            c_virus_cpl=_fmt(s.c_virus), flow_m3d=_fmt(s.flow), nh4_mgl=_fmt(s.c_nh4),
            cod_mgl=_fmt(s.c_cod), ntot_mgl=_fmt(s.c_ntot),
        )
    reverse = {v: k for k, v in INDICATOR_COLUMNS.items()}
    for key, series in (indicators or {}).items():
        column = reverse[key]
        for d, v in zip(series.dates, series.values):
            if not math.isnan(v):
                row(d)[column] = _fmt(v)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(INPUT_COLUMNS)
    for d in sorted(rows):
        w.writerow([d.isoformat()] + [rows[d].get(c, "") for c in INPUT_COLUMNS[1:]])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Stage series files
# ---------------------------------------------------------------------------


def series_csv_text(dates: Sequence[date], values: Sequence[float], flags: Sequence[Iterable[str]] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SERIES_COLUMNS)
    for i, (d, v) in enumerate(zip(dates, values)):
        f = ";".join(sorted(flags[i])) if flags is not None else ""
        w.writerow([d.isoformat(), _fmt(v), f])
    return buf.getvalue()


@dataclass
class SeriesFile:
    dates: list[date]
    values: np.ndarray
    flags: list[frozenset]

    @property
    def step_days(self) -> int | None:
        """Grid step if the dates are equally spaced by 1 or 7 days."""
        if len(self.dates) < 2:
            return None
        gaps = {(b - a).days for a, b in zip(self.dates, self.dates[1:])}
        return gaps.pop() if len(gaps) == 1 and gaps <= {1, 7} else None

    def all_flagged(self, prefix: str) -> bool:
        return bool(self.flags) and all(any(f.startswith(prefix) for f in fl) for fl in self.flags)

    def scattered(self) -> ScatteredSeries:
        keep = ~np.isnan(self.values)
        return ScatteredSeries(
            tuple(d for d, k in zip(self.dates, keep) if k), tuple(self.values[keep])
        )

    def regular(self) -> RegularSeries:
        step = self.step_days
        if step is None:
            raise DataError("series file is not on a regular daily or weekly grid")
        return RegularSeries(self.dates[0], step, tuple(self.values))


def read_series_csv(path: str | os.PathLike) -> SeriesFile:
    name = str(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["date", "value"]:
            raise DataError(f"{name}: expected header 'date,value,flags'")
        dates, values, flags = [], [], []
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            where = f"{name} line {lineno}: "
            dates.append(parse_date(raw[0].strip(), where))
            v = _number(raw[1], where)
            values.append(math.nan if v is None else v)
            flags.append(frozenset(f for f in (raw[2].split(";") if len(raw) > 2 else []) if f))
    if not dates:
        raise DataError(f"{name}: no data rows")
    if any(b <= a for a, b in zip(dates, dates[1:])):
        raise DataError(f"{name}: dates must be strictly increasing")
    return SeriesFile(dates, np.array(values, dtype=float), flags)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def atomic_write(path: str | os.PathLike, text: str) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _round(obj):
    """Numbers to 12 significant digits; NaN and infinities become null."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.12g}") if math.isfinite(v) else None
    if isinstance(obj, date):
        return obj.isoformat()
    if isinstance(obj, Mapping):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray, frozenset, set)):
        items = sorted(obj) if isinstance(obj, (frozenset, set)) else obj
        return [_round(v) for v in items]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def json_text(obj) -> str:
    return json.dumps(_round(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def long_csv_text(series: Mapping[str, tuple[Sequence[date], Sequence[float]]]) -> str:
    """Long format ``date,series_name,value`` for plotting tools."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("date", "series_name", "value"))
    for name, (dates, values) in series.items():
        for d, v in zip(dates, values):
            if v is not None and not math.isnan(v):
                w.writerow([d.isoformat(), name, _fmt(v)])
    return buf.getvalue()


def table_csv_text(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([
            x.isoformat() if isinstance(x, date)
            else _fmt(x) if isinstance(x, (float, np.floating))
            else "" if x is None else x
            for x in r
        ])
    return buf.getvalue()
