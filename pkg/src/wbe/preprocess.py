"""Normalization of the raw virus signal and outlier screening.

Concentrations enter in mg/L and flows in m³/d; internally biomarker
concentrations are converted to g/L so that

    L_virus = c_virus * f_bm / c_bm      [gene copies / PE / d]

with ``f_bm`` the (calibrated) specific load of the biomarker in g/PE/d.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, NumericError
from .series import ScatteredSeries

logger = logging.getLogger(__name__)

BIOMARKERS = ("nh4", "cod", "ntot")

STANDARD_LOADS = {"cod": 120.0, "nh4": 8.0, "ntot": 11.0}  # g/PE/d
VIENNA_CALIBRATION = {"cod": 1.10, "nh4": 0.939, "ntot": 0.962}
VIENNA_SURROGATE_CAPS = {"cod": 859.0, "nh4": 45.3, "ntot": 63.1}  # mg/L, 95th percentiles

FLOW_OUTLIER = "flow_outlier"
BIOMARKER_SUBSTITUTED = "biomarker_substituted"


@dataclass(frozen=True)
class Sample:
    """One dated plant-inlet measurement.

    ``c_virus`` in gene copies/L, ``flow`` in m³/d, biomarkers in mg/L.
    Absent measurements are ``None``.
    """

    date: date
    c_virus: float
    flow: float | None = None
    c_nh4: float | None = None
    c_cod: float | None = None
    c_ntot: float | None = None
    flags: frozenset = frozenset()

    def __post_init__(self):
        for name in ("c_virus", "flow", "c_nh4", "c_cod", "c_ntot"):
            v = getattr(self, name)
            if v is None:
                continue
            if not (math.isfinite(v) and v >= 0):
                raise DataError(f"{self.date}: {name} must be finite and >= 0, got {v}")
        object.__setattr__(self, "flags", frozenset(self.flags))

    def biomarker(self, name: str) -> float | None:
        return getattr(self, f"c_{name}")

    def replace(self, **changes) -> "Sample":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class BiomarkerConfig:
    """Standard loads, calibration factors and outlier policy.

    ``policy`` is ``"fallback"`` (first available biomarker in
    ``fallback_order``) or ``"mean"`` (average of the estimates from all
    available biomarkers).
    """

    loads: Mapping[str, float] = field(default_factory=lambda: dict(STANDARD_LOADS))
    calibration: Mapping[str, float] = field(
        default_factory=lambda: {b: 1.0 for b in BIOMARKERS}
    )
    fallback_order: tuple[str, ...] = ("nh4", "ntot", "cod")
    outlier_caps: Mapping[str, float] = field(
        default_factory=lambda: dict(VIENNA_SURROGATE_CAPS)
    )
    policy: str = "fallback"

    def __post_init__(self):
        object.__setattr__(self, "fallback_order", tuple(self.fallback_order))
        if not self.fallback_order:
            raise DataError("fallback_order must not be empty")
        for b in self.fallback_order:
            if b not in BIOMARKERS:
                raise DataError(f"unknown biomarker {b!r}")
            if not self.loads.get(b, 0) > 0:
                raise DataError(f"load for {b} must be positive")
            if not self.calibration.get(b, 1.0) > 0:
                raise DataError(f"calibration factor for {b} must be positive")
        if self.policy not in ("fallback", "mean"):
            raise DataError(f"unknown normalization policy {self.policy!r}")

    def effective_load(self, biomarker: str) -> float:
        return self.loads[biomarker] * self.calibration.get(biomarker, 1.0)

    def with_calibration(self, factors: Mapping[str, float]) -> "BiomarkerConfig":
        merged = dict(self.calibration)
        merged.update(factors)
        return dataclasses.replace(self, calibration=merged)


@dataclass(frozen=True)
class NormalizedPoint:
    date: date
    l_virus: float
    biomarker_used: str
    flags: frozenset = frozenset()


def population_equivalents(c_bm: float, flow: float, f_bm: float) -> float:
    """Population equivalents from a biomarker load.

    ``c_bm`` mg/L, ``flow`` m³/d, ``f_bm`` g/PE/d. The unit factors cancel:
    (c_bm/1000 g/L) * (flow*1000 L/d) / f_bm.
    """
    if not (c_bm > 0 and flow > 0 and f_bm > 0):
        raise DataError("population_equivalents needs positive inputs")
    return c_bm * flow / f_bm


def _load_estimate(sample: Sample, biomarker: str, cfg: BiomarkerConfig) -> float:
    c_bm = sample.biomarker(biomarker)
    if c_bm == 0:
        raise NumericError(f"{sample.date}: zero biomarker concentration ({biomarker})")
    return sample.c_virus * cfg.effective_load(biomarker) / (c_bm / 1000.0)


def normalize(sample: Sample, cfg: BiomarkerConfig) -> NormalizedPoint:
    """Normalize one sample to gene copies per person equivalent per day."""
    available = [b for b in cfg.fallback_order if sample.biomarker(b) is not None]
    if not available:
        raise DataError(f"{sample.date}: normalization impossible, no biomarker available")
    flags = set(sample.flags)
    if cfg.policy == "mean":
        value = math.fsum(_load_estimate(sample, b, cfg) for b in available) / len(available)
        used = "mean"
    else:
        used = available[0]
        value = _load_estimate(sample, used, cfg)
        if used != cfg.fallback_order[0]:
            flags.add(BIOMARKER_SUBSTITUTED)
    return NormalizedPoint(sample.date, value, used, frozenset(flags))


def calibrate_biomarkers(
    samples: Sequence[Sample], cfg: BiomarkerConfig, min_samples: int = 10
) -> dict[str, float]:
    """Relative deviation of each biomarker's mean PE estimate from the grand mean.

    Uses standard (uncalibrated) loads on samples where flow and all three
    biomarkers are present. The factors average to one; apply them with
    :meth:`BiomarkerConfig.with_calibration`.
    """
    complete = [
        s for s in samples
        if s.flow and all(s.biomarker(b) for b in BIOMARKERS)
    ]
    if len(complete) < min_samples:
        raise DataError(
            f"calibration needs >= {min_samples} samples with flow and all biomarkers, "
            f"got {len(complete)}"
        )
    means = {
        b: float(np.mean([population_equivalents(s.biomarker(b), s.flow, cfg.loads[b])
                          for s in complete]))
        for b in BIOMARKERS
    }
    grand = float(np.mean(list(means.values())))
    return {b: means[b] / grand for b in BIOMARKERS}


def percentile(values: Iterable[float], q: float) -> float:
    """Percentile with linear interpolation between closest ranks."""
    arr = np.asarray(list(values), dtype=float)
    if arr.size == 0:
        raise DataError("percentile of empty data")
    return float(np.percentile(arr, q, method="linear"))


def flag_flow_outliers(
    samples: Sequence[Sample], flow_history: Sequence[float], min_history: int = 365
) -> list[bool]:
    """Flag samples taken at inflow above the 90th percentile of the flow record."""
    if len(flow_history) < min_history:
        raise DataError(
            f"flow history too short: need at least {min_history} values, got {len(flow_history)}"
        )
    threshold = percentile(flow_history, 90)
    return [s.flow is not None and s.flow > threshold for s in samples]


@dataclass(frozen=True)
class Fence:
    low: float
    high: float

    def classify(self, value: float) -> str:
        if value < self.low:
            return "low"
        if value > self.high:
            return "high"
        return "ok"


def biomarker_fences(samples: Sequence[Sample], k: float = 1.5) -> dict[str, Fence]:
    """Tukey fences ``[Q1 - k*IQR, Q3 + k*IQR]`` per biomarker over a campaign."""
    fences = {}
    for b in BIOMARKERS:
        vals = [s.biomarker(b) for s in samples if s.biomarker(b) is not None]
        if len(vals) < 4:
            continue
        q1, q3 = percentile(vals, 25), percentile(vals, 75)
        iqr = q3 - q1
        fences[b] = Fence(q1 - k * iqr, q3 + k * iqr)
    return fences


def screen_biomarker(
    sample: Sample, fences: Mapping[str, Fence], cfg: BiomarkerConfig
) -> Sample:
    """Remove outlying biomarker values so that normalization falls back.

    The first available biomarker in ``fallback_order`` is checked against its
    fence. An outlier is dropped and the next available in-range biomarker is
    used. If none is in range and the preferred value was too high, the
    configured surrogate concentration replaces it. Low-side outliers are
    never raised to a surrogate.
    """
    available = [b for b in cfg.fallback_order if sample.biomarker(b) is not None]
    if not available:
        return sample

    def status(b):
        fence = fences.get(b)
        return "ok" if fence is None else fence.classify(sample.biomarker(b))

    if status(available[0]) == "ok":
        return sample

    dropped = {}
    for b in available:
        st = status(b)
        if st == "ok":
            return sample.replace(flags=sample.flags | {BIOMARKER_SUBSTITUTED}, **dropped)
        dropped[f"c_{b}"] = None

    for b in available:
        if status(b) == "high" and b in cfg.outlier_caps:
            logger.debug("%s: %s replaced by surrogate %s mg/L", sample.date, b, cfg.outlier_caps[b])
            return sample.replace(
                flags=sample.flags | {BIOMARKER_SUBSTITUTED},
                **{**dropped, f"c_{b}": float(cfg.outlier_caps[b])},
            )
    raise DataError(f"{sample.date}: sample unusable, every biomarker is a low-side outlier")


@dataclass
class PreprocessResult:
    points: list[NormalizedPoint]
    excluded_flow: list[date]
    substituted: list[date]
    calibration: dict[str, float]
    flow_threshold: float | None = None
    warnings: list[str] = field(default_factory=list)
    unusable: list[date] = field(default_factory=list)

    def series(self) -> ScatteredSeries:
        return ScatteredSeries.from_pairs((p.date, p.l_virus) for p in self.points)


def preprocess(
    samples: Sequence[Sample],
    cfg: BiomarkerConfig,
    flow_history: Sequence[float] | None = None,
    calibrate: bool = False,
) -> PreprocessResult:
    """Normalize and screen a campaign, in order: flow rule, biomarker fences, normalization.

    Samples above the flow threshold are dropped, not corrected.
    """
    samples = sorted(samples, key=lambda s: s.date)
    warnings: list[str] = []
    calibration = dict(cfg.calibration)
    if calibrate:
        calibration = calibrate_biomarkers(samples, cfg)
        cfg = cfg.with_calibration(calibration)

    excluded: list[date] = []
    threshold = None
    if flow_history is None:
        warnings.append("no flow history supplied; flow outlier rule skipped")
    else:
        threshold = percentile(flow_history, 90)
        flags = flag_flow_outliers(samples, flow_history)
        excluded = [s.date for s, f in zip(samples, flags) if f]
        samples = [s for s, f in zip(samples, flags) if not f]
        if excluded:
            warnings.append(f"{len(excluded)} samples above the 90th flow percentile removed")

    fences = biomarker_fences(samples)
    screened, unusable = [], []
    for s in samples:
        try:
            screened.append(screen_biomarker(s, fences, cfg))
        except DataError:
            unusable.append(s.date)
    if unusable:
        warnings.append(f"{len(unusable)} samples unusable (all biomarkers low-side outliers) removed")
    points = [normalize(s, cfg) for s in screened]
    substituted = [p.date for p in points if BIOMARKER_SUBSTITUTED in p.flags]
    if substituted:
        warnings.append(f"{len(substituted)} samples normalized with a substitute biomarker")
    return PreprocessResult(points, excluded, substituted, calibration, threshold, warnings, unusable)
