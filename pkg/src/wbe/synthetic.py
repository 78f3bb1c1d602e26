"""Forward generator of ground-truth surveillance scenarios.

Prevalence waves drive shedding into the sewer; plant samples are derived by
dividing the shed load by the inflow::

    c_virus = L_shed * P * f_inf / Q

Biomarker concentrations follow the same dilution from the standard per-PE
loads, so normalization of a noise-free scenario returns ``L_shed * f_inf``.

All randomness comes from one ``numpy.random.default_rng(seed)`` stream,
consumed in a fixed order: flow history, campaign flow, rain, sampling
schedule, virus noise, biomarker noise, biomarker gaps and spikes, tests,
indicator noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Mapping

import numpy as np

from .errors import DataError
from .preprocess import BIOMARKERS, STANDARD_LOADS, Sample
from .series import RegularSeries


@dataclass(frozen=True)
class Wave:
    peak_day: float
    peak_prevalence: float
    width_days: float


@dataclass(frozen=True)
class Noise:
    """Relative standard deviations (log scale) per channel."""

    virus: float = 0.10
    flow: float = 0.05
    biomarker: float = 0.05
    indicator: float = 0.10


DEFAULT_WAVES = (
    Wave(80.0, 0.010, 30.0),
    Wave(240.0, 0.015, 36.0),
    Wave(430.0, 0.012, 28.0),
)


@dataclass(frozen=True)
class Scenario:
    duration_days: int = 548
    start: date = date(2020, 9, 1)
    waves: tuple[Wave, ...] = DEFAULT_WAVES
    baseline_prevalence: float = 2e-3
    population: float = 1.9e6
    shed_load: float = 1e9  # gene copies / infected person / d
    flow_base: float = 4e5  # m³/d
    noise: Noise = field(default_factory=Noise)
    sampling: str = "irregular"  # daily | twice-weekly | irregular
    samples_per_week: float = 3.0
    seed: int = 0
    rain_probability: float = 0.06
    rain_factor: float = 2.0  # mean extra inflow multiple on rain days
    biomarker_bias: Mapping[str, float] = field(default_factory=lambda: {b: 1.0 for b in BIOMARKERS})
    biomarker_missing: float = 0.0
    biomarker_spike: float = 0.0
    detection_fraction: float = 0.3
    infectious_days: float = 10.0
    indicator_lag_days: int = 8
    tests_base: float = 30000.0
    test_effect: float = 0.3
    history_days: int = 365

    def __post_init__(self):
        if self.duration_days < 2:
            raise DataError("duration must be at least 2 days")
        if self.baseline_prevalence < 0:
            raise DataError("baseline prevalence must be >= 0")
        if self.baseline_prevalence + sum(w.peak_prevalence for w in self.waves) > 1.0:
            raise DataError("wave peaks sum above 1: prevalence could leave [0, 1]")
        for w in self.waves:
            if w.peak_prevalence < 0 or w.width_days <= 0:
                raise DataError("wave peaks must be >= 0 and widths > 0")
        for name in ("population", "shed_load", "flow_base", "tests_base", "infectious_days"):
            if not getattr(self, name) > 0:
                raise DataError(f"{name} must be positive")
        if self.sampling not in ("daily", "twice-weekly", "irregular"):
            raise DataError(f"unknown sampling schedule {self.sampling!r}")
        if not 0 <= self.rain_probability < 1:
            raise DataError("rain probability must lie in [0, 1)")
        if self.indicator_lag_days < 0:
            raise DataError("indicator lag must be >= 0")

    def prevalence(self, day) -> np.ndarray:
        t = np.asarray(day, dtype=float)
        f = np.full_like(t, self.baseline_prevalence)
        for w in self.waves:
            f = f + w.peak_prevalence * np.exp(-0.5 * ((t - w.peak_day) / w.width_days) ** 2)
        return np.clip(f, 0.0, 1.0)


@dataclass
class GeneratedData:
    scenario: Scenario
    samples: list[Sample]
    prevalence: RegularSeries
    l_virus_true: RegularSeries
    new_infections: RegularSeries
    tests: RegularSeries
    variant_share: RegularSeries
    flow_history: list[float]


def _flows(rng, sc: Scenario, n: int) -> np.ndarray:
    base = sc.flow_base * np.exp(sc.noise.flow * rng.standard_normal(n))
    rain = rng.random(n) < sc.rain_probability
    extra = rng.exponential(sc.rain_factor, n)
    return np.where(rain, base * (1.0 + extra), base)


def _schedule(rng, sc: Scenario) -> np.ndarray:
    n = sc.duration_days
    if sc.sampling == "daily":
        return np.ones(n, dtype=bool)
    if sc.sampling == "twice-weekly":
        weekday = np.array([(sc.start + timedelta(days=i)).weekday() for i in range(n)])
        mask = (weekday == 0) | (weekday == 3)
    else:
        mask = rng.random(n) < sc.samples_per_week / 7.0
    mask[0] = mask[-1] = True
    return mask


def generate(sc: Scenario) -> GeneratedData:
    rng = np.random.default_rng(sc.seed)
    n = sc.duration_days
    days = np.arange(n, dtype=float)
    dates = [sc.start + timedelta(days=i) for i in range(n)]

    flow_history = _flows(rng, sc, sc.history_days)
    flow = _flows(rng, sc, n)
    sampled = _schedule(rng, sc)

    f_inf = sc.prevalence(days)
    q_litres = flow * 1000.0
    virus_noise = np.exp(sc.noise.virus * rng.standard_normal(n))
    c_virus = sc.shed_load * sc.population * f_inf / q_litres * virus_noise

    conc = {}
    for b in BIOMARKERS:
        bias = sc.biomarker_bias.get(b, 1.0)
        noise = np.exp(sc.noise.biomarker * rng.standard_normal(n))
        # g/L -> mg/L
        conc[b] = STANDARD_LOADS[b] * bias * sc.population / q_litres * 1000.0 * noise
    gaps = {b: rng.random(n) < sc.biomarker_missing for b in BIOMARKERS}
    spikes = rng.random(n) < sc.biomarker_spike

    samples = []
    for i in np.flatnonzero(sampled):
        nh4 = conc["nh4"][i] * (8.0 if spikes[i] else 1.0)
        samples.append(Sample(
            date=dates[i],
            c_virus=float(c_virus[i]),
            flow=float(flow[i]),
            c_nh4=None if gaps["nh4"][i] else float(nh4),
            c_cod=None if gaps["cod"][i] else float(conc["cod"][i]),
            c_ntot=None if gaps["ntot"][i] else float(conc["ntot"][i]),
        ))

    season = 1.0 + 0.3 * np.sin(2 * math.pi * days / 365.0)
    weekday = np.array([0.6 if d.weekday() >= 5 else 1.0 for d in dates])
    tests = sc.tests_base * season * weekday * np.exp(0.05 * rng.standard_normal(n))
    lagged = sc.prevalence(days - sc.indicator_lag_days)
    detect = sc.detection_fraction * (tests / sc.tests_base) ** sc.test_effect
    ind_noise = np.exp(sc.noise.indicator * rng.standard_normal(n))
    new_inf = detect * sc.population * lagged / sc.infectious_days * ind_noise
    variant = 100.0 / (1.0 + np.exp(-(days - 0.45 * n) / 20.0))

    def reg(v):
        return RegularSeries(sc.start, 1, tuple(float(x) for x in v))

    return GeneratedData(
        scenario=sc,
        samples=samples,
        prevalence=reg(f_inf),
        l_virus_true=reg(sc.shed_load * f_inf),
        new_infections=reg(new_inf),
        tests=reg(tests),
        variant_share=reg(variant),
        flow_history=[float(x) for x in flow_history],
    )
