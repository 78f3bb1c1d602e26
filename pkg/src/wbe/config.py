"""Pipeline configuration and its flat ``key = value`` file format.

Grammar, one statement per line::

    line    := blank | comment | key "=" value
    comment := optional spaces, then "#" and anything
    key     := name ("." name)*     name := [a-z][a-z0-9_]*
    value   := the rest of the line with surrounding spaces removed

There are no inline comments, quoting or continuation lines. Each key may
appear once. Unknown keys are errors. An empty value resets the key to its
default. Lists are comma-separated; booleans are ``true``/``false``.
See ``KEYS`` for every accepted key.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from datetime import date
from typing import Callable

from .errors import ConfigError, DataError
from .forecast import METHODS, TRANSFORMS
from .preprocess import BIOMARKERS, BiomarkerConfig
from .smoothing import DEFAULT_LOESS_CANDIDATES, DEFAULT_SMA_CANDIDATES, SmootherSpec
from .synthetic import Scenario

RESAMPLING = ("weekly_block", "daily_linear", "daily_shepard")
SMOOTHERS = ("auto", "sma", "loess", "none")
COVARIATES = ("tests", "variant_share")
STAGES = ("preprocess", "resample", "smooth", "regress", "forecast")

_KEY = re.compile(r"^[a-z][a-z0-9_]*(\.[a-z][a-z0-9_]*)*$")


@dataclass(frozen=True)
class PreprocessConfig:
    calibrate: bool = False
    min_flow_history: int = 365


@dataclass(frozen=True)
class SmoothConfig:
    method: str = "auto"
    window: int = 3
    neighbors: int = 11
    sma_candidates: tuple[int, ...] = DEFAULT_SMA_CANDIDATES
    loess_candidates: tuple[int, ...] = DEFAULT_LOESS_CANDIDATES

    def spec(self) -> SmootherSpec | None:
        if self.method in ("sma", "loess"):
            return SmootherSpec(self.method, self.window, self.neighbors)
        return None


@dataclass(frozen=True)
class RegressionConfig:
    enabled: bool = True
    target: str = "incidence"  # incidence | new_infections
    max_lag_steps: int | None = None  # None: 14 on a daily grid, 4 on a weekly one
    covariates: tuple[str, ...] = ()
    population: float | None = None
    polynomial_order: int = 3
    confidence: float = 0.90


@dataclass(frozen=True)
class ForecastConfig:
    enabled: bool = True
    method: str = "grid"  # grid | ses | ar
    transform: str | None = None  # None: difference for SES, Box-Cox + difference for AR
    param: float | None = None  # α or p; None: chosen by the post-sample grid
    horizon_days: tuple[int, ...] = (7, 14)
    p_max: int = 10
    scoring: str = "endpoint"
    lambda_scope: str = "full"
    lam: float | None = None
    adf_mode: str = "df"
    adf_critical: float = -2.86

    def default_transform(self, method: str) -> str:
        if self.transform is not None:
            return self.transform
        return "difference" if method == "ses" else "boxcox_then_difference"


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    biomarker: BiomarkerConfig = field(default_factory=BiomarkerConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    resample: str = "daily_linear"
    shepard_power: float = 2.0
    smoother: SmoothConfig = field(default_factory=SmoothConfig)
    regression: RegressionConfig = field(default_factory=RegressionConfig)
    forecast: ForecastConfig = field(default_factory=ForecastConfig)
    scenario: Scenario = field(default_factory=Scenario)
    first: date | None = None  # optional date range applied to the samples
    last: date | None = None

    @property
    def step_days(self) -> int:
        return 7 if self.resample == "weekly_block" else 1

    def horizon_steps(self) -> tuple[int, ...]:
        return tuple(h // self.step_days for h in self.forecast.horizon_days)

    def validate(self) -> "PipelineConfig":
        if self.resample not in RESAMPLING:
            raise ConfigError(f"resample.method must be one of {', '.join(RESAMPLING)}")
        sm = self.smoother
        if sm.method not in SMOOTHERS:
            raise ConfigError(f"smoother.method must be one of {', '.join(SMOOTHERS)}")
        if self.resample == "weekly_block" and sm.method == "loess":
            raise ConfigError("smoother.method = loess produces a daily series; not allowed with weekly_block resampling")
        try:
            sm.spec()
            for k in sm.sma_candidates:
                SmootherSpec("sma", window_k=k)
            for k in sm.loess_candidates:
                SmootherSpec("loess", neighbors_kL=k)
        except DataError as exc:
            raise ConfigError(f"smoother: {exc}") from None
        if not sm.sma_candidates or not sm.loess_candidates:
            raise ConfigError("smoother candidate lists must not be empty")
        rg = self.regression
        if rg.max_lag_steps is not None and rg.max_lag_steps < 0:
            raise ConfigError("regression.max_lag_steps must be >= 0")
        if rg.target not in ("incidence", "new_infections"):
            raise ConfigError("regression.target must be incidence or new_infections")
        if self.first is not None and self.last is not None and self.last < self.first:
            raise ConfigError("data.last precedes data.first")
        for c in rg.covariates:
            if c not in COVARIATES:
                raise ConfigError(f"unknown regression covariate {c!r}; known: {', '.join(COVARIATES)}")
        if rg.population is not None and not rg.population > 0:
            raise ConfigError("regression.population must be positive")
        if rg.polynomial_order < 1:
            raise ConfigError("regression.polynomial_order must be >= 1")
        if not 0 < rg.confidence < 1:
            raise ConfigError("regression.confidence must lie in (0, 1)")
        fc = self.forecast
        if fc.method not in ("grid",) + METHODS:
            raise ConfigError("forecast.method must be grid, ses or ar")
        if fc.transform is not None and fc.transform not in TRANSFORMS:
            raise ConfigError(f"forecast.transform must be one of {', '.join(TRANSFORMS)}")
        if fc.method == "grid" and fc.param is not None:
            raise ConfigError("forecast.param needs forecast.method = ses or ar")
        if fc.method == "ses" and fc.param is not None and not 0 < fc.param <= 1:
            raise ConfigError("SES alpha must lie in (0, 1]")
        if fc.method == "ar" and fc.param is not None and (fc.param != int(fc.param) or fc.param < 1):
            raise ConfigError("AR order must be an integer >= 1")
        if not fc.horizon_days or any(h < 1 for h in fc.horizon_days):
            raise ConfigError("forecast.horizon_days must be positive")
        if any(h % self.step_days for h in fc.horizon_days):
            raise ConfigError(f"forecast horizons must be multiples of the {self.step_days}-day grid step")
        if fc.p_max < 1:
            raise ConfigError("forecast.p_max must be >= 1")
        if fc.scoring not in ("endpoint", "mean"):
            raise ConfigError("forecast.scoring must be endpoint or mean")
        if fc.lambda_scope not in ("full", "origin"):
            raise ConfigError("forecast.lambda_scope must be full or origin")
        if fc.adf_mode not in ("df", "plain"):
            raise ConfigError("forecast.adf_mode must be df or plain")
        return self


# ---------------------------------------------------------------------------
# Value parsers
# ---------------------------------------------------------------------------


def _int(v: str) -> int:
    try:
        return int(v)
    except ValueError:
        raise ConfigError(f"expected an integer, got {v!r}") from None


def _float(v: str) -> float:
    try:
        return float(v)
    except ValueError:
        raise ConfigError(f"expected a number, got {v!r}") from None


def _bool(v: str) -> bool:
    if v.lower() in ("true", "false"):
        return v.lower() == "true"
    raise ConfigError(f"expected true or false, got {v!r}")


def _str(v: str) -> str:
    return v


def _list(item: Callable) -> Callable:
    def parse(v: str):
        return tuple(item(x.strip()) for x in v.split(",") if x.strip())
    return parse


def _date(v: str) -> date:
    try:
        return date.fromisoformat(v)
    except ValueError:
        raise ConfigError(f"expected a YYYY-MM-DD date, got {v!r}") from None


# key -> (section path, field name, parser); section "" is PipelineConfig itself
KEYS: dict[str, tuple[str, str, Callable]] = {
    "seed": ("", "seed", _int),
    "data.first": ("", "first", _date),
    "data.last": ("", "last", _date),
    "biomarker.policy": ("biomarker", "policy", _str),
    "biomarker.fallback_order": ("biomarker", "fallback_order", _list(_str)),
    **{f"biomarker.load.{b}": ("biomarker.loads", b, _float) for b in BIOMARKERS},
    **{f"biomarker.calibration.{b}": ("biomarker.calibration", b, _float) for b in BIOMARKERS},
    **{f"biomarker.cap.{b}": ("biomarker.outlier_caps", b, _float) for b in BIOMARKERS},
    "preprocess.calibrate": ("preprocess", "calibrate", _bool),
    "preprocess.min_flow_history": ("preprocess", "min_flow_history", _int),
    "resample.method": ("", "resample", _str),
    "resample.shepard_power": ("", "shepard_power", _float),
    "smoother.method": ("smoother", "method", _str),
    "smoother.window": ("smoother", "window", _int),
    "smoother.neighbors": ("smoother", "neighbors", _int),
    "smoother.sma_candidates": ("smoother", "sma_candidates", _list(_int)),
    "smoother.loess_candidates": ("smoother", "loess_candidates", _list(_int)),
    "regression.enabled": ("regression", "enabled", _bool),
    "regression.target": ("regression", "target", _str),
    "regression.max_lag_steps": ("regression", "max_lag_steps", _int),
    "regression.covariates": ("regression", "covariates", _list(_str)),
    "regression.population": ("regression", "population", _float),
    "regression.polynomial_order": ("regression", "polynomial_order", _int),
    "regression.confidence": ("regression", "confidence", _float),
    "forecast.enabled": ("forecast", "enabled", _bool),
    "forecast.method": ("forecast", "method", _str),
    "forecast.transform": ("forecast", "transform", _str),
    "forecast.param": ("forecast", "param", _float),
    "forecast.horizon_days": ("forecast", "horizon_days", _list(_int)),
    "forecast.p_max": ("forecast", "p_max", _int),
    "forecast.scoring": ("forecast", "scoring", _str),
    "forecast.lambda_scope": ("forecast", "lambda_scope", _str),
    "forecast.lambda": ("forecast", "lam", _float),
    "forecast.adf_mode": ("forecast", "adf_mode", _str),
    "forecast.adf_critical": ("forecast", "adf_critical", _float),
    "synth.duration_days": ("scenario", "duration_days", _int),
    "synth.start": ("scenario", "start", _date),
    "synth.sampling": ("scenario", "sampling", _str),
    "synth.samples_per_week": ("scenario", "samples_per_week", _float),
    "synth.baseline_prevalence": ("scenario", "baseline_prevalence", _float),
    "synth.population": ("scenario", "population", _float),
    "synth.shed_load": ("scenario", "shed_load", _float),
    "synth.flow_base": ("scenario", "flow_base", _float),
    "synth.rain_probability": ("scenario", "rain_probability", _float),
    "synth.rain_factor": ("scenario", "rain_factor", _float),
    "synth.biomarker_missing": ("scenario", "biomarker_missing", _float),
    "synth.biomarker_spike": ("scenario", "biomarker_spike", _float),
    "synth.detection_fraction": ("scenario", "detection_fraction", _float),
    "synth.indicator_lag_days": ("scenario", "indicator_lag_days", _int),
    "synth.test_effect": ("scenario", "test_effect", _float),
    "synth.history_days": ("scenario", "history_days", _int),
    **{f"synth.noise.{n}": ("scenario.noise", n, _float) for n in ("virus", "flow", "biomarker", "indicator")},
}


def parse_lines(text: str, source: str = "<config>") -> dict[str, str]:
    """Split config text into raw ``key -> value`` strings."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source} line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in stripped.split("=", 1))
        if not _KEY.match(key):
            raise ConfigError(f"{source} line {lineno}: malformed key {key!r}")
        if key not in KEYS:
            raise ConfigError(f"{source} line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source} line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _replace_path(obj, path: list[str], name: str, value):
    """Return ``obj`` with the field at ``path + [name]`` replaced."""
    if not path:
        if isinstance(obj, dict):
            return {**obj, name: value}
        return dataclasses.replace(obj, **{name: value})
    head, rest = path[0], path[1:]
    child = obj[head] if isinstance(obj, dict) else getattr(obj, head)
    new_child = _replace_path(child, rest, name, value)
    if isinstance(obj, dict):
        return {**obj, head: new_child}
    return dataclasses.replace(obj, **{head: new_child})


def _default(path: list[str], name: str):
    """Default value of a field, looked up on a fresh PipelineConfig."""
    obj = PipelineConfig()
    for p in path:
        obj = obj[p] if isinstance(obj, dict) else getattr(obj, p)
    return obj.get(name) if isinstance(obj, dict) else getattr(obj, name)


def from_mapping(raw: dict[str, str], base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base or PipelineConfig()
    for key in sorted(raw, key=list(KEYS).index):
        section, name, parse = KEYS[key]
        path = section.split(".") if section else []
        text = raw[key]
        try:
            value = parse(text) if text != "" else _default(path, name)
        except ConfigError as exc:
            raise ConfigError(f"{key}: {exc}") from None
        try:
            cfg = _replace_path(cfg, path, name, value)
        except DataError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    cfg = dataclasses.replace(cfg, scenario=dataclasses.replace(cfg.scenario, seed=cfg.seed))
    return cfg.validate()


def load(path=None, text: str | None = None, seed: int | None = None) -> PipelineConfig:
    """Read a config file (or text); ``seed`` overrides the ``seed`` key."""
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    raw = parse_lines(text or "", str(path or "<config>"))
    if seed is not None:
        raw["seed"] = str(seed)
    return from_mapping(raw)


def dump(cfg: PipelineConfig) -> dict:
    """Flat key -> value view of a config, for the run report."""
    out = {}
    for key, (section, name, _) in KEYS.items():
        obj = cfg
        for p in section.split(".") if section else []:
            obj = obj[p] if isinstance(obj, dict) else getattr(obj, p)
        v = obj.get(name) if isinstance(obj, dict) else getattr(obj, name)
        out[key] = list(v) if isinstance(v, tuple) else v
    return out


__all__ = [
    "PipelineConfig", "PreprocessConfig", "SmoothConfig", "RegressionConfig",
    "ForecastConfig", "KEYS", "load", "parse_lines", "from_mapping", "dump",
]
