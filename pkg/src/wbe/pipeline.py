"""Stage orchestration in the fixed order

    preprocess -> resample -> smooth -> regress -> forecast

Each stage function is pure and returns its series plus a summary dict;
:func:`run` chains them, writes every output atomically and assembles the
JSON run report. Identical input, config and seed give byte-identical files.
"""

from __future__ import annotations

import hashlib
import logging
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import config as config_mod
from . import forecast as fc
from . import io as wio
from . import regression as rg
from . import series as sr
from . import smoothing as sm
from .config import STAGES, PipelineConfig
from .errors import ConfigError, DataError, WBEError
from .preprocess import PreprocessResult, preprocess
from .series import RegularSeries, ScatteredSeries

logger = logging.getLogger(__name__)

SCHEMA = "wbe-run-report/1"
SMOOTHED_FLAG = "smoothed"


@contextmanager
def stage(name: str):
    """Tag any package error raised inside with the stage name."""
    try:
        yield
    except WBEError as exc:
        if exc.stage is None:
            exc.stage = name
            exc.args = (f"{name}: {exc}",) + exc.args[1:]
        raise


def _trim(s: RegularSeries) -> RegularSeries:
    """Drop leading and trailing missing entries (SMA ends)."""
    ok = np.flatnonzero(~s.missing)
    if ok.size == 0:
        raise DataError("series has no values")
    return RegularSeries(s.date_at(int(ok[0])), s.step_days, s.values[ok[0] : ok[-1] + 1])


def _on_grid(daily: RegularSeries, step_days: int) -> RegularSeries:
    if step_days == 1:
        return daily
    return sr.block_average_downsample(daily.to_scattered())


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def stage_preprocess(data: wio.Dataset, cfg: PipelineConfig) -> tuple[PreprocessResult, dict]:
    warnings = []
    samples = [
        s for s in data.samples
        if (cfg.first is None or s.date >= cfg.first) and (cfg.last is None or s.date <= cfg.last)
    ]
    if not samples:
        raise DataError("input has no virus measurements in the selected date range")
    history = data.flows
    if len(history) < cfg.preprocess.min_flow_history:
        warnings.append(
            f"flow record has {len(history)} values (< {cfg.preprocess.min_flow_history}); "
            "flow outlier rule skipped"
        )
        history = None
    res = preprocess(samples, cfg.biomarker, history, calibrate=cfg.preprocess.calibrate)
    if history is None:
        res.warnings = [w for w in res.warnings if not w.startswith("no flow history")]
    res.warnings = warnings + res.warnings
    used = {}
    for p in res.points:
        used[p.biomarker_used] = used.get(p.biomarker_used, 0) + 1
    summary = {
        "n_samples": len(samples),
        "n_normalized": len(res.points),
        "flow_threshold_m3d": res.flow_threshold,
        "excluded_flow": [d.isoformat() for d in res.excluded_flow],
        "substituted": [d.isoformat() for d in res.substituted],
        "unusable": [d.isoformat() for d in res.unusable],
        "biomarker_used": used,
        "calibration": dict(res.calibration),
    }
    return res, summary


def resample(s: ScatteredSeries, cfg: PipelineConfig) -> RegularSeries:
    if cfg.resample == "weekly_block":
        return sr.block_average_downsample(s)
    if cfg.resample == "daily_shepard":
        return sr.shepard_interpolate(s, 1, cfg.shepard_power)
    return sr.linear_interpolate(s, 1)


def resample_flags(s: ScatteredSeries, grid: RegularSeries) -> list[set]:
    sampled = set(s.dates)
    flags = []
    for d, v in zip(grid.dates, grid.values):
        f = set()
        if math.isnan(v):
            f.add("missing")
        elif grid.step_days == 1 and d not in sampled:
            f.add("interpolated")
        flags.append(f)
    return flags


@dataclass
class SmoothResult:
    series: RegularSeries
    label: str
    overlay: dict  # name -> (dates, values) for the raw / SMA / LOESS plot
    summary: dict


def stage_smooth(s: ScatteredSeries, grid: RegularSeries, cfg: PipelineConfig) -> SmoothResult:
    """Smooth onto the configured grid.

    ``auto``: the SMA window is chosen by LOOCV on the weekly block averages;
    on a daily grid LOESS is then used with the k_L that best matches that
    weekly SMA.
    """
    sc = cfg.smoother
    weekly = sr.fill_gaps(sr.block_average_downsample(s))
    summary: dict = {"method": sc.method}

    k_sma = sc.window
    if sc.method == "auto":
        k_sma = sm.select_sma_window(weekly, sc.sma_candidates)
        summary["sma_window_selected"] = k_sma
        summary["sma_loocv"] = {str(k): sm.sma_loocv(weekly, k) for k in sc.sma_candidates if k <= len(weekly)}
    k_L = sc.neighbors
    ref = sm.sma(weekly, k_sma) if k_sma <= len(weekly) else None
    if sc.method == "auto" and grid.step_days == 1:
        if ref is None:
            raise DataError("series too short for SMA reference")
        match = sm.loess_match(s, ref, sc.loess_candidates)
        k_L = match.k_L
        summary["loess_neighbors_selected"] = k_L
        summary["loess_match"] = {
            str(k): {"pearson": r, "msim": m} for k, (r, m) in match.table.items()
        }

    if sc.method == "none":
        out, label = grid, "raw"
    elif sc.method == "loess" or (sc.method == "auto" and grid.step_days == 1):
        out, label = sm.loess_grid(s, k_L, 1), f"loess{k_L}"
    else:
        base = sr.fill_gaps(grid)
        out, label = sm.sma(base, k_sma), f"sma{k_sma}"
        if grid.step_days == 1:
            label = f"sma{k_sma}_daily"
    summary["label"] = label

    overlay = {"raw": (list(s.dates), list(s.values))}
    if ref is not None:
        overlay[f"sma{k_sma}"] = (ref.dates, list(ref.values))
    if k_L <= len(s):
        lg = sm.loess_grid(s, k_L, 1)
        overlay[f"loess{k_L}"] = (lg.dates, list(lg.values))
    return SmoothResult(out, label, overlay, summary)


@dataclass
class RegressResult:
    lag_table: rg.LagTable
    fit: rg.RegressionFit
    poly: rg.RegressionFit | None
    design: rg.DesignMatrix
    band: tuple[np.ndarray, np.ndarray]
    raw_fit: rg.RegressionFit | None
    summary: dict


def _fit_summary(fit: rg.RegressionFit) -> dict:
    return {
        "r_squared": fit.r_squared,
        "rmse": fit.rmse,
        "loocv_rmse": fit.loocv,
        "residual_sd": fit.residual_sd,
        "n": fit.n,
        "coefficients": [
            {"name": t.name, "estimate": t.estimate, "std_error": t.std_error,
             "t": t.t, "p": t.p, "significant": t.significant}
            for t in fit.t_stats
        ],
    }


def stage_regress(
    signal: RegularSeries,
    indicators: Mapping[str, RegularSeries],
    cfg: PipelineConfig,
    raw: RegularSeries | None = None,
) -> RegressResult:
    """Lag search, linear and polynomial fits of incidence on the signal."""
    rc = cfg.regression
    if "new_infections" not in indicators:
        raise DataError("regression needs the new_infections column")
    if rc.population is None and rc.target == "incidence":
        raise ConfigError("regression.population must be set to compute incidence")
    step = signal.step_days
    if rc.target == "incidence":
        daily_target = rg.incidence(indicators["new_infections"], rc.population)
    else:
        daily_target = indicators["new_infections"]
    target = _on_grid(daily_target, step)
    covs = {}
    for name in rc.covariates:
        if name not in indicators:
            raise DataError(f"covariate column {name!r} missing from input")
        covs[name] = _on_grid(indicators[name], step)
    max_lag = rc.max_lag_steps if rc.max_lag_steps is not None else (14 if step == 1 else 4)
    table = rg.cross_correlate(signal, target, max_lag)
    design = rg.build_design(signal, target, table.best_lag, covs)
    fit = rg.fit_linear(design)
    poly = None
    try:
        poly = rg.fit_polynomial(design.features[:, 0], design.target, rc.polynomial_order)
    except WBEError as exc:
        logger.warning("polynomial fit skipped: %s", exc)
    band = rg.confidence_band(fit, design.features, rc.confidence)
    raw_fit = None
    if raw is not None:
        raw_fit = rg.fit_linear(rg.build_design(raw, target, table.best_lag, covs))
    summary = {
        "lag_steps": table.best_lag,
        "lag_days": table.best_lag * step,
        "lag_r": table.best_r,
        "significance_threshold": table.threshold,
        "lag_significant": table.significant,
        "linear": _fit_summary(fit),
        "polynomial": _fit_summary(poly) if poly is not None else None,
        "raw_linear_r_squared": raw_fit.r_squared if raw_fit is not None else None,
        "confidence": rc.confidence,
        "target": rc.target,
    }
    return RegressResult(table, fit, poly, design, band, raw_fit, summary)


@dataclass
class ForecastResult:
    series: RegularSeries
    report: fc.EvaluationReport
    chosen: dict  # method -> EvaluationCell at the first horizon
    forecasts: dict  # method -> (dates, values)
    qq: tuple[np.ndarray, np.ndarray] | None
    summary: dict


def _grid_for(cfg: PipelineConfig, positive: bool) -> fc.EvaluationGrid:
    f = cfg.forecast
    horizons = cfg.horizon_steps()
    transforms = fc.TRANSFORMS if positive else tuple(t for t in fc.TRANSFORMS if t != "boxcox_then_difference")
    if f.method == "grid":
        return fc.EvaluationGrid(horizons, ses_transforms=transforms, ar_transforms=transforms, p_max=f.p_max)
    t = f.default_transform(f.method)
    if f.method == "ses":
        alphas = (f.param,) if f.param is not None else fc.DEFAULT_ALPHAS
        return fc.EvaluationGrid(horizons, ses_alphas=alphas, ses_transforms=(t,), ar_transforms=(), p_max=f.p_max)
    orders = (int(f.param),) if f.param is not None else None
    return fc.EvaluationGrid(horizons, ar_orders=orders, ses_transforms=(), ar_transforms=(t,), p_max=f.p_max)


def stage_forecast(signal: RegularSeries, cfg: PipelineConfig) -> ForecastResult:
    f = cfg.forecast
    y = sr.fill_gaps(_trim(signal))
    arr = y.array
    positive = bool((arr > 0).all())
    warnings = []
    if not positive:
        if f.default_transform("ar") == "boxcox_then_difference" and f.method != "grid":
            raise DataError("Box-Cox requires positive data")
        warnings.append("series not strictly positive; Box-Cox chains left out of the grid")
    adf_level = fc.adf_test(arr, f.adf_critical, f.adf_mode)
    adf_diff = fc.adf_test(np.diff(arr), f.adf_critical, f.adf_mode)
    lam = f.lam
    if lam is None and positive:
        lam = fc.boxcox_mle(arr)
    qq = fc.qq_points(fc.boxcox(arr, lam)) if lam is not None and positive else None

    grid = _grid_for(cfg, positive)
    report = fc.post_sample_evaluate(
        y, grid, lam=f.lam, lambda_scope=f.lambda_scope, scoring=f.scoring,
    )
    h0 = report.cells[0].horizon
    h_max = max(c.horizon for c in report.cells)
    methods = fc.METHODS if f.method == "grid" else (f.method,)
    chosen, forecasts = {}, {}
    for m in methods:
        t = f.default_transform(m)
        if t == "boxcox_then_difference" and not positive:
            t = "difference"
        cell = report.best(m, h0, by="aic" if m == "ar" else "rmse", transform=t)
        chosen[m] = cell
        vals = fc.fit_and_forecast(arr, m, cell.transform, cell.param, h_max,
                                   report.lam if cell.transform == "boxcox_then_difference" else None)
        dates = [y.end + timedelta(days=y.step_days * (i + 1)) for i in range(h_max)]
        forecasts[m] = (dates, vals)

    best_any = {}
    for m in methods:
        for h in sorted({c.horizon for c in report.cells}):
            c = report.best(m, h)
            best_any[f"{m}@{h}"] = {"transform": c.transform, "param": c.param, "rmse": c.rmse, "aic": c.aic}
    summary = {
        "n": len(y),
        "first": y.start.isoformat(),
        "last": y.end.isoformat(),
        "adf_level": _adf(adf_level),
        "adf_difference": _adf(adf_diff),
        "boxcox_lambda": lam,
        "lambda_scope": report.lambda_scope,
        "scoring": report.scoring,
        "n_origins": report.cells[0].n_origins,
        "first_origin": report.origin_dates[0].isoformat(),
        "chosen": {
            m: {"transform": c.transform, "param": c.param, "horizon_steps": c.horizon,
                "rmse": c.rmse, "aic": c.aic}
            for m, c in chosen.items()
        },
        "best_by_rmse": best_any,
        "warnings": warnings,
    }
    return ForecastResult(y, report, chosen, forecasts, qq, summary)


def _adf(r: fc.ADFResult) -> dict:
    return {"beta": r.beta, "t": r.t_stat, "critical": r.critical, "stationary": r.stationary, "mode": r.mode}


# ---------------------------------------------------------------------------
# Plot data and the full run
# ---------------------------------------------------------------------------


def emit_plot_data(series: Mapping[str, tuple[Sequence[date], Sequence[float]]], path) -> None:
    """Write ``date,series_name,value`` rows, one block per series."""
    for name, (dates, values) in series.items():
        if len(dates) != len(values):
            raise DataError(f"plot series {name!r}: dates and values differ in length")
    wio.atomic_write(path, wio.long_csv_text(series))


@dataclass
class RunReport:
    input: dict
    config: dict
    stages: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    files: list = field(default_factory=list)
    schema: str = SCHEMA

    def to_dict(self) -> dict:
        return {
            "schema": self.schema, "input": self.input, "config": self.config,
            "stages": self.stages, "warnings": self.warnings, "files": sorted(self.files),
        }


def input_info(path) -> dict:
    data = Path(path).read_bytes()
    return {"name": Path(path).name, "sha256": hashlib.sha256(data).hexdigest()}


def run(
    cfg: PipelineConfig,
    data: wio.Dataset,
    out_dir,
    input_meta: dict | None = None,
    stop_after: str | None = None,
    allow_raw: bool = False,
) -> RunReport:
    """Execute the stages in order and write all outputs under ``out_dir``."""
    if stop_after is not None and stop_after not in STAGES:
        raise ConfigError(f"unknown stage {stop_after!r}; stages: {', '.join(STAGES)}")
    last = STAGES.index(stop_after) if stop_after else len(STAGES) - 1
    wants = {name: i <= last for i, name in enumerate(STAGES)}
    if cfg.smoother.method == "none" and not allow_raw and (
        (wants["regress"] and cfg.regression.enabled) or (wants["forecast"] and cfg.forecast.enabled)
    ):
        raise ConfigError("regression and forecasting on un-smoothed input refused; pass --allow-raw")

    out = Path(out_dir)
    report = RunReport(input=input_meta or {}, config=config_mod.dump(cfg))
    report.warnings.extend(data.warnings)

    def write(name: str, text: str):
        wio.atomic_write(out / name, text)
        report.files.append(name)

    with stage("preprocess"):
        pre, summary = stage_preprocess(data, cfg)
        report.stages["preprocess"] = summary
        report.warnings.extend(pre.warnings)
        write("normalized.csv", wio.series_csv_text(
            [p.date for p in pre.points], [p.l_virus for p in pre.points],
            [set(p.flags) | {f"biomarker:{p.biomarker_used}"} for p in pre.points],
        ))
    scattered = pre.series()
    if not wants["resample"]:
        return _finish(report, write)

    with stage("resample"):
        grid = resample(scattered, cfg)
        report.stages["resample"] = {
            "method": cfg.resample, "step_days": grid.step_days, "n": len(grid),
            "start": grid.start.isoformat(), "missing": int(grid.missing.sum()),
        }
        write("resampled.csv", wio.series_csv_text(grid.dates, grid.values, resample_flags(scattered, grid)))
    if not wants["smooth"]:
        return _finish(report, write)

    with stage("smooth"):
        smooth = stage_smooth(scattered, grid, cfg)
        report.stages["smooth"] = smooth.summary
        flag = {f"{SMOOTHED_FLAG}:{smooth.label}"} if cfg.smoother.method != "none" else {"raw"}
        write("smoothed.csv", wio.series_csv_text(
            smooth.series.dates, smooth.series.values, [flag] * len(smooth.series),
        ))
        emit_plot_data(smooth.overlay, out / "plot_smoothing.csv")
        report.files.append("plot_smoothing.csv")
    signal = smooth.series

    if wants["regress"] and cfg.regression.enabled:
        with stage("regress"):
            needs_pop = cfg.regression.target == "incidence" and cfg.regression.population is None
            if needs_pop or "new_infections" not in data.indicators:
                report.warnings.append("regression skipped: needs new_infections (and regression.population for incidence)")
            else:
                res = stage_regress(signal, data.indicators, cfg, raw=grid if cfg.smoother.method != "none" else None)
                report.stages["regress"] = res.summary
                write("lag_table.csv", wio.table_csv_text(
                    ("lag_steps", "lag_days", "pearson_r", "n"),
                    ((l, l * signal.step_days, float(r), n) for l, r, n in
                     zip(res.lag_table.lags, res.lag_table.r, res.lag_table.n)),
                ))
                lo, hi = res.band
                fitted = res.fit.fitted
                write("regression_band.csv", wio.table_csv_text(
                    ("date", "observed", "lower", "fit", "upper"),
                    zip(res.design.dates, res.design.target.tolist(), lo.tolist(), fitted.tolist(), hi.tolist()),
                ))

    if wants["forecast"] and cfg.forecast.enabled:
        with stage("forecast"):
            fr = stage_forecast(signal, cfg)
            report.stages["forecast"] = fr.summary
            report.warnings.extend(fr.summary["warnings"])
            write("evaluation.csv", wio.table_csv_text(
                ("method", "transform", "param", "horizon_steps", "horizon_days", "rmse", "aic", "n_origins"),
                ((r["method"], r["transform"], float(r["param"]), r["horizon_steps"], r["horizon_days"],
                  r["rmse"], r["aic"], r["n_origins"]) for r in fr.report.rows()),
            ))
            rows = []
            for m, cell in fr.chosen.items():
                for h in sorted({c.horizon for c in fr.report.cells}):
                    c = fr.report.cell(m, cell.transform, cell.param, h)
                    for o, fcv, obs in zip(fr.report.origin_dates, c.forecasts, c.observed):
                        target = o + timedelta(days=fr.series.step_days * h)
                        rows.append((m, c.transform, float(c.param), h, o, target, float(fcv), float(obs)))
            write("postsample_scatter.csv", wio.table_csv_text(
                ("method", "transform", "param", "horizon_steps", "origin_date", "target_date",
                 "forecast", "observed"), rows,
            ))
            frows = []
            for m, (dates, vals) in fr.forecasts.items():
                cell = fr.chosen[m]
                frows.extend((d, float(v), m, cell.transform, float(cell.param)) for d, v in zip(dates, vals))
            write("forecast.csv", wio.table_csv_text(("date", "forecast", "method", "transform", "param"), frows))
            if fr.qq is not None:
                write("qq.csv", wio.table_csv_text(("theoretical", "sample"), zip(fr.qq[0].tolist(), fr.qq[1].tolist())))
    return _finish(report, write)


def _finish(report: RunReport, write) -> RunReport:
    report.files.append("report.json")
    write("report.json", wio.json_text(report.to_dict()))
    report.files.pop()  # write() appended it again
    return report


def run_file(config_path, input_path, out_dir, seed: int | None = None, stop_after=None, allow_raw=False) -> RunReport:
    cfg = config_mod.load(config_path, seed=seed) if config_path else config_mod.load(text="", seed=seed)
    data = wio.read_input_csv(input_path)
    return run(cfg, data, out_dir, input_info(input_path), stop_after, allow_raw)
