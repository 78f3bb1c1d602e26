"""Command-line interface.

Subcommands compose through files::

    wbe synth      --output DIR                    -> DIR/synthetic.csv, DIR/truth.csv
    wbe preprocess --input raw.csv --output DIR    -> DIR/normalized.csv
    wbe smooth     --input normalized.csv ...      -> DIR/resampled.csv, DIR/smoothed.csv
    wbe regress    --input smoothed.csv --indicators raw.csv ...
    wbe forecast   --input smoothed.csv ...        -> DIR/forecast.csv
    wbe evaluate   --input smoothed.csv ...        -> DIR/evaluation.csv
    wbe run        --input raw.csv --output DIR [--stage NAME]

Exit codes: 0 success, 1 usage or configuration, 2 data, 3 numeric failure.
Failures print one JSON object to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import timedelta
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import io as wio
from . import pipeline
from . import synthetic
from .config import STAGES
from .errors import ConfigError, DataError, WBEError

LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--output", metavar="DIR", default=".", help="output directory (default: .)")
    common.add_argument("--seed", type=int, metavar="N", help="overrides the config seed (default 0)")
    common.add_argument("--allow-raw", action="store_true",
                        help="permit regression/forecasting on un-smoothed input")

    p = _Parser(prog="wbe", description="Wastewater signal processing, regression and forecasting.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="generate a synthetic monitoring CSV")
    for name, what in (
        ("preprocess", "input CSV"), ("smooth", "normalized series CSV"),
        ("regress", "smoothed series CSV"), ("forecast", "smoothed series CSV"),
        ("evaluate", "smoothed series CSV"), ("run", "input CSV"),
    ):
        sp = sub.add_parser(name, parents=[common], help=f"{name} stage" if name != "run" else "full pipeline")
        sp.add_argument("--input", metavar="PATH", required=True, help=what)
        if name == "regress":
            sp.add_argument("--indicators", metavar="PATH", required=True,
                            help="input CSV carrying the indicator columns")
        if name == "run":
            sp.add_argument("--stage", choices=STAGES, metavar="NAME",
                            help=f"stop after this stage ({', '.join(STAGES)})")
    return p


def _setup_logging() -> None:
    level = os.environ.get("WBE_LOG_LEVEL", "warn").lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"WBE_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _signal(path, allow_raw: bool, what: str):
    sf = wio.read_series_csv(path)
    if not sf.all_flagged(pipeline.SMOOTHED_FLAG + ":") and not allow_raw:
        raise ConfigError(f"{what} on un-smoothed input refused ({path}); pass --allow-raw")
    return sf.regular()


def _cmd_synth(args, cfg):
    g = synthetic.generate(cfg.scenario)
    sc = cfg.scenario
    history = [(sc.start - timedelta(days=sc.history_days - i), q) for i, q in enumerate(g.flow_history)]
    indicators = {"tests": g.tests, "variant_share": g.variant_share, "new_infections": g.new_infections}
    out = Path(args.output)
    wio.atomic_write(out / "synthetic.csv", wio.input_csv_text(g.samples, indicators, history))
    wio.atomic_write(out / "truth.csv", wio.series_csv_text(
        g.l_virus_true.dates, g.l_virus_true.values, [{"truth"}] * len(g.l_virus_true),
    ))
    return {"files": ["synthetic.csv", "truth.csv"], "samples": len(g.samples)}


def _cmd_preprocess(args, cfg):
    data = wio.read_input_csv(args.input)
    with pipeline.stage("preprocess"):
        res, summary = pipeline.stage_preprocess(data, cfg)
    wio.atomic_write(Path(args.output) / "normalized.csv", wio.series_csv_text(
        [p.date for p in res.points], [p.l_virus for p in res.points],
        [set(p.flags) | {f"biomarker:{p.biomarker_used}"} for p in res.points],
    ))
    return {"preprocess": summary, "warnings": res.warnings}


def _cmd_smooth(args, cfg):
    s = wio.read_series_csv(args.input).scattered()
    out = Path(args.output)
    with pipeline.stage("resample"):
        grid = pipeline.resample(s, cfg)
    wio.atomic_write(out / "resampled.csv", wio.series_csv_text(grid.dates, grid.values, pipeline.resample_flags(s, grid)))
    with pipeline.stage("smooth"):
        res = pipeline.stage_smooth(s, grid, cfg)
    flag = {f"{pipeline.SMOOTHED_FLAG}:{res.label}"} if cfg.smoother.method != "none" else {"raw"}
    wio.atomic_write(out / "smoothed.csv", wio.series_csv_text(res.series.dates, res.series.values, [flag] * len(res.series)))
    pipeline.emit_plot_data(res.overlay, out / "plot_smoothing.csv")
    return {"smooth": res.summary}


def _cmd_regress(args, cfg):
    signal = _signal(args.input, args.allow_raw, "regression")
    data = wio.read_input_csv(args.indicators)
    with pipeline.stage("regress"):
        res = pipeline.stage_regress(signal, data.indicators, cfg)
    lo, hi = res.band
    wio.atomic_write(Path(args.output) / "regression_band.csv", wio.table_csv_text(
        ("date", "observed", "lower", "fit", "upper"),
        zip(res.design.dates, res.design.target.tolist(), lo.tolist(), res.fit.fitted.tolist(), hi.tolist()),
    ))
    return {"regress": res.summary}


def _cmd_forecast(args, cfg, evaluate_only=False):
    signal = _signal(args.input, args.allow_raw, "forecasting")
    with pipeline.stage("forecast"):
        fr = pipeline.stage_forecast(signal, cfg)
    out = Path(args.output)
    wio.atomic_write(out / "evaluation.csv", wio.table_csv_text(
        ("method", "transform", "param", "horizon_steps", "horizon_days", "rmse", "aic", "n_origins"),
        ((r["method"], r["transform"], float(r["param"]), r["horizon_steps"], r["horizon_days"],
          r["rmse"], r["aic"], r["n_origins"]) for r in fr.report.rows()),
    ))
    if not evaluate_only:
        rows = []
        for m, (dates, vals) in fr.forecasts.items():
            c = fr.chosen[m]
            rows.extend((d, float(v), m, c.transform, float(c.param)) for d, v in zip(dates, vals))
        wio.atomic_write(out / "forecast.csv", wio.table_csv_text(("date", "forecast", "method", "transform", "param"), rows))
    return {"forecast": fr.summary}


def _cmd_run(args, cfg):
    data = wio.read_input_csv(args.input)
    report = pipeline.run(cfg, data, args.output, pipeline.input_info(args.input), args.stage, args.allow_raw)
    return {"files": sorted(report.files), "warnings": report.warnings}


COMMANDS = {
    "synth": _cmd_synth,
    "preprocess": _cmd_preprocess,
    "smooth": _cmd_smooth,
    "regress": _cmd_regress,
    "forecast": _cmd_forecast,
    "evaluate": lambda a, c: _cmd_forecast(a, c, evaluate_only=True),
    "run": _cmd_run,
}


def _fail(kind: str, message: str, code: int, stage: str | None = None) -> int:
    payload = {"error": kind, "message": message, "exit_code": code}
    if stage:
        payload["stage"] = stage
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        cfg = config_mod.load(args.config, seed=args.seed)
        summary = COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        return _fail("usage", str(exc), 1)
    except WBEError as exc:
        return _fail(type(exc).__name__, str(exc), exc.exit_code, exc.stage)
    except OSError as exc:
        return _fail("DataError", f"{exc.filename}: {exc.strerror}", DataError.exit_code)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        logging.getLogger(__name__).debug("numeric failure", exc_info=True)
        return _fail("NumericError", str(exc), 3)
    print(json.dumps(wio._round(summary), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
