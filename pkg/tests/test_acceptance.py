"""Acceptance criteria 1-10.

Each test prints one PASS/FAIL line (collected into the pytest terminal
summary, or printed directly when run as ``python3 tests/test_acceptance.py``).
"""

import math
import sys
import time
from datetime import timedelta
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402

from wbe import cli, forecast as fc, metrics, regression as rg, series as sr, smoothing as smo  # noqa: E402
from wbe.preprocess import BiomarkerConfig, preprocess  # noqa: E402
from wbe.synthetic import Noise, Scenario, Wave, generate  # noqa: E402

pytestmark = pytest.mark.acceptance

# Lag recovery uses narrow waves over a low baseline so the cross-correlation
# peak is sharp; see scripts/lag_recovery.py for the seed study.
LAG_SCENARIO = dict(
    waves=(Wave(70.0, 0.010, 15.0), Wave(230.0, 0.015, 18.0), Wave(430.0, 0.012, 14.0)),
    baseline_prevalence=5e-4, sampling="daily", test_effect=0.0,
)


def report(cid: str, title: str, ok: bool, detail: str, elapsed: float, budget: float | None):
    within = budget is None or elapsed < budget
    status = "PASS" if ok and within else "FAIL"
    limit = f" (limit {budget:g} s)" if budget is not None else ""
    line = f"[{status}] {cid} {title}: {detail}; {elapsed:.2f} s{limit}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line
    assert within, line


def normalized(g):
    return preprocess(g.samples, BiomarkerConfig(), g.flow_history).series()


def test_c01_metric_fixtures():
    t0 = time.perf_counter()
    checks = {
        "rmse": abs(metrics.rmse([0, 0], [3, 4]) - 3.535534) <= 1e-6,
        "msim": metrics.msim([1], [3]) == 0.5,
        "r2": metrics.r_squared([1, 2, 3], [1, 2, 4]) == 0.5,
        "threshold": metrics.significance_threshold(100) == 0.196,
        "aic": abs(metrics.aic_ls(10, 10, 2) - 4.0) <= 1e-12,
    }
    dt = time.perf_counter() - t0
    bad = [k for k, v in checks.items() if not v]
    report("C1", "metric fixtures", not bad, f"{5 - len(bad)}/5 exact", dt, 0.1)


def test_c02_loocv_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        X = rng.standard_normal((30, 3))
        y = X @ rng.standard_normal(3) + rng.standard_normal(30)
        lib = rg.fit_linear(rg.DesignMatrix(X, y)).loocv
        errs = []
        for i in range(30):
            keep = np.arange(30) != i
            A = np.column_stack([np.ones(29), X[keep]])
            beta = np.linalg.lstsq(A, y[keep], rcond=None)[0]
            errs.append(y[i] - np.concatenate(([1.0], X[i])) @ beta)
        worst = max(worst, abs(lib - math.sqrt(np.mean(np.square(errs)))))
    dt = time.perf_counter() - t0
    report("C2", "LOOCV oracle", worst <= 1e-9, f"max |diff| = {worst:.1e} over 50 datasets", dt, 5)


def test_c03_boxcox():
    t0 = time.perf_counter()
    hits = sum(abs(fc.boxcox_mle(np.exp(np.random.default_rng(s).standard_normal(1000)))) <= 0.1
               for s in range(100))
    y = np.random.default_rng(0).lognormal(3, 1, 500)
    worst = max(float(np.max(np.abs(fc.inv_boxcox(fc.boxcox(y, lam), lam) / y - 1)))
                for lam in (-1.0, 0.0, 0.117, 1.0))
    dt = time.perf_counter() - t0
    report("C3", "Box-Cox recovery", hits >= 90 and worst <= 1e-10,
           f"lambda within 0.1 of 0 in {hits}/100 seeds, round-trip max rel err {worst:.1e}", dt, 10)


def _ar2(seed, n=2000, burn=200):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n + burn)
    y = np.zeros(n + burn)
    for t in range(2, n + burn):
        y[t] = 0.5 * y[t - 1] - 0.3 * y[t - 2] + e[t]
    return y[burn:]


def test_c04_ar_recovery():
    t0 = time.perf_counter()
    hits = 0
    for s in range(100):
        phi = fc.ar_fit(_ar2(s), 2).phi
        hits += abs(phi[0] - 0.5) <= 0.05 and abs(phi[1] + 0.3) <= 0.05
    dt = time.perf_counter() - t0
    report("C4", "AR(2) recovery", hits >= 95, f"both coefficients within 0.05 in {hits}/100 seeds", dt, 10)


def test_c05_adf():
    t0 = time.perf_counter()
    rw = ar = 0
    for s in range(100):
        rng = np.random.default_rng(s)
        rw += not fc.adf_test(np.cumsum(rng.standard_normal(500)), -2.86).stationary
        e = rng.standard_normal(700)
        y = np.zeros(700)
        for t in range(1, 700):
            y[t] = 0.2 * y[t - 1] + e[t]
        ar += fc.adf_test(y[200:], -2.86).stationary
    dt = time.perf_counter() - t0
    report("C5", "ADF discrimination", rw >= 90 and ar >= 90,
           f"random walk non-stationary {rw}/100, AR(1) 0.2 stationary {ar}/100", dt, 10)


def test_c06_lag_recovery():
    t0 = time.perf_counter()
    lags = []
    for seed in range(20):
        g = generate(Scenario(seed=seed, **LAG_SCENARIO))
        signal = smo.loess_grid(normalized(g), 11)
        indicator = smo.sma(g.new_infections, 7)
        lags.append(rg.cross_correlate(signal, indicator, 14).best_lag)
    dt = time.perf_counter() - t0
    hits = sum(l == 8 for l in lags)
    report("C6", "lag recovery", hits == 20, f"best_lag = 8 in {hits}/20 seeds (lags {sorted(set(lags))})", dt, 5)


def _shape_one(seed):
    g = generate(Scenario(seed=seed, sampling="daily"))
    s = normalized(g)
    signal = smo.loess_grid(s, 11)
    rep = fc.post_sample_evaluate(signal)
    out = {}
    for m in fc.METHODS:
        out[m] = (rep.best(m, 7).rmse, rep.best(m, 14).rmse)
    out["default"] = (rep.best("ar", 7, by="aic", transform="boxcox_then_difference").rmse,
                      rep.best("ses", 7, transform="difference").rmse)

    target = rg.incidence(g.new_infections, g.scenario.population)
    lag = rg.cross_correlate(signal, target, 14).best_lag
    raw = s.to_regular(1)
    d_raw = rg.build_design(raw, target, lag)
    d_sm = rg.build_design(signal, target, lag)
    common = set(d_raw.dates)
    keep = np.array([d in common for d in d_sm.dates])
    d_sm = rg.DesignMatrix(d_sm.features[keep], d_sm.target[keep])
    out["r2"] = (rg.fit_linear(d_sm).r_squared, rg.fit_linear(d_raw).r_squared)
    return out


def test_c07_forecast_and_regression_shape():
    t0 = time.perf_counter()
    res = [_shape_one(seed) for seed in range(20)]
    dt = time.perf_counter() - t0
    a = sum(r["ses"][1] > r["ses"][0] and r["ar"][1] > r["ar"][0] for r in res)
    b = sum(r["ar"][0] <= r["ses"][0] for r in res)
    c = sum(r["r2"][0] > r["r2"][1] for r in res)
    d = sum(r["default"][0] <= r["default"][1] for r in res)
    info = f"[INFO] C7b' shipped default chains only (AR Box-Cox+diff by AIC vs SES diff): AR <= SES in {d}/20"
    ACCEPTANCE_LINES.append(info)
    print(info)
    report("C7", "forecast and regression shape", a >= 16 and b >= 16 and c >= 18,
           f"(a) 14 d > 7 d for SES and AR {a}/20, (b) AR(best) <= SES(best) at 7 d {b}/20, "
           f"(c) smoothed R2 > raw R2 {c}/20", dt, 60)


def test_c08_downsampling_vs_interpolation():
    t0 = time.perf_counter()
    rs = []
    for seed in range(5):
        s = normalized(generate(Scenario(seed=seed, sampling="daily")))
        block = sr.block_average_downsample(s)
        monday = s.first + timedelta(days=(7 - s.first.weekday()) % 7)
        shep = sr.shepard_interpolate(s, 7, start=monday, end=s.last)
        sv = dict(zip(shep.dates, shep.values))
        pairs = [(v, sv[d]) for d, v in zip(block.dates, block.values) if d in sv and not math.isnan(v)]
        rs.append(metrics.pearson_r(*zip(*pairs)))
    dt = time.perf_counter() - t0
    report("C8", "downsampling vs interpolation", min(rs) > 0.95,
           f"Pearson r min {min(rs):.4f} over 5 seeds", dt, 2)


def test_c09_noiseless_round_trip():
    t0 = time.perf_counter()
    g = generate(Scenario(noise=Noise(0.0, 0.0, 0.0, 0.0), seed=0))
    res = preprocess(g.samples, BiomarkerConfig(), g.flow_history)
    truth = dict(zip(g.l_virus_true.dates, g.l_virus_true.values))
    worst = max(abs(p.l_virus / truth[p.date] - 1) for p in res.points)
    dt = time.perf_counter() - t0
    report("C9", "noiseless round trip", worst <= 1e-9,
           f"max rel err {worst:.1e} over {len(res.points)} samples", dt, 2)


def test_c10_determinism(tmp_path):
    t0 = time.perf_counter()
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed = 4\nregression.population = 1900000\n")
    assert cli.main(["synth", "--config", str(cfg), "--output", str(tmp_path / "in")]) == 0
    src = str(tmp_path / "in" / "synthetic.csv")
    for d in ("a", "b"):
        assert cli.main(["run", "--config", str(cfg), "--input", src, "--output", str(tmp_path / d)]) == 0
    a = sorted(p.name for p in (tmp_path / "a").iterdir())
    same = a == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(
        (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in a)
    dt = time.perf_counter() - t0
    report("C10", "determinism", same, f"{len(a)} files byte-identical across two runs", dt, 10)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
