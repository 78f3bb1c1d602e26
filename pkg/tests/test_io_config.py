import io
import json
import math
from datetime import date

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wbe import config as cf
from wbe import io as wio
from wbe.errors import ConfigError, DataError
from wbe.preprocess import Sample
from wbe.synthetic import Scenario, generate

HEADER = "date,c_virus_cpl,flow_m3d,nh4_mgl,cod_mgl,ntot_mgl,tests,variant_share_pct,new_infections\n"


def parse(text):
    return wio.parse_input(io.StringIO(text), "in.csv")


# --- ingestion ----------------------------------------------------------------


def test_full_row():
    d = parse(HEADER + "2021-03-01,120000,540000,38.2,610,52.0,45000,62.5,2100\n")
    assert d.samples == [Sample(date(2021, 3, 1), 120000.0, 540000.0, 38.2, 610.0, 52.0)]
    assert d.indicators["tests"].values == (45000.0,)
    assert d.indicators["variant_share"].values == (62.5,)
    assert d.flows == [540000.0]


def test_empty_cells_and_flow_only_rows():
    d = parse(HEADER + "2021-03-01,1,2,,4,5,,,\n2021-03-02,,7,,,,,,9\n2021-03-04,,,,,,,,11\n")
    assert d.samples[0].c_nh4 is None and len(d.samples) == 1
    assert d.flows == [2.0, 7.0]
    ni = d.indicators["new_infections"]
    assert ni.start == date(2021, 3, 2) and np.isnan(ni.values[1]) and ni.values[2] == 11.0


@pytest.mark.parametrize("row, msg", [
    ("2021-13-01,1,,,,,,,", "line 2"),
    ("2021-3-1,1,,,,,,,", "malformed date"),
    ("2021-03-01,abc,,,,,,,", "malformed number"),
    ("2021-03-01,inf,,,,,,,", "non-finite"),
    ("2021-03-01,1,,,", "expected 9 fields"),
])
def test_malformed_rows(row, msg):
    with pytest.raises(DataError, match=msg):
        parse(HEADER + row + "\n")


def test_duplicates_unknown_and_order():
    with pytest.raises(DataError, match="duplicate date"):
        parse(HEADER + "2021-03-01,1,,1,,,,,\n2021-03-01,2,,1,,,,,\n")
    d = parse("date,c_virus_cpl,nh4_mgl,colour\n2021-03-02,2,1,x\n2021-03-01,1,1,y\n")
    assert [s.date.day for s in d.samples] == [1, 2]
    assert "unknown column 'colour'" in d.warnings[0]
    with pytest.raises(DataError, match="header"):
        parse("")
    with pytest.raises(DataError, match="date"):
        parse("c_virus_cpl\n1\n")


def test_generated_csv_round_trip(tmp_path):
    g = generate(Scenario(duration_days=60, seed=2))
    text = wio.input_csv_text(g.samples, {"tests": g.tests, "new_infections": g.new_infections})
    path = tmp_path / "x.csv"
    wio.atomic_write(path, text)
    d = wio.read_input_csv(path)
    assert d.samples == sorted(g.samples, key=lambda s: s.date)
    assert d.indicators["tests"] == g.tests


# --- stage files -------------------------------------------------------------------


def test_series_file_round_trip(tmp_path):
    dates = [date(2021, 3, 1), date(2021, 3, 8), date(2021, 3, 15)]
    text = wio.series_csv_text(dates, [1.5, math.nan, 0.1], [{"b", "a"}, set(), {"smoothed:sma3"}])
    assert text.splitlines()[1] == "2021-03-01,1.5,a;b"
    (tmp_path / "s.csv").write_text(text)
    sf = wio.read_series_csv(tmp_path / "s.csv")
    assert sf.step_days == 7 and np.isnan(sf.values[1])
    assert sf.flags[0] == frozenset({"a", "b"})
    assert not sf.all_flagged("smoothed:")
    assert len(sf.scattered()) == 2 and sf.regular().step_days == 7


def test_series_file_errors(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("when,value\n")
    with pytest.raises(DataError, match="header"):
        wio.read_series_csv(p)
    p.write_text("date,value,flags\n2021-03-02,1,\n2021-03-01,1,\n")
    with pytest.raises(DataError, match="increasing"):
        wio.read_series_csv(p)
    p.write_text("date,value,flags\n2021-03-01,1,\n2021-03-03,1,\n")
    with pytest.raises(DataError, match="regular"):
        wio.read_series_csv(p).regular()


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_format_round_trips(v):
    assert float(wio._fmt(v)) == v


def test_json_rounding_and_nulls():
    text = wio.json_text({"b": 1 / 3, "a": [math.nan, np.float64(2.0), np.bool_(True)], "d": date(2021, 1, 1)})
    obj = json.loads(text)
    assert list(obj) == ["a", "b", "d"]
    assert obj["b"] == 0.333333333333 and obj["a"] == [None, 2.0, True] and obj["d"] == "2021-01-01"
    with pytest.raises(TypeError):
        wio.json_text({"x": object()})


def test_atomic_write_leaves_no_temp(tmp_path):
    wio.atomic_write(tmp_path / "sub" / "f.txt", "hello")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["f.txt"]


def test_long_csv_skips_missing():
    d = [date(2021, 1, 1), date(2021, 1, 2)]
    text = wio.long_csv_text({"raw": (d, [1.0, math.nan]), "sma3": (d, [2.0, 3.0])})
    assert text.splitlines() == ["date,series_name,value", "2021-01-01,raw,1.0",
                                 "2021-01-01,sma3,2.0", "2021-01-02,sma3,3.0"]


# --- config ----------------------------------------------------------------------


def test_defaults():
    cfg = cf.load()
    assert cfg.seed == 0 and cfg.resample == "daily_linear" and cfg.smoother.method == "auto"
    assert cfg.horizon_steps() == (7, 14)
    assert cfg.forecast.default_transform("ses") == "difference"
    assert cfg.forecast.default_transform("ar") == "boxcox_then_difference"


def test_parse_values():
    cfg = cf.load(text="""
        # comment
        seed = 7
        resample.method = weekly_block
        smoother.method = sma
        smoother.window = 5
        biomarker.fallback_order = cod, nh4
        biomarker.load.cod = 100
        regression.covariates = tests,variant_share
        forecast.horizon_days = 7, 14
        forecast.lambda = 0.117
        synth.noise.virus = 0.2
        data.first = 2021-01-01
    """)
    assert cfg.seed == 7 and cfg.scenario.seed == 7 and cfg.step_days == 7
    assert cfg.smoother.spec().label == "sma5"
    assert cfg.biomarker.fallback_order == ("cod", "nh4") and cfg.biomarker.loads["cod"] == 100
    assert cfg.biomarker.loads["nh4"] == 8.0
    assert cfg.regression.covariates == ("tests", "variant_share")
    assert cfg.horizon_steps() == (1, 2) and cfg.forecast.lam == 0.117
    assert cfg.scenario.noise.virus == 0.2 and cfg.first == date(2021, 1, 1)
    assert cf.load(text="seed = 3", seed=9).seed == 9


def test_empty_value_resets_default():
    assert cf.load(text="smoother.window =").smoother.window == 3


@pytest.mark.parametrize("text, msg", [
    ("nonsense", "expected 'key = value'"),
    ("Seed = 1", "malformed key"),
    ("smoother.colour = red", "unknown key"),
    ("seed = 1\nseed = 2", "duplicate key"),
    ("seed = x", "integer"),
    ("forecast.enabled = yes", "true or false"),
    ("resample.method = weekly_block\nsmoother.method = loess", "weekly_block"),
    ("smoother.window = 4\nsmoother.method = sma", "odd"),
    ("regression.covariates = rain", "unknown regression covariate"),
    ("forecast.param = 0.5", "forecast.method"),
    ("forecast.method = ses\nforecast.param = 2", "alpha"),
    ("forecast.method = ar\nforecast.param = 1.5", "integer"),
    ("resample.method = weekly_block\nforecast.horizon_days = 3", "multiples"),
    ("data.first = 2021-02-01\ndata.last = 2021-01-01", "precedes"),
    ("biomarker.load.nh4 = 0", "positive"),
    ("synth.sampling = hourly", "sampling"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        cf.load(text=text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        cf.load(tmp_path / "nope.cfg")


def test_dump_covers_every_key_and_reloads():
    cfg = cf.load(text="seed = 4\nsmoother.method = loess\nforecast.p_max = 6")
    flat = cf.dump(cfg)
    assert set(flat) == set(cf.KEYS)
    lines = []
    for k, v in flat.items():
        if v is None:
            continue
        if isinstance(v, list):
            v = ", ".join(map(str, v))
        elif isinstance(v, bool):
            v = str(v).lower()
        lines.append(f"{k} = {v}")
    assert cf.load(text="\n".join(lines)) == cfg
