import json
import math
import xml.etree.ElementTree as ET
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from bayescp.diagnostics import summarize
from bayescp.hmc import Chain, ChainSet, HmcConfig, run_chains
from bayescp.model import ChangePointParams, derive_priors, predict_mean
from bayescp.report import (PLOT_FILES, SCHEMA_VERSION, ReportError, dumps_result, emit_result,
                            estimate_changepoint, lineplot_axes, parse_window, predictive_band,
                            qq_pairs, render_plots, residuals_and_qq)
from bayescp.synth import SynthSpec, generate

SVG_NS = "{http://www.w3.org/2000/svg}"


def _series(T, start=date(2020, 1, 6), y=None):
    spec = SynthSpec(0.01, -0.01, 1.0, 2.0, 0.5, 0.0, T, "normal", seed=0, start_date=start)
    s = generate(spec)
    return s if y is None else s.with_target(y)


def _const_chain_set(params, n=10, chains=2):
    row = np.asarray(params, dtype=float)
    cs = [Chain(np.tile(row, (n, 1)), 1.0, 0, 0.1) for _ in range(chains)]
    return ChainSet(cs, HmcConfig(num_samples=n, num_chains=chains))


def _tau_chain_set(taus, base=(0.0, 0.0, 1.0, 2.0, 0.5, 0.3)):
    d = np.tile(np.asarray(base, dtype=float), (len(taus), 1))
    d[:, 4] = taus
    return ChainSet([Chain(d, 1.0, 0, 0.1)], HmcConfig(num_samples=len(taus), num_chains=1))


# -- change point -------------------------------------------------------------

def test_changepoint_date_arithmetic():
    est = estimate_changepoint(_tau_chain_set([0.5] * 8), _series(101))
    assert est.week_index == 50
    assert est.calendar_date == date(2020, 12, 21)
    assert est.week_q05 == est.week_q95 == 50
    assert est.in_window is None


def test_changepoint_two_point_tau():
    T = 81
    est = estimate_changepoint(_tau_chain_set([0.2, 0.3] * 50), _series(T))
    assert est.tau_mean == pytest.approx(0.25)
    assert est.week_index == round(0.25 * (T - 1))
    assert est.week_q05 <= est.week_index <= est.week_q95


def test_window_uses_strict_containment():
    T = 200
    start = date(2016, 1, 4)
    week = (date(2019, 10, 28) - start).days // 7
    est = estimate_changepoint(_tau_chain_set([week / (T - 1)] * 4), _series(T, start),
                               parse_window("2020-03-01:2021-12-31"))
    assert est.calendar_date == date(2019, 10, 28)
    assert est.in_window is False
    inside = estimate_changepoint(_tau_chain_set([week / (T - 1)] * 4), _series(T, start),
                                  (date(2019, 10, 28), date(2019, 10, 28)))
    assert inside.in_window is True


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.001, 0.999), min_size=4, max_size=40), st.integers(8, 600))
def test_dates_are_whole_weeks_from_start(taus, T):
    s = _series(T)
    est = estimate_changepoint(_tau_chain_set(taus), s)
    assert est.week_index == round(est.tau_mean * (T - 1))
    assert est.week_q05 <= est.week_index <= est.week_q95
    for d in (est.calendar_date, est.date_q05, est.date_q95):
        assert (d - s.start_date).days % 7 == 0
    assert est.calendar_date == s.start_date + timedelta(days=7 * est.week_index)


@pytest.mark.parametrize("text", ["2020-03-01", "2020-03-01:xx", "2021-01-01:2020-01-01"])
def test_bad_windows(text):
    with pytest.raises(ReportError):
        parse_window(text)


# -- predictive band ----------------------------------------------------------

PARAMS = (0.01, -0.02, 1.0, 3.0, 0.6, 0.4)


def test_degenerate_posterior_without_noise_is_the_line():
    s = _series(50)
    band = predictive_band(_const_chain_set(PARAMS), s, "normal", 20.0, noise=False)
    line = predict_mean(ChangePointParams(*PARAMS), np.arange(50.0), 50, 20.0)
    np.testing.assert_allclose(band.lo, line, rtol=0, atol=1e-12)
    np.testing.assert_allclose(band.median, line, rtol=0, atol=1e-12)
    np.testing.assert_allclose(band.hi, line, rtol=0, atol=1e-12)


def test_normal_band_half_width():
    s = _series(30)
    band = predictive_band(_const_chain_set(PARAMS, n=2000), s, "normal", 20.0, noise=True)
    half = (band.hi - band.lo) / 2
    z95 = stats.norm.ppf(0.95)
    assert z95 == pytest.approx(1.645, abs=1e-3)
    assert np.all(np.abs(half - z95 * 0.4) < 0.05 * z95 * 0.4)


def test_cauchy_band_strictly_wider():
    s = _series(30)
    cs = _const_chain_set(PARAMS, n=2000)
    n = predictive_band(cs, s, "normal", 20.0, rng_seed=3)
    c = predictive_band(cs, s, "cauchy", 20.0, rng_seed=3)
    assert np.all(c.hi - c.lo > n.hi - n.lo)


def test_bands_are_nested_and_ordered(small_fit, small_series):
    wide = predictive_band(small_fit, small_series, "normal", 20.0, band=0.9, rng_seed=1)
    narrow = predictive_band(small_fit, small_series, "normal", 20.0, band=0.5, rng_seed=1)
    assert np.all(wide.lo <= wide.median) and np.all(wide.median <= wide.hi)
    assert np.all(wide.lo <= narrow.lo) and np.all(narrow.hi <= wide.hi)


def test_band_grid_and_level_validation(small_fit, small_series):
    b = predictive_band(small_fit, small_series, grid=[0, 10.5, 59])
    assert b.x.tolist() == [0.0, 10.5, 59.0]
    with pytest.raises(ReportError):
        predictive_band(small_fit, small_series, grid=[-1, 3])
    with pytest.raises(ReportError):
        predictive_band(small_fit, small_series, band=1.0)


def test_band_coverage_over_seeds():
    coverage = []
    cfg = HmcConfig(num_samples=100, num_chains=2, warmup_steps=100)
    for seed in range(20):
        s = generate(SynthSpec(0.01, -0.02, 1.0, 3.0, 0.6, 0.3, 40, "normal", seed=100 + seed))
        cs = run_chains(s, derive_priors(s), "normal", 20.0, HmcConfig(
            num_samples=cfg.num_samples, num_chains=cfg.num_chains,
            warmup_steps=cfg.warmup_steps, seed=seed))
        b = predictive_band(cs, s, "normal", 20.0, rng_seed=seed)
        coverage.append(np.mean((s.target >= b.lo) & (s.target <= b.hi)))
    assert np.mean(coverage) >= 0.8


# -- residuals ----------------------------------------------------------------

def test_exact_data_has_zero_residuals():
    p = ChangePointParams(*PARAMS)
    y = predict_mean(p, np.arange(40.0), 40, 20.0)
    check = residuals_and_qq(_const_chain_set(PARAMS), _series(40, y=y), "normal", 20.0)
    np.testing.assert_allclose(check.residuals, 0.0, atol=1e-12)


def test_qq_three_point_oracle():
    theo, sample = qq_pairs([1.0, -1.0, 0.0])
    sd = np.std([-1.0, 0.0, 1.0], ddof=1)
    np.testing.assert_allclose(sample, np.array([-1.0, 0.0, 1.0]) / sd, rtol=1e-15)
    np.testing.assert_allclose(theo, stats.norm.ppf([1 / 6, 3 / 6, 5 / 6]), rtol=1e-15)


def test_qq_is_sorted(rng):
    theo, sample = qq_pairs(rng.standard_cauchy(101))
    assert np.all(np.diff(sample) >= 0) and np.all(np.diff(theo) > 0)
    assert theo[50] == 0.0


def test_recovery_residuals_centered(recovery_fit, recovery_series):
    check = residuals_and_qq(recovery_fit, recovery_series, "normal", 20.0)
    assert abs(check.summary()["mean"]) < 0.05


# -- plots --------------------------------------------------------------------

def _report_parts(cs, s):
    est = estimate_changepoint(cs, s)
    band = predictive_band(cs, s, "normal", 20.0, rng_seed=0)
    check = residuals_and_qq(cs, s, "normal", 20.0)
    return est, band, check


def test_four_plots_parse_and_are_deterministic(small_fit, small_series):
    parts = _report_parts(small_fit, small_series)
    a = render_plots(small_fit, small_series, *parts)
    b = render_plots(small_fit, small_series, *_report_parts(small_fit, small_series))
    assert sorted(a) == sorted(PLOT_FILES)
    for name in PLOT_FILES:
        assert a[name] == b[name]
        root = ET.fromstring(a[name].encode("utf-8"))
        assert root.tag == SVG_NS + "svg"


def test_changepoint_marker_position(small_fit, small_series):
    est, band, check = _report_parts(small_fit, small_series)
    doc = render_plots(small_fit, small_series, est, band, check)["lineplot.svg"]
    root = ET.fromstring(doc.encode("utf-8"))
    marker = root.find(f".//{SVG_NS}line[@id='changepoint-marker']")
    x1 = float(marker.get("x1"))
    # axes box: left 70, width 760, x range [0, T-1]
    expected = 70 + est.week_index / (small_series.T - 1) * 760
    assert x1 == pytest.approx(expected, abs=0.006)
    ax = lineplot_axes(small_series, est, band, np.zeros(small_series.T))
    assert x1 == pytest.approx(float(ax.sx(est.week_index)), abs=0.006)
    for key in ("changepoint-ci", "predictive-band", "regression-line"):
        assert root.find(f".//*[@id='{key}']") is not None


def test_empty_posterior_is_an_error(small_series):
    empty = ChainSet([], HmcConfig())
    with pytest.raises(ReportError):
        estimate_changepoint(empty, small_series)
    with pytest.raises(ReportError):
        predictive_band(empty, small_series)


# -- JSON result --------------------------------------------------------------

def test_result_round_trip(small_fit, small_series):
    est, band, check = _report_parts(small_fit, small_series)
    doc = emit_result(small_series, summarize(small_fit), est, band, check, {"seed": 11})
    text = dumps_result(doc)
    assert json.loads(text) == doc
    assert doc["schema_version"] == SCHEMA_VERSION
    assert set(doc) == {"schema_version", "converged", "input", "config", "diagnostics",
                        "changepoint", "band", "residuals"}
    assert doc["input"]["weeks"] == small_series.T
    assert len(doc["band"]["lo"]) == small_series.T


def test_non_convergence_propagates(small_series):
    d = [np.random.default_rng(i).normal(i * 5, 0.1, (20, 6)) for i in range(2)]
    for arr in d:
        arr[:, 4] = 0.5
        arr[:, 5] = 0.3
    cs = ChainSet([Chain(a, 1.0, 0, 0.1) for a in d], HmcConfig(num_samples=20, num_chains=2))
    diag = summarize(cs)
    assert not diag.converged
    doc = emit_result(small_series, diag, *_report_parts(cs, small_series), {})
    assert json.loads(dumps_result(doc))["converged"] is False


def test_recovery_result_tau(recovery_fit, recovery_series):
    est, band, check = _report_parts(recovery_fit, recovery_series)
    doc = emit_result(recovery_series, summarize(recovery_fit), est, band, check, {})
    assert 0.70 <= doc["changepoint"]["tau_mean"] <= 0.80
    assert doc["converged"] is True
