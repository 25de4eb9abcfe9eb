"""Posterior summaries for decisions: change-point date, predictive band,
residual checks, plots and the JSON result document."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from datetime import date, timedelta

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from . import svg
from .diagnostics import DiagnosticsReport
from .model import (DEFAULT_SHARPNESS, PARAM_NAMES, ChangePointParams, LikelihoodKind,
                    predict_mean)

SCHEMA_VERSION = "1.0"
PLOT_FILES = ("lineplot.svg", "posterior.svg", "residuals.svg", "qq.svg")


class ReportError(ValueError):
    pass


def _require_draws(chain_set) -> np.ndarray:
    if chain_set is None or not chain_set.chains or chain_set.num_draws == 0:
        raise ReportError("posterior is empty")
    return chain_set.pooled()


def parse_window(text: str) -> tuple:
    """``"2020-03-01:2021-12-31"`` to an inclusive ``(start, end)`` date pair."""
    try:
        a, b = text.split(":")
        start, end = date.fromisoformat(a.strip()), date.fromisoformat(b.strip())
    except ValueError:
        raise ReportError(f"event window must look like YYYY-MM-DD:YYYY-MM-DD, got {text!r}") from None
    if end < start:
        raise ReportError(f"event window ends before it starts: {text!r}")
    return start, end


# -- change point -------------------------------------------------------------

@dataclass(frozen=True)
class ChangePointEstimate:
    tau_mean: float
    tau_median: float
    tau_q05: float
    tau_q95: float
    week_index: int
    week_q05: int
    week_q95: int
    calendar_date: date
    date_q05: date
    date_q95: date
    in_window: "bool | None"

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("calendar_date", "date_q05", "date_q95"):
            d[k] = d[k].isoformat()
        return d


def estimate_changepoint(chain_set, series, window=None) -> ChangePointEstimate:
    """Posterior-mean change point mapped to a week and a calendar date.

    ``window`` is an inclusive ``(start, end)`` date pair or None; with None
    ``in_window`` is None.
    """
    tau = _require_draws(chain_set)[:, PARAM_NAMES.index("tau")]
    T = series.T
    tau_mean = float(np.mean(tau))
    q05, med, q95 = (float(v) for v in np.quantile(tau, [0.05, 0.5, 0.95]))
    week = int(round(tau_mean * (T - 1)))
    wk05 = min(int(round(q05 * (T - 1))), week)
    wk95 = max(int(round(q95 * (T - 1))), week)
    when = series.start_date + timedelta(days=7 * week)
    inside = None
    if window is not None:
        inside = bool(window[0] <= when <= window[1])
    return ChangePointEstimate(tau_mean, med, q05, q95, week, wk05, wk95, when,
                               series.start_date + timedelta(days=7 * wk05),
                               series.start_date + timedelta(days=7 * wk95), inside)


# -- predictive band ----------------------------------------------------------

@dataclass(frozen=True)
class PredictiveBand:
    x: np.ndarray
    median: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    level: float
    noise: bool

    def to_dict(self) -> dict:
        return {"level": self.level, "noise": self.noise,
                "x": [float(v) for v in self.x], "median": [float(v) for v in self.median],
                "lo": [float(v) for v in self.lo], "hi": [float(v) for v in self.hi]}


def _mean_curves(draws, x, T, sharpness):
    w1, w2, b1, b2, tau = (draws[:, i][:, None] for i in range(5))
    gamma = tau * (T - 1)
    seg1 = w1 * x[None, :] + b1
    seg2 = w2 * x[None, :] + b2
    if sharpness > 0:
        s = expit(sharpness * (x[None, :] - gamma))
        return seg1 + s * (seg2 - seg1)
    return np.where(x[None, :] >= gamma, seg2, seg1)


def predictive_band(chain_set, series, kind=LikelihoodKind.NORMAL,
                    sharpness: float = DEFAULT_SHARPNESS, grid=None, noise: bool = True,
                    band: float = 0.90, rng_seed: int = 0) -> PredictiveBand:
    """Monte Carlo posterior predictive band over ``grid`` (default: every week).

    Each posterior draw gives a regression curve; with ``noise`` one draw of
    the likelihood (Normal or Cauchy with scale sigma) is added per point.
    The band is the pointwise central ``band`` interval across draws.
    """
    draws = _require_draws(chain_set)
    if not 0.0 < band < 1.0:
        raise ReportError("band must lie in (0, 1)")
    T = series.T
    x = np.arange(T, dtype=float) if grid is None else np.asarray(grid, dtype=float)
    if np.any(x < 0) or np.any(x > T - 1):
        raise ReportError("grid must lie within [0, T-1]")
    mu = _mean_curves(draws, x, T, sharpness)
    if noise:
        rng = np.random.Generator(np.random.PCG64(int(rng_seed)))
        sigma = draws[:, 5][:, None]
        if LikelihoodKind.parse(kind) is LikelihoodKind.NORMAL:
            eps = rng.standard_normal(mu.shape)
        else:
            eps = rng.standard_cauchy(mu.shape)
        mu = mu + sigma * eps
    tail = (1.0 - band) / 2.0
    lo, med, hi = np.quantile(mu, [tail, 0.5, 1.0 - tail], axis=0)
    return PredictiveBand(x, med, lo, hi, float(band), bool(noise))


# -- residuals ----------------------------------------------------------------

@dataclass(frozen=True)
class ResidualCheck:
    x: np.ndarray
    residuals: np.ndarray
    theoretical: np.ndarray  # standard-normal quantiles
    sample: np.ndarray       # sorted standardized residuals

    def summary(self) -> dict:
        r = self.residuals
        return {"n": int(r.size), "mean": float(np.mean(r)),
                "std": float(np.std(r, ddof=1)) if r.size > 1 else 0.0,
                "min": float(np.min(r)), "max": float(np.max(r))}


def posterior_mean_params(chain_set) -> ChangePointParams:
    return ChangePointParams.from_array(np.mean(_require_draws(chain_set), axis=0))


def qq_pairs(residuals):
    r = np.asarray(residuals, dtype=float)
    n = r.size
    sd = float(np.std(r, ddof=1)) if n > 1 else 0.0
    sample = np.sort((r - r.mean()) / sd) if sd > 0 else np.zeros(n)
    theoretical = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return theoretical, sample


def residuals_and_qq(chain_set, series, kind=LikelihoodKind.NORMAL,
                     sharpness: float = DEFAULT_SHARPNESS) -> ResidualCheck:
    """Residuals about the posterior-mean regression line and QQ coordinates.

    Sample coordinates are residuals standardized by their mean and sample
    standard deviation; theoretical ones sit at plotting positions
    ``(i - 0.5) / n``.
    """
    p = posterior_mean_params(chain_set)
    x = np.asarray(series.week_index, dtype=float)
    resid = np.asarray(series.target, dtype=float) - predict_mean(p, x, series.T, sharpness)
    theo, sample = qq_pairs(resid)
    return ResidualCheck(x, resid, theo, sample)


# -- plots --------------------------------------------------------------------

def _lineplot(series, estimate, mean_line, band, title):
    T = series.T
    x = np.arange(T, dtype=float)
    y = np.asarray(series.target, dtype=float)
    ylo = float(min(y.min(), band.lo.min(), mean_line.min()))
    yhi = float(max(y.max(), band.hi.max(), mean_line.max()))
    pad = 0.05 * (yhi - ylo) if yhi > ylo else 0.5
    ax = svg.Axes(70, 40, 760, 380, (0.0, float(max(T - 1, 1))), (ylo - pad, yhi + pad))
    ax.vspan(estimate.week_q05, estimate.week_q95, fill="#ff69b4", opacity=0.3, id="changepoint-ci")
    ax.band(band.x, band.lo, band.hi, fill="#1f77b4", opacity=0.25, id="predictive-band")
    before = x < estimate.week_index
    ax.points(x[before], y[before], fill="#1f77b4", id="observed-before")
    ax.points(x[~before], y[~before], fill="#d62728", id="observed-after")
    ax.polyline(x, mean_line, stroke="#2ca02c", width=2, id="regression-line")
    ax.vline(estimate.week_index, stroke="black", dash="4,3", id="changepoint-marker")
    ax.frame(title, "week", "log(1 + reviews)")
    return svg.document(900, 480, [ax]), ax


def _posterior_plot(draws):
    panels = [("slopes w1, w2", (0, 1)), ("intercepts b1, b2", (2, 3)),
              ("tau", (4,)), ("sigma", (5,))]
    colors = ("#1f77b4", "#d62728")
    axes = []
    for i, (title, idx) in enumerate(panels):
        vals = draws[:, list(idx)]
        lo, hi = float(vals.min()), float(vals.max())
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        edges = np.linspace(lo, hi, 41)
        hists = [np.histogram(vals[:, k], bins=edges, density=True)[0] for k in range(len(idx))]
        top = max(float(h.max()) for h in hists)
        ax = svg.Axes(70 + (i % 2) * 430, 50 + (i // 2) * 270, 360, 200, (lo, hi), (0.0, top * 1.05))
        for k, h in enumerate(hists):
            ax.bars(edges, h, fill=colors[k], opacity=0.55, id=f"hist-{PARAM_NAMES[idx[k]]}")
        ax.frame(title, None, "density")
        axes.append(ax)
    return svg.document(900, 600, axes, "Posterior distributions")


def _residual_plot(check):
    r = check.residuals
    m = float(np.max(np.abs(r))) if r.size else 1.0
    m = m if m > 0 else 1.0
    ax = svg.Axes(70, 40, 760, 380, (float(check.x.min()), float(check.x.max())), (-1.1 * m, 1.1 * m))
    ax.hline(0.0, stroke="#555", dash="4,3", id="zero-line")
    ax.points(check.x, r, fill="#1f77b4", id="residuals")
    ax.frame("Residuals", "week", "observed - fitted")
    return svg.document(900, 480, [ax])


def _qq_plot(check):
    t, s = check.theoretical, check.sample
    lim = float(max(np.max(np.abs(t)), np.max(np.abs(s)) if s.size else 0.0, 1.0)) * 1.05
    ax = svg.Axes(70, 40, 420, 420, (-lim, lim), (-lim, lim))
    ax.polyline([-lim, lim], [-lim, lim], stroke="#d62728", width=1, dash="4,3", id="identity-line")
    ax.points(t, s, fill="#1f77b4", id="qq-points")
    ax.frame("Normal QQ plot", "theoretical quantile", "standardized residual")
    return svg.document(540, 510, [ax])


def render_plots(chain_set, series, estimate: ChangePointEstimate, band: PredictiveBand,
                 check: ResidualCheck, sharpness: float = DEFAULT_SHARPNESS,
                 title: "str | None" = None) -> dict:
    """Build the four SVG documents; returns ``{filename: svg_text}``."""
    draws = _require_draws(chain_set)
    p = posterior_mean_params(chain_set)
    mean_line = predict_mean(p, np.arange(series.T, dtype=float), series.T, sharpness)
    line_svg, _ = _lineplot(series, estimate, np.atleast_1d(mean_line), band,
                            title or "Weekly reviews with fitted change point")
    return {
        "lineplot.svg": line_svg,
        "posterior.svg": _posterior_plot(draws),
        "residuals.svg": _residual_plot(check),
        "qq.svg": _qq_plot(check),
    }


def lineplot_axes(series, estimate, band, mean_line) -> svg.Axes:
    """The axes used by the line plot, for mapping data to SVG coordinates."""
    return _lineplot(series, estimate, np.atleast_1d(mean_line), band, None)[1]


# -- JSON result --------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, date):
        return obj.isoformat()
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def emit_result(series, diagnostics: DiagnosticsReport, estimate: ChangePointEstimate,
                band: PredictiveBand, check: ResidualCheck, config: dict) -> dict:
    """Assemble the versioned result document (a plain dict ready for json)."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "converged": bool(diagnostics.converged),
        "input": {
            "category": series.category,
            "sentiment": series.sentiment,
            "start_date": series.start_date,
            "end_date": series.end_date,
            "weeks": series.T,
        },
        "config": config,
        "diagnostics": diagnostics.to_dict(),
        "changepoint": estimate.to_dict(),
        "band": band.to_dict(),
        "residuals": check.summary(),
    }
    return _clean(doc)


def dumps_result(doc: dict) -> str:
    return json.dumps(doc, indent=2) + "\n"
