"""Synthetic change-point series and a brute-force least-squares split search.

Noise is drawn from ``numpy.random.Generator(PCG64(seed))``; PCG64 output is
identical across platforms, so fixtures built from a seed are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np

from .ingest import WeeklySeries
from .model import MIN_SERIES_LENGTH, LikelihoodKind


# back-filled counts are capped at expm1 of this so they fit in int64
MAX_LOG_COUNT = 40.0


@dataclass(frozen=True)
class SynthSpec:
    w1: float
    w2: float
    b1: float
    b2: float
    tau_true: float
    sigma_true: float
    T: int
    noise_kind: LikelihoodKind = LikelihoodKind.NORMAL
    seed: int = 0
    start_date: date = date(2013, 1, 7)

    def __post_init__(self):
        if not 0.0 < self.tau_true < 1.0:
            raise ValueError(f"tau_true must lie in (0, 1), got {self.tau_true}")
        if self.sigma_true < 0:
            raise ValueError(f"sigma_true must be non-negative, got {self.sigma_true}")
        if self.T < MIN_SERIES_LENGTH:
            raise ValueError(f"T must be at least {MIN_SERIES_LENGTH}, got {self.T}")
        object.__setattr__(self, "noise_kind", LikelihoodKind.parse(self.noise_kind))

    @property
    def change_week(self) -> float:
        return self.tau_true * (self.T - 1)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed)))


def generate(spec: SynthSpec) -> WeeklySeries:
    """Sample a series from the hard-switch segmented model.

    The target is emitted as-is (already on the log1p scale); the positive
    count column is back-filled as ``round(exp(target) - 1)`` clamped to
    ``[0, expm1(MAX_LOG_COUNT)]``.
    """
    x = np.arange(spec.T, dtype=float)
    mean = np.where(x >= spec.change_week, spec.w2 * x + spec.b2, spec.w1 * x + spec.b1)
    rng = make_rng(spec.seed)
    if spec.noise_kind is LikelihoodKind.NORMAL:
        eps = rng.standard_normal(spec.T)
    else:
        eps = rng.standard_cauchy(spec.T)
    target = mean + spec.sigma_true * eps
    counts = np.clip(np.rint(np.expm1(np.minimum(target, MAX_LOG_COUNT))), 0, None).astype(np.int64)
    zeros = np.zeros(spec.T, dtype=np.int64)
    return WeeklySeries(spec.start_date, np.arange(spec.T), counts, zeros, zeros.copy(),
                        target, "positive", "synthetic")


@dataclass(frozen=True)
class GridFit:
    tau_hat: float
    split: int
    sse: float
    coef1: tuple  # (slope, intercept) on [0, split)
    coef2: tuple  # (slope, intercept) on [split, T)
    sse_by_split: dict


def _ols(x, y):
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (slope * x + intercept)
    return slope, intercept, float(resid @ resid)


def grid_mle(series) -> GridFit:
    """Least-squares change point by exhaustive search over splits.

    Every split ``k`` in ``[2, T-2]`` fits independent lines on ``[0, k)`` and
    ``[k, T)``; the smallest total SSE wins, ties going to the smaller ``k``.
    ``tau_hat`` is ``k / (T - 1)``.
    """
    y = np.asarray(series.target if hasattr(series, "target") else series, dtype=float)
    T = y.size
    if T < MIN_SERIES_LENGTH:
        raise ValueError(f"series has {T} points; at least {MIN_SERIES_LENGTH} required")
    x = np.arange(T, dtype=float)
    # round-off must not break ties between numerically equal fits
    tol = 1e-12 * (1.0 + float(np.sum((y - y.mean()) ** 2)))
    best = None
    sse_by_split = {}
    for k in range(2, T - 1):
        s1, i1, e1 = _ols(x[:k], y[:k])
        s2, i2, e2 = _ols(x[k:], y[k:])
        sse = e1 + e2
        sse_by_split[k] = sse
        if best is None or sse < best[0] - tol:
            best = (sse, k, (s1, i1), (s2, i2))
    sse, k, c1, c2 = best
    return GridFit(k / (T - 1), k, sse, c1, c2, sse_by_split)
