"""Bayesian change-point estimation for weekly review counts.

A segmented regression with one change point, sampled with a plain
Hamiltonian Monte Carlo engine, plus the ingestion, diagnostics and
reporting around it.
"""

__version__ = "0.1.0"

from .diagnostics import DiagnosticsReport, ParamSummary, effective_sample_size, r_hat, summarize
from .hmc import Chain, ChainSet, HmcConfig, hmc_transition, leapfrog, run_chains
from .ingest import (CategoryMap, ReviewRecord, WeeklySeries, aggregate_weekly,
                     classify_sentiment, normalize_category, parse_reviews, transform_log1p)
from .model import (ChangePointParams, LikelihoodKind, PriorSpec, derive_priors,
                    grad_log_posterior, log_likelihood, log_posterior_unconstrained, log_prior,
                    predict_mean, to_constrained, to_unconstrained)
from .report import (ChangePointEstimate, PredictiveBand, emit_result, estimate_changepoint,
                     predictive_band, render_plots, residuals_and_qq)
from .synth import SynthSpec, generate, grid_mle
