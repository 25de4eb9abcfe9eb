"""Command-line pipeline: ingest -> fit -> report, plus synth and run-all.

Exit codes: 0 success, 1 I/O error, 2 schema/input error, 3 fit finished but
did not converge (outputs are still written).
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import sys
from datetime import date
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, resolve_config, write_files_atomic
from .diagnostics import summarize, summarize_draws
from .hmc import HmcConfig, SamplingFailedError, read_draws_csv, run_chains, write_draws_csv
from .ingest import (DEFAULT_MIN_YEAR, CategoryMap, IngestError, ReviewSchema, aggregate_weekly,
                     parse_reviews, read_series_csv, write_rejects, write_series_csv)
from .model import LikelihoodKind, ModelError, derive_priors
from .report import (ReportError, emit_result, dumps_result, estimate_changepoint,
                     parse_window, predictive_band, render_plots, residuals_and_qq)
from .synth import SynthSpec, generate

log = logging.getLogger("bayescp")

EXIT_OK, EXIT_IO, EXIT_SCHEMA, EXIT_NOT_CONVERGED = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _manifest(subcommand, config, inputs, outputs, seed=None) -> str:
    doc = {"subcommand": subcommand, "tool_version": __version__, "seed": seed,
           "config": config, "inputs": inputs, "outputs": sorted(outputs)}
    return json.dumps(doc, indent=2) + "\n"


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None


# -- stages -------------------------------------------------------------------

def _ingest(args):
    schema = ReviewSchema(args.col_date, args.col_rating, args.col_category)
    try:
        raw = Path(args.input).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {args.input}: {exc}", EXIT_IO) from None
    try:
        cmap = CategoryMap.from_file(args.category_map) if args.category_map else CategoryMap.default()
        records, rejects = parse_reviews(io.BytesIO(raw), schema)
        series = aggregate_weekly(records, args.category, args.min_year, args.sentiment, cmap)
    except OSError as exc:
        raise CliError(str(exc), EXIT_IO) from None
    except IngestError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from None
    if rejects:
        log.warning("%d malformed row(s) written to rejects.csv", len(rejects))
    buf, rej = io.StringIO(), io.StringIO()
    write_series_csv(series, buf)
    write_rejects(rejects, rej)
    files = {"series.csv": buf.getvalue(), "rejects.csv": rej.getvalue()}
    config = {"columns": {"date": args.col_date, "rating": args.col_rating,
                          "category": args.col_category},
              "category": args.category, "sentiment": args.sentiment, "min_year": args.min_year,
              "category_map": args.category_map or "default",
              "records": len(records), "rejects": len(rejects), "weeks": series.T}
    return series, files, config


def _fit(series, cfg: RunConfig):
    try:
        priors = derive_priors(series, cfg.alpha, cfg.beta, cfg.sigma_upper_value, cfg.slope_sd)
        hmc_cfg = HmcConfig(num_samples=cfg.samples, num_chains=cfg.chains,
                            warmup_steps=cfg.warmup, initial_step_size=cfg.step_size,
                            num_leapfrog_steps=cfg.leapfrog_steps,
                            target_accept=cfg.target_accept, seed=cfg.seed)
        chain_set = run_chains(series, priors, cfg.likelihood, cfg.sharpness, hmc_cfg)
    except SamplingFailedError as exc:
        raise CliError(f"sampling failed: {exc}", EXIT_NOT_CONVERGED) from None
    except (ModelError, ValueError) as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from None
    diag = summarize(chain_set)
    buf = io.StringIO()
    write_draws_csv(chain_set, buf)
    files = {"draws.csv": buf.getvalue(), "diagnostics.json": diag.to_json() + "\n"}
    return chain_set, diag, priors, files


def _report(series, chain_set, diag, cfg: RunConfig, window, band_seed):
    try:
        est = estimate_changepoint(chain_set, series, window)
        band = predictive_band(chain_set, series, cfg.likelihood, cfg.sharpness,
                               noise=True, band=0.90, rng_seed=band_seed)
        check = residuals_and_qq(chain_set, series, cfg.likelihood, cfg.sharpness)
        plots = render_plots(chain_set, series, est, band, check, cfg.sharpness)
    except ReportError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from None
    config = cfg.to_dict()
    config["event_window"] = [d.isoformat() for d in window] if window else None
    doc = emit_result(series, diag, est, band, check, config)
    files = {"result.json": dumps_result(doc)}
    files.update(plots)
    return doc, files


# -- subcommands ----------------------------------------------------------------

def _run_config(args) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in
                 ("alpha", "beta", "sigma_upper", "slope_sd", "sharpness", "likelihood",
                  "samples", "chains", "warmup", "step_size", "leapfrog_steps",
                  "target_accept", "seed")}
    if getattr(args, "hard", False):
        overrides["sharpness"] = 0.0
    try:
        return resolve_config(getattr(args, "config", None), overrides)
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_IO) from None
    except (ConfigError, ModelError) as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from None


def _load_series(path, sentiment):
    text = _read_text(path)
    try:
        return read_series_csv(io.StringIO(text), sentiment)
    except ValueError as exc:
        raise CliError(f"{path}: {exc}", EXIT_SCHEMA) from None


def cmd_ingest(args) -> int:
    series, files, config = _ingest(args)
    files["manifest.json"] = _manifest("ingest", config, {"input": args.input},
                                       list(files), None)
    write_files_atomic(args.out_dir, files)
    print(f"{series.T} weeks from {series.start_date} written to {Path(args.out_dir) / 'series.csv'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _run_config(args)
    series = _load_series(args.series, args.sentiment)
    chain_set, diag, priors, files = _fit(series, cfg)
    config = cfg.to_dict()
    config["sentiment"] = args.sentiment
    config["sigma_upper_resolved"] = priors.sigma_upper
    files["manifest.json"] = _manifest("fit", config, {"series": args.series}, list(files), cfg.seed)
    write_files_atomic(args.out_dir, files)
    sys.stdout.write(diag.format_table())
    return EXIT_OK if diag.converged else EXIT_NOT_CONVERGED


def _fit_dir_config(fit_dir):
    path = Path(fit_dir) / "manifest.json"
    if not path.exists():
        return {}
    try:
        return json.loads(path.read_text(encoding="utf-8")).get("config", {})
    except (OSError, ValueError):
        return {}


def cmd_report(args) -> int:
    fit_cfg = _fit_dir_config(args.fit_dir)
    # model settings default to what the fit used
    for key in ("likelihood", "sharpness", "alpha", "beta", "slope_sd", "sigma_upper",
                "samples", "chains", "warmup", "step_size", "leapfrog_steps",
                "target_accept", "seed"):
        if getattr(args, key, None) is None and key in fit_cfg:
            setattr(args, key, fit_cfg[key])
    sentiment = args.sentiment or fit_cfg.get("sentiment", "positive")
    cfg = _run_config(args)
    series = _load_series(args.series, sentiment)
    draws_text = _read_text(Path(args.fit_dir) / "draws.csv")
    try:
        chain_set = read_draws_csv(io.StringIO(draws_text))
    except ValueError as exc:
        raise CliError(f"draws.csv: {exc}", EXIT_SCHEMA) from None
    if not chain_set.chains or chain_set.num_draws == 0:
        raise CliError("draws.csv holds no posterior draws", EXIT_SCHEMA)
    diag_path = Path(args.fit_dir) / "diagnostics.json"
    divergences = 0
    if diag_path.exists():
        divergences = int(json.loads(_read_text(diag_path)).get("divergences", 0))
    diag = summarize_draws([c.draws for c in chain_set.chains], divergences=divergences)
    try:
        window = parse_window(args.event_window) if args.event_window else None
    except ReportError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from None
    doc, files = _report(series, chain_set, diag, cfg, window, cfg.seed)
    files["manifest.json"] = _manifest("report", doc["config"],
                                       {"series": args.series, "fit_dir": args.fit_dir},
                                       list(files), cfg.seed)
    write_files_atomic(args.out_dir, files)
    cp = doc["changepoint"]
    print(f"change point: week {cp['week_index']} ({cp['calendar_date']}), "
          f"tau mean {cp['tau_mean']:.4f} [{cp['tau_q05']:.4f}, {cp['tau_q95']:.4f}]")
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec(args.w1, args.w2, args.b1, args.b2, args.tau, args.sigma, args.T,
                         args.noise, args.seed, date.fromisoformat(args.start_date))
    except (ValueError, ModelError) as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from None
    series = generate(spec)
    buf = io.StringIO()
    write_series_csv(series, buf)
    out = Path(args.out)
    config = {"w1": spec.w1, "w2": spec.w2, "b1": spec.b1, "b2": spec.b2,
              "tau": spec.tau_true, "sigma": spec.sigma_true, "T": spec.T,
              "noise": spec.noise_kind.value, "start_date": spec.start_date.isoformat()}
    files = {out.name: buf.getvalue(),
             "manifest.json": _manifest("synth", config, {}, [out.name], spec.seed)}
    write_files_atomic(out.parent if str(out.parent) else ".", files)
    print(f"{spec.T} synthetic weeks written to {out}")
    return EXIT_OK


def cmd_run_all(args) -> int:
    cfg = _run_config(args)
    series, files, ingest_cfg = _ingest(args)
    chain_set, diag, priors, fit_files = _fit(series, cfg)
    files.update(fit_files)
    try:
        window = parse_window(args.event_window) if args.event_window else None
    except ReportError as exc:
        raise CliError(str(exc), EXIT_SCHEMA) from None
    doc, report_files = _report(series, chain_set, diag, cfg, window, cfg.seed)
    files.update(report_files)
    config = {"ingest": ingest_cfg, "fit": doc["config"],
              "sigma_upper_resolved": priors.sigma_upper}
    files["manifest.json"] = _manifest("run-all", config, {"input": args.input}, list(files), cfg.seed)
    write_files_atomic(args.out_dir, files)
    sys.stdout.write(diag.format_table())
    return EXIT_OK if diag.converged else EXIT_NOT_CONVERGED


# -- argument parsing ---------------------------------------------------------

def _add_ingest_flags(p):
    p.add_argument("--input", required=True, help="raw review CSV (UTF-8, header row)")
    p.add_argument("--col-date", default="date", help="date column (YYYY-MM-DD)")
    p.add_argument("--col-rating", default="rating", help="rating column (0-5)")
    p.add_argument("--col-category", default="category", help="restaurant category column")
    p.add_argument("--category-map", help="category merge rules, one 'raw => canonical' per line")
    p.add_argument("--category", help="keep only this category (after normalization)")
    p.add_argument("--sentiment", default="positive", choices=("positive", "negative", "neutral", "total"))
    p.add_argument("--min-year", type=int, default=DEFAULT_MIN_YEAR, help="drop reviews before this year")


def _add_model_flags(p):
    p.add_argument("--config", help="key = value config file; flags take precedence")
    p.add_argument("--alpha", type=float, help="Beta prior alpha on tau (default 4)")
    p.add_argument("--beta", type=float, help="Beta prior beta on tau (default 2)")
    p.add_argument("--sigma-upper", help="Uniform prior bound on sigma, number or 'auto'")
    p.add_argument("--slope-sd", type=float, help="prior sd of both slopes (default 0.1)")
    p.add_argument("--sharpness", type=float, help="sigmoid sharpness per week (default 20; 0 = hard)")
    p.add_argument("--hard", action="store_true", help="hard switch at the change point")
    p.add_argument("--likelihood", choices=[k.value for k in LikelihoodKind])
    p.add_argument("--samples", type=int, help="post-warmup draws per chain (default 800)")
    p.add_argument("--chains", type=int, help="number of chains (default 4)")
    p.add_argument("--warmup", type=int, help="warmup iterations per chain (default 500)")
    p.add_argument("--step-size", type=float, help="initial leapfrog step size (default 0.1)")
    p.add_argument("--leapfrog-steps", type=int, help="leapfrog steps per transition (default 32)")
    p.add_argument("--target-accept", type=float, help="warmup acceptance target (default 0.8)")
    p.add_argument("--seed", type=int, help="base random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayescp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="raw review CSV -> weekly series CSV")
    _add_ingest_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", help="sample the change-point posterior")
    p.add_argument("--series", required=True, help="weekly series CSV")
    p.add_argument("--sentiment", default="positive", choices=("positive", "negative", "neutral", "total"))
    _add_model_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("report", help="change-point estimate, bands, plots, result JSON")
    p.add_argument("--series", required=True)
    p.add_argument("--fit-dir", required=True, help="directory written by 'fit'")
    p.add_argument("--sentiment", choices=("positive", "negative", "neutral", "total"))
    p.add_argument("--event-window", help="YYYY-MM-DD:YYYY-MM-DD, inclusive")
    _add_model_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic weekly series CSV")
    p.add_argument("--w1", type=float, default=0.004)
    p.add_argument("--w2", type=float, default=-0.006)
    p.add_argument("--b1", type=float, default=0.5)
    p.add_argument("--b2", type=float, default=4.5)
    p.add_argument("--tau", type=float, default=0.75)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--T", type=int, default=400)
    p.add_argument("--noise", choices=[k.value for k in LikelihoodKind], default="normal")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--start-date", default="2013-01-07")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run-all", help="ingest, fit and report in one go")
    _add_ingest_flags(p)
    _add_model_flags(p)
    p.add_argument("--event-window", help="YYYY-MM-DD:YYYY-MM-DD, inclusive")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run_all)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
