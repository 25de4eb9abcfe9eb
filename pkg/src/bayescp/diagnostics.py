"""Convergence diagnostics and the posterior summary table."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np

from .model import PARAM_NAMES

R_HAT_THRESHOLD = 1.1
TABLE_COLUMNS = ("mean", "std", "median", "5.0%", "95.0%", "n_eff", "r_hat")


def _as_chains(chains) -> np.ndarray:
    arr = np.asarray(chains, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("expected draws shaped (num_chains, num_draws)")
    return arr


def r_hat(chains) -> float:
    """Split-chain potential scale reduction factor for one parameter.

    Each chain is cut into two halves (a middle draw is dropped for odd
    lengths); with ``n`` the half length, ``W`` the mean within-half variance
    and ``B`` ``n`` times the variance of the half means, returns
    ``sqrt(((n-1)/n * W + B/n) / W)``. Constant draws give 1.0.
    """
    x = _as_chains(chains)
    m, n_draws = x.shape
    if m < 2 or n_draws < 4:
        raise ValueError("r_hat needs at least 2 chains of at least 4 draws")
    n = n_draws // 2
    halves = np.concatenate([x[:, :n], x[:, n_draws - n:]], axis=0)
    W = float(np.mean(np.var(halves, axis=1, ddof=1)))
    if W == 0.0:
        return 1.0
    B = n * float(np.var(np.mean(halves, axis=1), ddof=1))
    return math.sqrt(((n - 1) / n * W + B / n) / W)


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row via FFT."""
    n = x.shape[-1]
    size = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, size, axis=-1)
    acov = np.fft.irfft(f * np.conjugate(f), size, axis=-1)[..., :n]
    return acov / n


def effective_sample_size(chains) -> float:
    """Effective sample size pooled over chains.

    Autocorrelations combine within-chain autocovariances with the
    between-chain variance and are summed in consecutive pairs until the
    first negative pair (Geyer's initial positive sequence). The result is
    clamped to ``(0, N_total]``; constant draws return ``N_total``.
    """
    x = _as_chains(chains)
    m, n = x.shape
    if n < 8:
        raise ValueError("effective_sample_size needs at least 8 draws per chain")
    total = m * n
    acov = _autocovariance(x)
    chain_var = acov[:, 0] * n / (n - 1.0)
    W = float(np.mean(chain_var))
    var_plus = W * (n - 1.0) / n
    if m > 1:
        var_plus += float(np.var(np.mean(x, axis=1), ddof=1))
    if var_plus <= 0.0:
        return float(total)
    rho = 1.0 - (W - np.mean(acov, axis=0)) / var_plus
    rho[0] = 1.0

    pair_sum = 0.0
    t = 0
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p < 0.0:
            break
        pair_sum += p
        t += 2
    tau_int = -1.0 + 2.0 * pair_sum  # = 1 + 2 * sum_{k>=1} rho_k
    if tau_int <= 0.0:
        return float(total)
    return float(min(total / tau_int, total))


@dataclass(frozen=True)
class ParamSummary:
    name: str
    mean: float
    std: float
    median: float
    q05: float
    q95: float
    n_eff: float
    r_hat: float

    def row(self) -> tuple:
        return (self.mean, self.std, self.median, self.q05, self.q95, self.n_eff, self.r_hat)


@dataclass(frozen=True)
class DiagnosticsReport:
    params: tuple
    total_divergences: int
    converged: bool
    r_hat_threshold: float = R_HAT_THRESHOLD

    def __getitem__(self, name: str) -> ParamSummary:
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_dict(self) -> dict:
        out = {}
        for p in self.params:
            d = asdict(p)
            d.pop("name")
            # undefined statistics become JSON null
            out[p.name] = {k: (None if isinstance(v, float) and math.isnan(v) else v)
                           for k, v in d.items()}
        out["divergences"] = int(self.total_divergences)
        out["converged"] = bool(self.converged)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)

    @classmethod
    def from_dict(cls, d: dict, r_hat_threshold: float = R_HAT_THRESHOLD) -> "DiagnosticsReport":
        params = tuple(ParamSummary(name, **{k: math.nan if v is None else float(v)
                                             for k, v in d[name].items()})
                       for name in d if name not in ("divergences", "converged"))
        return cls(params, int(d["divergences"]), bool(d["converged"]), r_hat_threshold)

    def format_table(self, precision: int = 2) -> str:
        """Aligned text table followed by the divergence count line."""
        width = max(len(p.name) for p in self.params) + 2
        cols = [f"{c:>8}" for c in TABLE_COLUMNS]
        lines = [" " * width + "".join(cols)]
        for p in self.params:
            cells = "".join(f"{v:>8.{precision}f}" for v in p.row())
            lines.append(f"{p.name:>{width - 2}}  " + cells)
        lines.append("")
        lines.append(f"Number of divergences: {self.total_divergences}")
        return "\n".join(lines) + "\n"


def summarize_draws(draws, names=PARAM_NAMES, divergences: int = 0,
                    r_hat_threshold: float = R_HAT_THRESHOLD) -> DiagnosticsReport:
    """Summaries from an array shaped ``(num_chains, num_draws, num_params)``.

    Statistics undefined at this size are NaN: r_hat below 2 chains or 4
    draws per chain, n_eff below 8 draws per chain.
    """
    draws = np.asarray(draws, dtype=float)
    m, n = draws.shape[:2]
    params = []
    for j, name in enumerate(names):
        per_chain = draws[:, :, j]
        pooled = per_chain.ravel()
        q05, med, q95 = np.quantile(pooled, [0.05, 0.5, 0.95])
        rh = r_hat(per_chain) if m >= 2 and n >= 4 else math.nan
        params.append(ParamSummary(
            name=name,
            mean=float(np.mean(pooled)),
            std=float(np.std(pooled, ddof=1)) if pooled.size > 1 else 0.0,
            median=float(med), q05=float(q05), q95=float(q95),
            n_eff=effective_sample_size(per_chain) if n >= 8 else math.nan,
            r_hat=float(rh),
        ))
    converged = all(p.r_hat < r_hat_threshold for p in params)
    return DiagnosticsReport(tuple(params), int(divergences), converged, r_hat_threshold)


def summarize(chain_set, r_hat_threshold: float = R_HAT_THRESHOLD) -> DiagnosticsReport:
    """Pool post-warmup draws per parameter and compute the summary table.

    Quantiles interpolate linearly between order statistics. With a single
    chain r_hat is undefined (NaN) and the run is reported as not converged.
    """
    if not chain_set.chains or chain_set.num_draws == 0:
        raise ValueError("empty chain set")
    draws = np.stack([c.draws for c in chain_set.chains])
    return summarize_draws(draws, PARAM_NAMES, chain_set.total_divergences, r_hat_threshold)
