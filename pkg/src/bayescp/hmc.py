"""Hamiltonian Monte Carlo with a fixed trajectory length.

Identity mass matrix, leapfrog integration, dual-averaging step-size warmup
and independent per-chain PCG64 streams seeded with ``seed + chain``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import expit, logit

from .model import (DEFAULT_SHARPNESS, N_PARAMS, PARAM_NAMES, LikelihoodKind, LinearBlock,
                    LogPosterior, PriorSpec, SamplingTransform, constrain_draws, sample_prior,
                    to_unconstrained)


class SamplingFailedError(RuntimeError):
    """Every post-warmup transition of every chain diverged."""

    def __init__(self, message, chain_set=None):
        super().__init__(message)
        self.chain_set = chain_set


@dataclass(frozen=True)
class HmcConfig:
    num_samples: int = 800
    num_chains: int = 4
    warmup_steps: int = 500
    initial_step_size: float = 0.1
    num_leapfrog_steps: int = 32
    target_accept: float = 0.8
    divergence_energy_threshold: float = 1000.0
    seed: int = 0
    # each transition uses step * U(1 - j, 1 + j); breaks fixed-length resonances
    step_size_jitter: float = 0.2

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be positive")
        if self.num_chains < 1:
            raise ValueError("num_chains must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be non-negative")
        if not self.initial_step_size > 0:
            raise ValueError("initial_step_size must be positive")
        if self.num_leapfrog_steps < 1:
            raise ValueError("num_leapfrog_steps must be positive")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if not self.divergence_energy_threshold > 0:
            raise ValueError("divergence_energy_threshold must be positive")
        if not 0.0 <= self.step_size_jitter < 1.0:
            raise ValueError("step_size_jitter must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Chain:
    draws: np.ndarray  # (num_samples, 6), constrained (w1, w2, b1, b2, tau, sigma)
    accept_rate: float
    num_divergences: int
    final_step_size: float
    warmup_divergences: int = 0


@dataclass
class ChainSet:
    chains: list
    config: HmcConfig
    sigma_upper: float = math.nan
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {c.draws.shape[0] for c in self.chains}
        if len(lengths) > 1:
            raise ValueError("chains must have identical draw counts")

    @property
    def num_chains(self) -> int:
        return len(self.chains)

    @property
    def num_draws(self) -> int:
        return self.chains[0].draws.shape[0] if self.chains else 0

    @property
    def total_divergences(self) -> int:
        return sum(c.num_divergences for c in self.chains)

    def param(self, index: int) -> np.ndarray:
        """Draws of one parameter, shape ``(num_chains, num_draws)``."""
        return np.stack([c.draws[:, index] for c in self.chains])

    def pooled(self) -> np.ndarray:
        """All draws stacked chain after chain, shape ``(num_chains*num_draws, 6)``."""
        return np.concatenate([c.draws for c in self.chains], axis=0)


# -- integrator ---------------------------------------------------------------

def leapfrog(z, momentum, step_size, grad):
    """One leapfrog step for ``H = -log p(z) + |momentum|^2 / 2``.

    ``grad`` returns the gradient of ``log p``. A non-finite gradient shows
    up as non-finite output, which callers treat as a divergence.
    """
    momentum = momentum + 0.5 * step_size * grad(z)
    z = z + step_size * momentum
    momentum = momentum + 0.5 * step_size * grad(z)
    return z, momentum


def _trajectory(z, momentum, g, step_size, n_steps, value_and_grad):
    # Fuse consecutive half-kicks; one gradient evaluation per step.
    logp = None
    with np.errstate(all="ignore"):
        momentum = momentum + 0.5 * step_size * g
        for i in range(n_steps):
            z = z + step_size * momentum
            logp, g = value_and_grad(z)
            if not (math.isfinite(logp) and np.all(np.isfinite(g))):
                return z, momentum, -math.inf, g, False
            scale = step_size if i < n_steps - 1 else 0.5 * step_size
            momentum = momentum + scale * g
    return z, momentum, logp, g, True


@dataclass(frozen=True)
class Transition:
    z: np.ndarray
    logp: float
    grad: np.ndarray
    accepted: bool
    diverged: bool
    accept_prob: float
    energy_change: float


def accept_probability(energy_change: float) -> float:
    """Metropolis acceptance ``min(1, exp(-dH))``; NaN counts as rejection."""
    if not energy_change == energy_change:
        return 0.0
    return 1.0 if energy_change <= 0 else math.exp(-energy_change)


def hmc_transition(z, rng, step_size, n_steps, target, current=None,
                   divergence_threshold: float = 1000.0) -> Transition:
    """One HMC proposal and Metropolis correction.

    ``target(z)`` must return ``(log p, grad log p)``. ``current`` may carry
    the already known ``(log p, grad)`` at ``z``. A proposal whose energy
    error exceeds ``divergence_threshold`` or that leaves the finite region is
    a divergence and is rejected.
    """
    z = np.asarray(z, dtype=float)
    logp0, g0 = target(z) if current is None else current
    p0 = rng.standard_normal(z.size)
    h0 = -logp0 + 0.5 * float(p0 @ p0)
    z1, p1, logp1, g1, finite = _trajectory(z, p0, g0, step_size, n_steps, target)
    if finite:
        h1 = -logp1 + 0.5 * float(p1 @ p1)
        dh = h1 - h0
        finite = math.isfinite(dh)
    else:
        dh = math.inf
    diverged = (not finite) or dh > divergence_threshold
    prob = 0.0 if diverged else accept_probability(dh)
    # always consume one uniform so the stream layout does not depend on the outcome
    u = rng.random()
    if not diverged and u < prob:
        return Transition(z1, logp1, g1, True, False, prob, dh)
    return Transition(z, logp0, g0, False, diverged, prob, dh)


# -- step size adaptation -----------------------------------------------------

class DualAveraging:
    """Dual-averaging controller on ``log(step_size)``.

    Drives the mean acceptance statistic toward ``target_accept``; the
    averaged iterate is the step size used after warmup.
    """

    def __init__(self, initial_step_size, target_accept=0.8, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * initial_step_size)
        self.target_accept = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.t = 0
        self.h_bar = 0.0
        self.log_step = math.log(initial_step_size)
        self.log_step_avg = 0.0

    def update(self, accept_stat: float) -> float:
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target_accept - accept_stat)
        self.log_step = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t ** (-self.kappa)
        self.log_step_avg = w * self.log_step + (1.0 - w) * self.log_step_avg
        return math.exp(self.log_step)

    @property
    def step_size(self) -> float:
        return math.exp(self.log_step)

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_step_avg) if self.t else self.step_size


def adapt_step_size(accept_stats, initial_step_size=0.1, target_accept=0.8):
    """Step sizes produced by dual averaging for a sequence of acceptance stats.

    Returns ``(schedule, final)``: ``schedule[i]`` is the step size after the
    ``i``-th update, ``final`` the averaged value frozen for sampling.
    """
    da = DualAveraging(initial_step_size, target_accept)
    schedule = np.array([da.update(float(a)) for a in accept_stats])
    return schedule, da.final_step_size


def find_reasonable_step_size(z, rng, target, step_size, current=None):
    """Heuristic starting step: double or halve until one leapfrog step crosses
    an acceptance probability of 1/2."""
    logp0, g0 = target(z) if current is None else current
    p0 = rng.standard_normal(z.size)
    h0 = -logp0 + 0.5 * float(p0 @ p0)

    def log_accept(eps):
        z1, p1, logp1, _, ok = _trajectory(z, p0, g0, eps, 1, target)
        if not ok:
            return -math.inf
        dh = -logp1 + 0.5 * float(p1 @ p1) - h0
        return -dh if math.isfinite(dh) else -math.inf

    direction = 1.0 if log_accept(step_size) > math.log(0.5) else -1.0
    for _ in range(100):
        nxt = step_size * (2.0 ** direction)
        if (direction > 0) != (log_accept(nxt) > math.log(0.5)):
            break
        step_size = nxt
    return step_size


# -- chains -------------------------------------------------------------------

def _jittered(step, config, rng):
    j = config.step_size_jitter
    return step * (1.0 + j * (2.0 * rng.random() - 1.0)) if j > 0 else step


def _warmup_phase(target, z, current, step, n, config, rng, explore=None):
    step = find_reasonable_step_size(z, rng, target, step, current)
    da = DualAveraging(step, config.target_accept)
    n_div = 0
    for _ in range(n):
        tr = hmc_transition(z, rng, _jittered(step, config, rng), config.num_leapfrog_steps,
                            target, current, config.divergence_energy_threshold)
        z, current = tr.z, (tr.logp, tr.grad)
        n_div += tr.diverged
        step = da.update(tr.accept_prob)
        if explore is not None:
            z_new = explore(z, rng)
            if z_new is not z:
                z, current = z_new, target(z_new)
    return z, current, da.final_step_size, n_div


def sample_chain(target, z0, config: HmcConfig, rng, explore=None):
    """Warm up then sample one chain of draws in the target's coordinates.

    Warmup adapts the step size by dual averaging. When ``explore`` is given
    (a callable ``(z, rng) -> z``), the first half of warmup also applies it
    after every transition and adaptation restarts for the second half.
    Sampling itself is plain HMC at the frozen step size.

    Returns ``(draws, accept_rate, divergences, step_size, warmup_divergences)``.
    """
    z = np.asarray(z0, dtype=float)
    current = target(z)
    step = config.initial_step_size
    warmup_div = 0
    n_warm = config.warmup_steps
    if n_warm > 0:
        n_explore = n_warm // 2 if explore is not None else 0
        if n_explore:
            z, current, step, d = _warmup_phase(target, z, current, step, n_explore,
                                                config, rng, explore)
            warmup_div += d
        z, current, step, d = _warmup_phase(target, z, current, step, n_warm - n_explore,
                                            config, rng)
        warmup_div += d

    draws = np.empty((config.num_samples, z.size))
    n_accept = n_div = 0
    for i in range(config.num_samples):
        tr = hmc_transition(z, rng, _jittered(step, config, rng), config.num_leapfrog_steps,
                            target, current, config.divergence_energy_threshold)
        z, current = tr.z, (tr.logp, tr.grad)
        n_accept += tr.accepted
        n_div += tr.diverged
        draws[i] = z
    return draws, n_accept / config.num_samples, n_div, step, warmup_div


def tau_jump_explorer(series, priors: PriorSpec, sharpness, transform, n_proposals=10):
    """Warmup move that relocates the change point globally.

    Proposes tau from its Beta prior and accepts by the ratio of collapsed
    Normal marginal likelihoods (coefficients integrated out, sigma held), then
    redraws the coefficients from their Gaussian conditional. For a Normal
    likelihood this is an exact Metropolis-within-Gibbs update; for Cauchy it
    is only a warmup heuristic, which is all it is used for.
    """
    block = LinearBlock(series, priors, sharpness)

    def explore(y, rng):
        z = transform.inverse(y)
        tau = float(expit(z[4]))
        sigma = priors.sigma_upper * float(expit(z[5]))
        cur = block.log_marginal(tau, sigma)
        for _ in range(n_proposals):
            prop = float(rng.beta(priors.alpha, priors.beta))
            if not 0.0 < prop < 1.0:
                continue
            new = block.log_marginal(prop, sigma)
            if math.log(rng.random()) < new - cur:
                tau, cur = prop, new
        z = z.copy()
        z[:4] = block.sample(tau, sigma, rng)
        z[4] = logit(tau)
        return transform.forward(z)

    return explore


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) + int(chain)))


def _initial_point(priors, rng, transform, target):
    # Redraw (bounded) if a prior draw lands where the density is not finite.
    for _ in range(100):
        p = sample_prior(priors, rng)
        y = transform.forward(to_unconstrained(p, priors))
        logp, g = target(y)
        if math.isfinite(logp) and np.all(np.isfinite(g)):
            return y
    raise SamplingFailedError("could not find a finite starting point from the priors")


def run_chains(series, priors: PriorSpec, kind=LikelihoodKind.NORMAL,
               sharpness: float = DEFAULT_SHARPNESS, config: HmcConfig = HmcConfig(),
               parallel: bool = False) -> ChainSet:
    """Sample the change-point posterior with ``config.num_chains`` chains.

    Chain ``c`` uses its own PCG64 stream seeded with ``config.seed + c`` and
    starts from a draw of the priors, so the result is the same whether chains
    run one after another or concurrently.
    """
    logpost = LogPosterior(series, priors, kind, sharpness)
    transform = SamplingTransform(logpost.T)
    target = transform.wrap(logpost.value_and_grad)
    explore = tau_jump_explorer(series, priors, sharpness, transform)

    def one(c):
        rng = chain_rng(config.seed, c)
        y0 = _initial_point(priors, rng, transform, target)
        ys, acc, ndiv, step, wdiv = sample_chain(target, y0, config, rng, explore)
        zs = transform.inverse(ys)
        return Chain(constrain_draws(zs, priors.sigma_upper), acc, ndiv, step, wdiv)

    if parallel and config.num_chains > 1:
        with ThreadPoolExecutor(max_workers=config.num_chains) as ex:
            chains = list(ex.map(one, range(config.num_chains)))
    else:
        chains = [one(c) for c in range(config.num_chains)]

    cs = ChainSet(chains, config, priors.sigma_upper,
                  {"likelihood": LikelihoodKind.parse(kind).value, "sharpness": float(sharpness)})
    if all(c.num_divergences == config.num_samples for c in chains):
        raise SamplingFailedError(
            f"all {config.num_chains} chains diverged on every transition "
            f"(step sizes {[round(c.final_step_size, 6) for c in chains]})", cs)
    return cs


def write_draws_csv(chain_set: ChainSet, fh) -> None:
    fh.write(",".join(("chain", "iter") + PARAM_NAMES) + "\n")
    for c, chain in enumerate(chain_set.chains):
        for i, row in enumerate(chain.draws):
            fh.write(f"{c},{i}," + ",".join(repr(float(v)) for v in row) + "\n")


def read_draws_csv(fh, config: "HmcConfig | None" = None, sigma_upper: float = math.nan) -> ChainSet:
    """Rebuild a ChainSet from a draws CSV (acceptance stats are not stored)."""
    reader = csv.DictReader(fh)
    missing = [c for c in ("chain", "iter") + PARAM_NAMES if c not in (reader.fieldnames or [])]
    if missing:
        raise ValueError(f"draws CSV missing column(s): {', '.join(missing)}")
    rows = {}
    for row in reader:
        rows.setdefault(int(row["chain"]), []).append(
            (int(row["iter"]), [float(row[p]) for p in PARAM_NAMES]))
    chains = []
    for c in sorted(rows):
        ordered = [v for _, v in sorted(rows[c])]
        chains.append(Chain(np.array(ordered, dtype=float).reshape(-1, N_PARAMS),
                            math.nan, 0, math.nan))
    if config is None:
        config = HmcConfig(num_samples=max(chains[0].draws.shape[0], 1) if chains else 1,
                           num_chains=max(len(chains), 1))
    return ChainSet(chains, config, sigma_upper)
