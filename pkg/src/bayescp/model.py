"""Segmented regression model with one change point.

Parameters are ordered ``(w1, w2, b1, b2, tau, sigma)``. The change point in
week units is ``tau * (T - 1)``; segment 1 (``w1, b1``) applies before it and
segment 2 (``w2, b2``) from it onward.

Gradient-based samplers work on an unconstrained vector
``z = (w1, w2, b1, b2, z_tau, z_sigma)`` with ``tau = logistic(z_tau)`` and
``sigma = sigma_upper * logistic(z_sigma)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import betaln, expit, logit

PARAM_NAMES = ("w1", "w2", "b1", "b2", "tau", "sigma")
N_PARAMS = len(PARAM_NAMES)

DEFAULT_ALPHA = 4.0
DEFAULT_BETA = 2.0
DEFAULT_SLOPE_SD = 0.1
DEFAULT_SHARPNESS = 20.0
MIN_SERIES_LENGTH = 8
SD_B2_FLOOR = 0.25

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)


class ModelError(ValueError):
    """Invalid model configuration or parameter value."""


class SeriesTooShortError(ModelError):
    pass


class PriorConfigError(ModelError):
    pass


class BoundaryError(ModelError):
    """A bounded parameter sits on its boundary and has no finite preimage."""


class LikelihoodKind(str, enum.Enum):
    NORMAL = "normal"
    CAUCHY = "cauchy"

    @classmethod
    def parse(cls, value: "str | LikelihoodKind") -> "LikelihoodKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ModelError(f"unknown likelihood {value!r}; expected 'normal' or 'cauchy'") from None


@dataclass(frozen=True)
class ChangePointParams:
    w1: float
    w2: float
    b1: float
    b2: float
    tau: float
    sigma: float

    def as_array(self) -> np.ndarray:
        return np.array([self.w1, self.w2, self.b1, self.b2, self.tau, self.sigma], dtype=float)

    @classmethod
    def from_array(cls, values) -> "ChangePointParams":
        v = [float(a) for a in values]
        if len(v) != N_PARAMS:
            raise ModelError(f"expected {N_PARAMS} values, got {len(v)}")
        return cls(*v)

    def change_week(self, T: int) -> float:
        return self.tau * (T - 1)


@dataclass(frozen=True)
class PriorSpec:
    mu_w1: float
    sd_w1: float
    mu_w2: float
    sd_w2: float
    mu_b1: float
    sd_b1: float
    mu_b2: float
    sd_b2: float
    alpha: float
    beta: float
    sigma_upper: float

    def __post_init__(self):
        if not self.alpha > self.beta > 0:
            raise PriorConfigError(f"Beta prior needs alpha > beta > 0, got alpha={self.alpha}, beta={self.beta}")
        for name in ("sd_w1", "sd_w2", "sd_b1", "sd_b2", "sigma_upper"):
            if not getattr(self, name) > 0:
                raise PriorConfigError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def tau_prior_mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)

    def replace(self, **changes) -> "PriorSpec":
        return replace(self, **changes)


def _xy(series):
    """Return (x, y) float arrays from a WeeklySeries or an (x, y) pair."""
    if isinstance(series, tuple):
        x, y = series
    else:
        x, y = series.week_index, series.target
    return np.asarray(x, dtype=float), np.asarray(y, dtype=float)


def default_sigma_upper(target) -> float:
    """Twice the sample standard deviation of the target (1.0 if it is constant)."""
    y = np.asarray(target, dtype=float)
    sd = float(np.std(y, ddof=1)) if y.size > 1 else 0.0
    return 2.0 * sd if sd > 0 else 1.0


def derive_priors(series, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
                  sigma_upper: "float | str | None" = None,
                  slope_sd: float = DEFAULT_SLOPE_SD) -> PriorSpec:
    """Build the prior specification from the observed series.

    The intercept prior means are the mean target over the first and the last
    ``ceil(T/4)`` weeks (time order). ``sd_b1`` is 1; ``sd_b2`` is a quarter
    of ``mu_b2`` but never below 0.25. ``sigma_upper`` of ``None`` or
    ``"auto"`` means twice the sample standard deviation of the target.
    """
    _, y = _xy(series)
    T = y.size
    if T < MIN_SERIES_LENGTH:
        raise SeriesTooShortError(f"series has {T} weeks; at least {MIN_SERIES_LENGTH} required")
    if not alpha > beta > 0:
        raise PriorConfigError(f"Beta prior needs alpha > beta > 0, got alpha={alpha}, beta={beta}")
    if sigma_upper is None or (isinstance(sigma_upper, str) and sigma_upper.strip().lower() == "auto"):
        sigma_upper = default_sigma_upper(y)
    sigma_upper = float(sigma_upper)
    if not sigma_upper > 0:
        raise PriorConfigError(f"sigma_upper must be positive, got {sigma_upper}")
    if not slope_sd > 0:
        raise PriorConfigError(f"slope_sd must be positive, got {slope_sd}")

    q = math.ceil(T / 4)
    mu_b1 = float(np.mean(y[:q]))
    mu_b2 = float(np.mean(y[-q:]))
    return PriorSpec(
        mu_w1=0.0, sd_w1=float(slope_sd),
        mu_w2=0.0, sd_w2=float(slope_sd),
        mu_b1=mu_b1, sd_b1=1.0,
        mu_b2=mu_b2, sd_b2=max(mu_b2 / 4.0, SD_B2_FLOOR),
        alpha=float(alpha), beta=float(beta),
        sigma_upper=sigma_upper,
    )


def _switch(x, gamma, sharpness):
    """Weight of segment 2 at each x."""
    if sharpness > 0:
        return expit(sharpness * (x - gamma))
    return (x >= gamma).astype(float)


def predict_mean(p: ChangePointParams, x, T: int, sharpness: float = 0.0):
    """Mean of the segmented regression at week index ``x``.

    ``sharpness == 0`` is the hard switch (segment 2 for ``x >= tau*(T-1)``);
    a positive sharpness blends the segments with ``logistic(k*(x - gamma))``.
    Scalar in, scalar out.
    """
    xa = np.asarray(x, dtype=float)
    gamma = p.tau * (T - 1)
    s = _switch(xa, gamma, sharpness)
    seg1 = p.w1 * xa + p.b1
    seg2 = p.w2 * xa + p.b2
    mu = s * seg2 + (1.0 - s) * seg1
    if sharpness == 0:
        # keep the hard branch exact rather than a 0/1 blend of two values
        mu = np.where(xa >= gamma, seg2, seg1)
    return float(mu) if mu.ndim == 0 else mu


def _log_density_terms(resid, sigma, kind):
    if kind is LikelihoodKind.NORMAL:
        return -0.5 * (_LOG_2PI + 2.0 * math.log(sigma)) - resid**2 / (2.0 * sigma**2)
    u = resid / sigma
    return -(_LOG_PI + math.log(sigma)) - np.log1p(u * u)


def log_likelihood(p: ChangePointParams, series, kind=LikelihoodKind.NORMAL,
                   sharpness: float = DEFAULT_SHARPNESS) -> float:
    kind = LikelihoodKind.parse(kind)
    x, y = _xy(series)
    mu = predict_mean(p, x, y.size, sharpness)
    return float(np.sum(_log_density_terms(y - mu, p.sigma, kind)))


def _normal_logpdf(v, mu, sd):
    return -0.5 * _LOG_2PI - math.log(sd) - 0.5 * ((v - mu) / sd) ** 2


def log_prior(p: ChangePointParams, priors: PriorSpec) -> float:
    lp = (_normal_logpdf(p.w1, priors.mu_w1, priors.sd_w1)
          + _normal_logpdf(p.w2, priors.mu_w2, priors.sd_w2)
          + _normal_logpdf(p.b1, priors.mu_b1, priors.sd_b1)
          + _normal_logpdf(p.b2, priors.mu_b2, priors.sd_b2))
    a, b = priors.alpha, priors.beta
    lp += (a - 1.0) * math.log(p.tau) + (b - 1.0) * math.log1p(-p.tau) - betaln(a, b)
    lp += -math.log(priors.sigma_upper)
    return float(lp)


# -- unconstrained space ------------------------------------------------------

def to_unconstrained(p: ChangePointParams, priors: PriorSpec) -> np.ndarray:
    if not 0.0 < p.tau < 1.0:
        raise BoundaryError(f"tau={p.tau} is not inside (0, 1)")
    if not 0.0 < p.sigma < priors.sigma_upper:
        raise BoundaryError(f"sigma={p.sigma} is not inside (0, {priors.sigma_upper})")
    return np.array([p.w1, p.w2, p.b1, p.b2,
                     logit(p.tau), logit(p.sigma / priors.sigma_upper)], dtype=float)


def to_constrained(z, priors: PriorSpec) -> ChangePointParams:
    z = np.asarray(z, dtype=float)
    return ChangePointParams(z[0], z[1], z[2], z[3],
                             float(expit(z[4])), float(priors.sigma_upper * expit(z[5])))


def constrain_draws(zs, sigma_upper: float) -> np.ndarray:
    """Vectorized ``to_constrained`` over the rows of ``zs``."""
    out = np.array(zs, dtype=float, copy=True)
    out[..., 4] = expit(out[..., 4])
    out[..., 5] = sigma_upper * expit(out[..., 5])
    return out


def _log_logistic(z):
    # log(logistic(z)) without overflow
    return -np.logaddexp(0.0, -z)


def log_jacobian(z, priors: PriorSpec) -> float:
    zt, zs = float(z[4]), float(z[5])
    return float(_log_logistic(zt) + _log_logistic(-zt)
                 + math.log(priors.sigma_upper) + _log_logistic(zs) + _log_logistic(-zs))


def log_posterior_unconstrained(z, series, priors: PriorSpec, kind=LikelihoodKind.NORMAL,
                                sharpness: float = DEFAULT_SHARPNESS) -> float:
    """Unnormalized log posterior in unconstrained coordinates.

    Equals ``log_likelihood + log_prior + log_jacobian`` at
    ``to_constrained(z)``; the Beta and Jacobian terms are evaluated from
    ``z`` directly, so the value stays finite even where ``tau`` rounds to
    0 or 1 in floating point.
    """
    return LogPosterior(series, priors, kind, sharpness)(z)


class LogPosterior:
    """Log posterior and its gradient over unconstrained ``z``.

    Holds read-only copies of the data, so one instance can be shared between
    chains running in different threads.
    """

    def __init__(self, series, priors: PriorSpec, kind=LikelihoodKind.NORMAL,
                 sharpness: float = DEFAULT_SHARPNESS, likelihood_weight: float = 1.0):
        x, y = _xy(series)
        self.x = x.copy()
        self.y = y.copy()
        self.x.flags.writeable = False
        self.y.flags.writeable = False
        self.T = y.size
        self.priors = priors
        self.kind = LikelihoodKind.parse(kind)
        self.sharpness = float(sharpness)
        # < 1 flattens the likelihood; used only while warming up
        self.likelihood_weight = float(likelihood_weight)
        self.dim = N_PARAMS

    def __call__(self, z) -> float:
        return self.value_and_grad(z)[0]

    def grad(self, z) -> np.ndarray:
        return self.value_and_grad(z)[1]

    def value_and_grad(self, z):
        z = np.asarray(z, dtype=float)
        pr = self.priors
        w1, w2, b1, b2, zt, zs = z
        # logistic pieces from both sides so nothing rounds to 0 or 1 early
        tau, tau_c = float(expit(zt)), float(expit(-zt))
        s_sig, s_sig_c = float(expit(zs)), float(expit(-zs))
        sigma = pr.sigma_upper * s_sig
        if not (sigma > 0.0 and np.all(np.isfinite(z))):
            return -math.inf, np.full(N_PARAMS, np.nan)

        x, y, T, k = self.x, self.y, self.T, self.sharpness
        gamma = tau * (T - 1)
        seg1 = w1 * x + b1
        seg2 = w2 * x + b2
        if k > 0:
            s = expit(k * (x - gamma))
            mu = seg1 + s * (seg2 - seg1)
        else:
            s = (x >= gamma).astype(float)
            mu = np.where(s > 0, seg2, seg1)
        r = y - mu

        if self.kind is LikelihoodKind.NORMAL:
            inv_var = 1.0 / (sigma * sigma)
            ll = -0.5 * T * (_LOG_2PI + 2.0 * math.log(sigma)) - 0.5 * inv_var * float(r @ r)
            dmu = r * inv_var
            dll_dlogsig = -T + float(r @ r) * inv_var
        else:
            u = r / sigma
            one_u2 = 1.0 + u * u
            ll = -T * (_LOG_PI + math.log(sigma)) - float(np.sum(np.log1p(u * u)))
            dmu = 2.0 * u / (sigma * one_u2)
            dll_dlogsig = -T + float(np.sum(2.0 * u * u / one_u2))

        lw = self.likelihood_weight
        if lw != 1.0:
            ll *= lw
            dmu = dmu * lw
            dll_dlogsig *= lw
        g = np.empty(N_PARAMS)
        one_s = 1.0 - s
        g[0] = float(dmu @ (one_s * x))
        g[1] = float(dmu @ (s * x))
        g[2] = float(dmu @ one_s)
        g[3] = float(dmu @ s)
        if k > 0:
            # d mu / d gamma = (seg2 - seg1) * ds/dgamma, ds/dgamma = -k s (1 - s)
            dll_dtau = -k * (T - 1) * float(dmu @ ((seg2 - seg1) * s * one_s))
        else:
            dll_dtau = 0.0

        # priors
        g[0] -= (w1 - pr.mu_w1) / pr.sd_w1**2
        g[1] -= (w2 - pr.mu_w2) / pr.sd_w2**2
        g[2] -= (b1 - pr.mu_b1) / pr.sd_b1**2
        g[3] -= (b2 - pr.mu_b2) / pr.sd_b2**2
        lp = (_normal_logpdf(w1, pr.mu_w1, pr.sd_w1) + _normal_logpdf(w2, pr.mu_w2, pr.sd_w2)
              + _normal_logpdf(b1, pr.mu_b1, pr.sd_b1) + _normal_logpdf(b2, pr.mu_b2, pr.sd_b2))
        log_tau = float(_log_logistic(zt))
        log_1m_tau = float(_log_logistic(-zt))
        lp += (pr.alpha - 1.0) * log_tau + (pr.beta - 1.0) * log_1m_tau - betaln(pr.alpha, pr.beta)
        lp += -math.log(pr.sigma_upper)

        # logistic transforms; derivatives taken directly in z
        jac = (log_tau + log_1m_tau + math.log(pr.sigma_upper)
               + float(_log_logistic(zs)) + float(_log_logistic(-zs)))
        g[4] = (dll_dtau * tau * tau_c
                + (pr.alpha - 1.0) * tau_c - (pr.beta - 1.0) * tau
                + (tau_c - tau))
        # d log(sigma) / d z_sigma = 1 - logistic(z_sigma)
        g[5] = dll_dlogsig * s_sig_c + (s_sig_c - s_sig)

        return ll + lp + jac, g


def grad_log_posterior(z, series, priors: PriorSpec, kind=LikelihoodKind.NORMAL,
                       sharpness: float = DEFAULT_SHARPNESS) -> np.ndarray:
    return LogPosterior(series, priors, kind, sharpness).grad(z)


def sample_prior(priors: PriorSpec, rng: np.random.Generator) -> ChangePointParams:
    """Draw an over-dispersed starting point.

    Slopes, intercepts and tau come from their priors; sigma is uniform on the
    middle 80% of ``(0, sigma_upper)``.
    """
    a = priors.sigma_upper
    return ChangePointParams(
        w1=float(rng.normal(priors.mu_w1, priors.sd_w1)),
        w2=float(rng.normal(priors.mu_w2, priors.sd_w2)),
        b1=float(rng.normal(priors.mu_b1, priors.sd_b1)),
        b2=float(rng.normal(priors.mu_b2, priors.sd_b2)),
        tau=float(rng.beta(priors.alpha, priors.beta)),
        sigma=float(rng.uniform(0.1 * a, 0.9 * a)),
    )


class SamplingTransform:
    """Fixed linear change of coordinates used by the sampler.

    Sampling coordinates are ``(s1, s2, c1, c2, g, z_sigma)`` with slopes
    measured per full span (``s = w * (T - 1)``), ``c1 = b1`` the level at the
    first week, ``c2 = b2 + s2`` the segment-2 level at the last week and
    ``g = z_tau * (T - 1) / 4``, which moves about one week per unit near
    ``tau = 1/2``. Anchoring intercepts at the ends keeps them near their own
    segment's data and removes most of the slope/intercept correlation. The
    map is linear with a constant Jacobian, so the target density is
    unchanged up to a constant.
    """

    def __init__(self, T: int, identity: bool = False):
        span = float(max(T - 1, 1))
        A = np.eye(N_PARAMS)  # z = A @ y
        if not identity:
            A[0, 0] = 1.0 / span
            A[1, 1] = 1.0 / span
            A[3, 1] = -1.0
            A[4, 4] = 4.0 / span
        self.A = A
        self.A_inv = np.linalg.inv(A)

    def forward(self, z):
        """Unconstrained ``z`` to sampling coordinates."""
        return np.asarray(z, dtype=float) @ self.A_inv.T

    def inverse(self, y):
        return np.asarray(y, dtype=float) @ self.A.T

    def wrap(self, value_and_grad):
        A = self.A

        def target(y):
            logp, g = value_and_grad(A @ y)
            return logp, A.T @ g

        return target


class LinearBlock:
    """Gaussian algebra for ``(w1, b1, w2, b2)`` with tau and sigma held fixed.

    For fixed tau the mean is linear in the four regression coefficients, so
    under a Normal likelihood their conditional posterior is Gaussian and
    they can be integrated out in closed form. The sampler's warmup uses this
    to make global tau jumps.
    """

    def __init__(self, series, priors: PriorSpec, sharpness: float = DEFAULT_SHARPNESS):
        x, y = _xy(series)
        self.x, self.y, self.T = x, y, y.size
        self.sharpness = float(sharpness)
        # coefficient order inside this class: (w1, b1, w2, b2)
        self.m = np.array([priors.mu_w1, priors.mu_b1, priors.mu_w2, priors.mu_b2])
        self.prior_prec = 1.0 / np.array([priors.sd_w1, priors.sd_b1, priors.sd_w2, priors.sd_b2]) ** 2
        self.log_det_prior = -float(np.sum(np.log(self.prior_prec)))
        self.yy = float(y @ y)

    def design(self, tau: float) -> np.ndarray:
        s = _switch(self.x, tau * (self.T - 1), self.sharpness)
        one_s = 1.0 - s
        return np.column_stack([one_s * self.x, one_s, s * self.x, s])

    def _posterior(self, tau, sigma):
        X = self.design(tau)
        inv_var = 1.0 / sigma**2
        P = inv_var * (X.T @ X) + np.diag(self.prior_prec)
        h = inv_var * (X.T @ self.y) + self.prior_prec * self.m
        L = np.linalg.cholesky(P)
        mean = np.linalg.solve(L.T, np.linalg.solve(L, h))
        return L, h, mean

    def log_marginal(self, tau: float, sigma: float) -> float:
        """``log p(y | tau, sigma)`` with the coefficients integrated out."""
        L, h, mean = self._posterior(tau, sigma)
        log_det_P = 2.0 * float(np.sum(np.log(np.diag(L))))
        quad = (self.yy / sigma**2 + float(self.m @ (self.prior_prec * self.m)) - float(h @ mean))
        return -0.5 * (self.T * (_LOG_2PI + 2.0 * math.log(sigma))
                       + self.log_det_prior + log_det_P + quad)

    def sample(self, tau: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
        """Draw ``(w1, w2, b1, b2)`` from the Gaussian conditional posterior."""
        L, _, mean = self._posterior(tau, sigma)
        coef = mean + np.linalg.solve(L.T, rng.standard_normal(4))
        return coef[[0, 2, 1, 3]]
