"""Lognormal properties with normal-gamma uncertainty on their log-space parameters.

All parameter uncertainty lives in log space: a property ``X`` is lognormal with
``ln X ~ N(mu, q**2)`` and the prior over ``(mu, tau = 1/q**2)`` is normal-gamma.
Densities over ``(mu, q)`` carry the Jacobian ``|d tau / d q| = 2 / q**3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ndtr


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


def _check_positive(name, value):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be a finite positive number, got {value!r}")


def q_from_cov(cov):
    """Log-space standard deviation of a lognormal with coefficient of variation ``cov``."""
    return np.sqrt(np.log1p(np.square(cov)))


def cov_from_q(q):
    """Coefficient of variation of a lognormal with log-space standard deviation ``q``."""
    return np.sqrt(np.expm1(np.square(q)))


@dataclass(frozen=True)
class LognormalSpec:
    """A lognormal property given by its mean and coefficient of variation."""

    mean: float
    cov: float

    def __post_init__(self):
        _check_positive("mean", self.mean)
        _check_positive("cov", self.cov)

    @property
    def q(self) -> float:
        return float(q_from_cov(self.cov))

    @property
    def mu_ln(self) -> float:
        return math.log(self.mean) - 0.5 * self.q**2

    def point(self) -> "ParamPoint":
        return ParamPoint(self.mu_ln, self.q)

    @classmethod
    def from_log_params(cls, mu_ln: float, q: float) -> "LognormalSpec":
        return cls(math.exp(mu_ln + 0.5 * q**2), float(cov_from_q(q)))


@dataclass(frozen=True)
class ParamPoint:
    """Log-space parameters ``(mu, q)`` of a lognormal property."""

    mu: float
    q: float

    def __post_init__(self):
        if not (math.isfinite(self.q) and self.q > 0):
            raise DomainError(f"q must be positive, got {self.q!r}")
        if not math.isfinite(self.mu):
            raise DomainError(f"mu must be finite, got {self.mu!r}")

    @property
    def mean(self) -> float:
        return math.exp(self.mu + 0.5 * self.q**2)

    @property
    def cov(self) -> float:
        return float(cov_from_q(self.q))


@dataclass(frozen=True)
class NormalGammaHyper:
    """Normal-gamma hyperparameters over (log-mean, log-precision).

    ``mu | tau ~ N(mu0, 1 / (kappa0 * tau))`` and ``tau ~ Gamma(alpha0, rate=beta0)``.
    """

    mu0: float
    kappa0: float
    alpha0: float
    beta0: float
    # Q0 carried at full precision for reporting; not part of the density.
    q0: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        if not math.isfinite(self.mu0):
            raise DomainError("mu0 must be finite")
        for name in ("kappa0", "alpha0", "beta0"):
            _check_positive(name, getattr(self, name))

    @property
    def mean_q2(self) -> float:
        """Prior expectation of ``q**2`` (finite for ``alpha0 > 1``)."""
        return self.beta0 / (self.alpha0 - 1.0) if self.alpha0 > 1 else math.inf


def hyper_from_prior(mean: float, v0: float, n: int) -> NormalGammaHyper:
    """Hyperparameters from a prior mean, prior CoV and equivalent sample size.

    Examples
    --------
    >>> h = hyper_from_prior(15.0, 0.18, 6)
    >>> round(h.mu0, 3), h.kappa0, h.alpha0, round(h.beta0, 4)
    (2.692, 6.0, 3.0, 0.0957)
    """
    _check_positive("mean", mean)
    _check_positive("v0", v0)
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise DomainError(f"n must be an integer >= 1, got {n!r}")
    q0 = math.sqrt(math.log1p(v0 * v0))
    alpha0 = n / 2.0
    return NormalGammaHyper(
        mu0=math.log(mean) - 0.5 * q0 * q0,
        kappa0=float(n),
        alpha0=alpha0,
        beta0=alpha0 * q0 * q0,
        q0=q0,
    )


def normal_gamma_logpdf(h: NormalGammaHyper, mu, q):
    """Log density of the prior over ``(mu, q)``.

    The normal-gamma density over ``(mu, tau)`` is transformed to ``q = tau**-0.5``
    with Jacobian ``2 / q**3``; this is the density ``sample_prior`` draws from.
    Accepts scalars or arrays (broadcast), or a ``ParamPoint`` as ``mu``.
    """
    if isinstance(mu, ParamPoint):
        mu, q = mu.mu, mu.q
    mu = np.asarray(mu, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(~(q > 0)):
        raise DomainError("q must be positive")
    tau = 1.0 / (q * q)
    a, b, k = h.alpha0, h.beta0, h.kappa0
    log_gamma = a * math.log(b) - gammaln(a) + (a - 1.0) * np.log(tau) - b * tau
    log_norm = 0.5 * (math.log(k) + np.log(tau) - math.log(2 * math.pi)) - 0.5 * k * tau * (mu - h.mu0) ** 2
    out = log_gamma + log_norm + math.log(2.0) - 3.0 * np.log(q)
    return out if out.ndim else float(out)


def sample_prior_arrays(h: NormalGammaHyper, count: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``count`` prior samples and return them as ``(mu, q)`` arrays."""
    if isinstance(count, bool) or int(count) != count or count < 1:
        raise DomainError(f"count must be a positive integer, got {count!r}")
    rng = np.random.default_rng(seed)
    tau = rng.gamma(h.alpha0, 1.0 / h.beta0, size=int(count))
    mu = h.mu0 + rng.standard_normal(int(count)) / np.sqrt(h.kappa0 * tau)
    return mu, 1.0 / np.sqrt(tau)


def sample_prior(h: NormalGammaHyper, count: int, seed) -> list[ParamPoint]:
    """I.i.d. prior draws as ``ParamPoint`` objects; deterministic for a fixed seed."""
    mu, q = sample_prior_arrays(h, count, seed)
    return [ParamPoint(float(m), float(s)) for m, s in zip(mu, q)]


def lognormal_cdf(spec, x):
    """``P(X <= x)`` for a ``LognormalSpec`` or ``ParamPoint``.

    Uses ``scipy.special.ndtr`` for the standard normal CDF.
    """
    if isinstance(spec, LognormalSpec):
        mu, q = spec.mu_ln, spec.q
    else:
        mu, q = spec.mu, spec.q
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("x must be positive")
    with np.errstate(divide="ignore"):
        out = ndtr((np.log(x) - mu) / q)
    return out if out.ndim else float(out)
