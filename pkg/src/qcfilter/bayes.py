"""Bayesian filtering of parameter distributions by acceptance plans.

The posterior over ``(mu, q)`` after a sequence of controls is proportional to
the prior times the product of the plans' acceptance probabilities. It is
sampled with random-walk Metropolis-Hastings in ``(mu, ln q)``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid
from scipy.special import polygamma

from .plans import AlwaysAccept, acceptance_surface
from .priors import DomainError, NormalGammaHyper, cov_from_q, normal_gamma_logpdf, sample_prior_arrays

log = logging.getLogger(__name__)

ESTIMATORS = ("grid", "closed_form", "monte_carlo", "auto")


class EmptyPosteriorError(RuntimeError):
    """The acceptance plan rejects (almost) every batch the prior can produce."""


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MCMCConfig:
    """Sampler settings. ``n_samples`` counts iterations per chain including burn-in."""

    n_chains: int = 4
    n_samples: int = 50_000
    burn_in: int = 10_000
    proposal_scale_mu: float | None = None
    proposal_scale_logq: float | None = None
    pa_estimator: str = "auto"
    grid_size: int = 60
    grid_n_sim: int = 2_000
    mc_n_sim: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.n_chains < 1:
            raise DomainError("n_chains must be >= 1")
        if not self.n_samples > self.burn_in >= 0:
            raise DomainError("n_samples must exceed burn_in")
        if self.pa_estimator not in ESTIMATORS:
            raise DomainError(f"pa_estimator must be one of {ESTIMATORS}")
        for name in ("proposal_scale_mu", "proposal_scale_logq"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"{name} must be positive")


# --------------------------------------------------------------------------
# Acceptance-probability estimators
# --------------------------------------------------------------------------

def prior_box(prior: NormalGammaHyper, tail=1e-6):
    """A ``(mu, ln q)`` box holding essentially all prior mass."""
    a, b, k = prior.alpha0, prior.beta0, prior.kappa0
    tau_hi = stats.gamma.ppf(1 - tail, a, scale=1 / b)
    tau_lo = stats.gamma.ppf(tail, a, scale=1 / b)
    q_wide = math.sqrt(b / stats.gamma.ppf(1e-3, a, scale=1 / b))
    half = 5.0 * q_wide / math.sqrt(k)
    return (prior.mu0 - half, prior.mu0 + half), (0.5 * math.log(b / tau_hi), 0.5 * math.log(b / tau_lo))


class GridPa:
    """Acceptance probability precomputed on a regular ``(mu, ln q)`` grid and
    interpolated bilinearly. Points outside the grid take the nearest edge value."""

    exact = True

    def __init__(self, plan, ar, mu_range, logq_range, size=60, n_sim=2_000, seed=0):
        self.mu_grid = np.linspace(*mu_range, size)
        self.logq_grid = np.linspace(*logq_range, size)
        self.values = acceptance_surface(plan, self.mu_grid, np.exp(self.logq_grid), ar, n_sim, seed)

    def __call__(self, mu, q):
        return _bilinear(self.mu_grid, self.logq_grid, self.values, mu, np.log(q))


def _bilinear(xg, yg, z, x, y):
    x = np.clip(x, xg[0], xg[-1])
    y = np.clip(y, yg[0], yg[-1])
    fx = (x - xg[0]) / (xg[1] - xg[0])
    fy = (y - yg[0]) / (yg[1] - yg[0])
    i = np.minimum(fx.astype(int), xg.size - 2)
    j = np.minimum(fy.astype(int), yg.size - 2)
    tx = fx - i
    ty = fy - j
    return ((1 - tx) * (1 - ty) * z[i, j] + tx * (1 - ty) * z[i + 1, j]
            + (1 - tx) * ty * z[i, j + 1] + tx * ty * z[i + 1, j + 1])


class ClosedFormPa:
    exact = True

    def __init__(self, plan):
        self.plan = plan

    def __call__(self, mu, q):
        return self.plan.closed_form(mu, q)


class MonteCarloPa:
    """Fresh Monte Carlo estimate per call. Used pseudo-marginally: the estimate at
    the current state is kept, so the chain still targets the exact posterior."""

    exact = False

    def __init__(self, plan, ar, n_sim, rng):
        self.plan, self.ar, self.n_sim, self.rng = plan, ar, n_sim, rng

    def __call__(self, mu, q):
        mu = np.atleast_1d(mu)
        q = np.atleast_1d(q)
        n = self.plan.sample_size
        if self.ar is None:
            a, u = np.ones(n), self.rng.standard_normal((mu.size, self.n_sim, n))
        else:
            a, u = self.ar.paths(self.rng, mu.size * self.n_sim, n)
            u = u.reshape(mu.size, self.n_sim, n)
        x = np.exp(mu[:, None, None] * a + q[:, None, None] * u)
        return self.plan.accept(x).mean(axis=-1)


class FunctionPa:
    exact = True

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, mu, q):
        return np.asarray(self.fn(mu, q), dtype=float) * np.ones_like(mu)


def make_estimator(plan, ar, prior, cfg: MCMCConfig, seed=0):
    """Pick the acceptance-probability estimator for one plan."""
    if callable(plan) and not hasattr(plan, "accept"):
        return FunctionPa(plan)
    kind = cfg.pa_estimator
    closed = plan.closed_form(np.array([prior.mu0]), np.array([1.0])) if ar is None else None
    if isinstance(plan, AlwaysAccept):
        return ClosedFormPa(plan)
    if kind == "auto":
        kind = "closed_form" if closed is not None else "grid"
    if kind == "closed_form":
        if closed is None:
            raise DomainError(f"no closed form for {type(plan).__name__} with these settings")
        return ClosedFormPa(plan)
    if kind == "monte_carlo":
        return MonteCarloPa(plan, ar, cfg.mc_n_sim, np.random.default_rng(seed))
    mu_range, logq_range = prior_box(prior)
    return GridPa(plan, ar, mu_range, logq_range, cfg.grid_size, cfg.grid_n_sim, seed)


# --------------------------------------------------------------------------
# Chains
# --------------------------------------------------------------------------

@dataclass
class ParamChain:
    """Post burn-in samples of all chains, concatenated, with chain labels."""

    mu: np.ndarray
    q: np.ndarray
    chain: np.ndarray
    acceptance_rate: float
    rhat: dict = field(default_factory=dict)
    converged: bool = True
    scales: tuple = ()

    def __len__(self):
        return self.mu.size

    @classmethod
    def from_points(cls, mu, q):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        q = np.atleast_1d(np.asarray(q, dtype=float)) * np.ones_like(mu)
        return cls(mu, q, np.zeros(mu.size, dtype=int), float("nan"))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["chain", "iter", "mu", "q"])
        it = np.zeros_like(self.chain)
        for c in np.unique(self.chain):
            sel = self.chain == c
            it[sel] = np.arange(sel.sum())
        for c, i, m, s in zip(self.chain, it, self.mu, self.q):
            w.writerow([int(c), int(i), repr(float(m)), repr(float(s))])
        return buf.getvalue()


def split_rhat(draws: np.ndarray) -> float:
    """Split-chain potential scale reduction for ``draws`` of shape (chains, n)."""
    n = draws.shape[1] // 2
    halves = np.concatenate([draws[:, :n], draws[:, n:2 * n]])
    w = halves.var(axis=1, ddof=1).mean()
    b = n * halves.mean(axis=1).var(ddof=1)
    var = (n - 1) / n * w + b / n
    return float(math.sqrt(var / w)) if w > 0 else float("nan")


def _log_target(prior, estimators, mu, logq, pa_cache=None):
    q = np.exp(logq)
    lp = normal_gamma_logpdf(prior, mu, q) + logq
    total = np.zeros_like(mu)
    pas = []
    for est in estimators:
        pa = np.asarray(est(mu, q), dtype=float)
        pas.append(pa)
        with np.errstate(divide="ignore"):
            total = total + np.log(np.clip(pa, 0.0, 1.0))
    return lp + total, pas


def _initial_states(prior, estimators, n_chains, rng, n_draws=4_000):
    seeds = rng.integers(2**63)
    mu, q = sample_prior_arrays(prior, n_draws, seeds)
    weight = np.ones(n_draws)
    for est in estimators:
        weight = weight * np.clip(np.asarray(est(mu, q), dtype=float), 0.0, 1.0)
    if not np.any(weight > 0):
        raise EmptyPosteriorError("acceptance probability is zero across the prior bulk")
    idx = rng.choice(n_draws, size=n_chains, p=weight / weight.sum())
    return mu[idx], np.log(q[idx])


def _default_scales(prior):
    # ln q = -ln(tau) / 2 and Var[ln tau] = trigamma(alpha0) under the gamma prior.
    sd_logq = 0.5 * math.sqrt(float(polygamma(1, prior.alpha0)))
    sd_mu = math.sqrt(prior.beta0 / prior.alpha0 / prior.kappa0)
    return 1.5 * sd_mu, 1.5 * sd_logq


def _sample(prior, estimators, cfg: MCMCConfig, rng) -> ParamChain:
    c = cfg.n_chains
    s_mu, s_lq = _default_scales(prior)
    scale = np.empty((c, 2))
    scale[:, 0] = cfg.proposal_scale_mu or s_mu
    scale[:, 1] = cfg.proposal_scale_logq or s_lq
    adapt = cfg.proposal_scale_mu is None and cfg.proposal_scale_logq is None
    exact = all(getattr(e, "exact", True) for e in estimators)

    mu, logq = _initial_states(prior, estimators, c, rng)
    cur_lp, cur_pa = _log_target(prior, estimators, mu, logq)

    n_keep = cfg.n_samples - cfg.burn_in
    out_mu = np.empty((c, n_keep))
    out_lq = np.empty((c, n_keep))
    accepted = np.zeros(c)
    batch_acc = np.zeros(c)
    batch = 100
    for it in range(cfg.n_samples):
        step = rng.standard_normal((c, 2)) * scale
        prop_mu = mu + step[:, 0]
        prop_lq = logq + step[:, 1]
        prop_lp, prop_pa = _log_target(prior, estimators, prop_mu, prop_lq)
        if not exact:
            # Pseudo-marginal: recompute only the prior at the current state.
            cur_lp = _log_target(prior, [], mu, logq)[0] + sum(
                np.log(np.clip(p, 0.0, 1.0)) for p in cur_pa)
        with np.errstate(invalid="ignore"):
            ok = np.log(rng.random(c)) < prop_lp - cur_lp
        mu = np.where(ok, prop_mu, mu)
        logq = np.where(ok, prop_lq, logq)
        cur_lp = np.where(ok, prop_lp, cur_lp)
        cur_pa = [np.where(ok, pp, cp) for pp, cp in zip(prop_pa, cur_pa)]
        if it < cfg.burn_in:
            batch_acc += ok
            if adapt and (it + 1) % batch == 0:
                rate = batch_acc / batch
                # Robbins-Monro step on the log scale toward ~30% acceptance.
                gain = 2.0 / math.sqrt(1 + (it + 1) / batch)
                scale *= np.exp(gain * (rate - 0.3))[:, None]
                batch_acc[:] = 0
        else:
            k = it - cfg.burn_in
            out_mu[:, k] = mu
            out_lq[:, k] = logq
            accepted += ok

    rhat = {"mu": split_rhat(out_mu), "q": split_rhat(out_lq)} if n_keep >= 4 else {}
    converged = all(np.isfinite(v) and v <= 1.1 for v in rhat.values())
    if not converged:
        warnings.warn(f"chains have not converged (split R-hat {rhat})", ConvergenceWarning, stacklevel=3)
    return ParamChain(
        mu=out_mu.ravel(),
        q=np.exp(out_lq).ravel(),
        chain=np.repeat(np.arange(c), n_keep),
        acceptance_rate=float(accepted.sum() / (c * n_keep)),
        rhat=rhat,
        converged=converged,
        scales=tuple(map(tuple, scale)),
    )


def _stage_rng(seed, stage):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stage)]))


def _surface_seed(seed, stage):
    return np.random.SeedSequence([int(seed), int(stage), 1]).generate_state(1)[0]


def run_posterior(prior: NormalGammaHyper, plan, ar=None, cfg: MCMCConfig = MCMCConfig()) -> ParamChain:
    """Sample the posterior of ``(mu, q)`` after one control.

    ``plan`` is an acceptance plan or a vectorised callable ``pa(mu, q)``.
    """
    return sequential_update(prior, [(plan, ar)], cfg)[0]


def sequential_update(prior: NormalGammaHyper, stages, cfg: MCMCConfig = MCMCConfig()) -> list[ParamChain]:
    """Posterior chains after each of a sequence of controls.

    Stage ``k`` targets the prior times the acceptance probabilities of stages
    ``0..k``: the outgoing distribution of one control is the incoming one of the next.
    """
    if not stages:
        raise DomainError("at least one stage is required")
    estimators, chains = [], []
    for k, stage in enumerate(stages):
        plan, ar = stage if isinstance(stage, tuple) else (stage, None)
        estimators.append(make_estimator(plan, ar, prior, cfg, seed=_surface_seed(cfg.seed, k)))
        log.debug("stage %d: sampling with %d acceptance factor(s)", k, len(estimators))
        chains.append(_sample(prior, list(estimators), cfg, _stage_rng(cfg.seed, k)))
    return chains


# --------------------------------------------------------------------------
# Summaries
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class PredictiveDensity:
    x: np.ndarray
    density: np.ndarray
    normalization_check: float

    @property
    def grid(self):
        return list(zip(self.x, self.density))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "density"])
        for x, d in self.grid:
            w.writerow([repr(float(x)), repr(float(d))])
        return buf.getvalue()


def predictive_density(chain: ParamChain, grid, chunk=4_096) -> PredictiveDensity:
    """Predictive density of the property: the chain-averaged lognormal pdf on ``grid``,
    renormalised by trapezoid quadrature."""
    x = np.asarray(grid, dtype=float)
    if len(chain) == 0:
        raise DomainError("empty chain")
    if x.ndim != 1 or x.size < 2 or np.any(x <= 0) or np.any(np.diff(x) <= 0):
        raise DomainError("grid must be strictly increasing and positive")
    lx = np.log(x)
    dens = np.zeros_like(x)
    below = above = 0.0
    for s in range(0, len(chain), chunk):
        mu = chain.mu[s:s + chunk, None]
        q = chain.q[s:s + chunk, None]
        z = (lx - mu) / q
        dens += (np.exp(-0.5 * z * z) / (q * x * math.sqrt(2 * math.pi))).sum(axis=0)
        below += stats.norm.cdf(z[:, 0]).sum()
        above += stats.norm.sf(z[:, -1]).sum()
    dens /= len(chain)
    total = float(trapezoid(dens, x))
    if total < 0.95:
        tail = "lower" if below >= above else "upper"
        raise DomainError(f"grid misses {1 - total:.3f} of the predictive mass, mostly in the {tail} tail")
    return PredictiveDensity(x, dens / total, total)


@dataclass(frozen=True)
class CoVSummary:
    """Summary of the coefficient of variation over a chain.

    ``mean_v``, ``median_v`` and ``ci75`` describe the per-sample CoV
    ``sqrt(exp(q**2) - 1)``. ``predictive_v`` is the CoV implied by the log-space
    variance of the predictive distribution, ``Var[mu] + E[q**2]``.
    """

    mean_v: float
    median_v: float
    ci75: tuple
    predictive_v: float


def cov_summary(chain: ParamChain) -> CoVSummary:
    if len(chain) == 0:
        raise DomainError("empty chain")
    v = cov_from_q(chain.q)
    lo, med, hi = np.quantile(v, [0.125, 0.5, 0.875])
    q2 = chain.mu.var() + np.mean(chain.q**2)
    return CoVSummary(float(v.mean()), float(med), (float(lo), float(hi)), float(cov_from_q(math.sqrt(q2))))
