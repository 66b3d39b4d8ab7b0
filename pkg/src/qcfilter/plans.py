"""Acceptance sampling plans, batch simulation and operating characteristic curves.

Samples of a batch are lognormal with log-space parameters ``(mu, q)``. With an
:class:`ARModel` the log-samples follow an AR(2) recursion instead of being
independent. Simulation is written as ``ln x = a * mu + q * u`` where ``a`` is a
deterministic drift sequence and ``u`` a standardised path; the same ``u`` can then
be reused across parameter points (common random numbers), which keeps surfaces
and OC curves smooth and monotone.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import stats
from scipy.special import ndtr, ndtri

from .priors import DomainError, ParamPoint


class Policy(str, Enum):
    COMBINED = "combined"      # pooled 2n samples must pass after a failed first set
    SECOND_SET = "second_set"  # second set alone must pass after a failed first set
    BOTH_SETS = "both_sets"    # both sets are always tested and must both pass


@dataclass(frozen=True)
class UnitTwoStage:
    """Two-stage plan on characteristic and mean strength of masonry units."""

    fc_declared: float
    fm_declared: float
    n_per_stage: int = 6
    k_char: float = 1.645
    second_stage_policy: Policy = Policy.COMBINED

    direction = "lower"

    def __post_init__(self):
        object.__setattr__(self, "second_stage_policy", Policy(self.second_stage_policy))
        if self.n_per_stage < 2:
            raise DomainError("n_per_stage must be >= 2")
        for name in ("fc_declared", "fm_declared", "k_char"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")

    @property
    def sample_size(self) -> int:
        return 2 * self.n_per_stage

    @property
    def limit(self) -> float:
        return self.fc_declared

    def _passes(self, x):
        m = x.mean(axis=-1)
        s = x.std(axis=-1, ddof=1)
        return (m >= self.fm_declared) & (m - self.k_char * s >= self.fc_declared)

    def accept(self, x):
        n = self.n_per_stage
        first = self._passes(x[..., :n])
        if self.second_stage_policy is Policy.COMBINED:
            return first | self._passes(x)
        second = self._passes(x[..., n:])
        if self.second_stage_policy is Policy.SECOND_SET:
            return first | second
        return first & second

    def closed_form(self, mu, q):
        return None


@dataclass(frozen=True)
class MortarMeanCriterion:
    """Accept when the sample mean exceeds ``xk + margin_factor * s``."""

    xk_declared: float
    n: int = 3
    margin_factor: float = 1.48

    direction = "lower"

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("n must be >= 2")
        if not self.xk_declared > 0:
            raise DomainError("xk_declared must be positive")

    @property
    def sample_size(self) -> int:
        return self.n

    @property
    def limit(self) -> float:
        return self.xk_declared

    def accept(self, x):
        if math.isinf(self.xk_declared):
            return np.zeros(x.shape[:-1], dtype=bool)
        return x.mean(axis=-1) > self.xk_declared + self.margin_factor * x.std(axis=-1, ddof=1)

    def closed_form(self, mu, q):
        # Only exact for normal samples; lognormal batches need simulation.
        return None

    def normal_approximation(self, mean, sd):
        """Acceptance probability for normal samples with the given mean and sd.

        ``sqrt(n) (x_mean - xk) / s`` is noncentral t with ``n - 1`` degrees of
        freedom and noncentrality ``sqrt(n) (mean - xk) / sd``.
        """
        root_n = math.sqrt(self.n)
        delta = root_n * (np.asarray(mean) - self.xk_declared) / np.asarray(sd)
        return stats.nct.sf(self.margin_factor * root_n, self.n - 1, delta)


@dataclass(frozen=True)
class ExecutionLimit:
    """Accept when none of ``n`` measurements exceeds ``limit``."""

    limit: float = 0.05
    n: int = 10

    direction = "upper"

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be >= 1")
        if not self.limit > 0:
            raise DomainError("limit must be positive")

    @property
    def sample_size(self) -> int:
        return self.n

    def accept(self, x):
        return np.all(x <= self.limit, axis=-1)

    def closed_form(self, mu, q):
        """``F(limit) ** n`` for independent lognormal measurements."""
        return ndtr((math.log(self.limit) - np.asarray(mu)) / np.asarray(q)) ** self.n


@dataclass(frozen=True)
class AlwaysAccept:
    """Degenerate plan that accepts every batch."""

    direction = "lower"
    limit = None

    @property
    def sample_size(self) -> int:
        return 1

    def accept(self, x):
        return np.ones(x.shape[:-1], dtype=bool)

    def closed_form(self, mu, q):
        return np.ones(np.broadcast(np.asarray(mu), np.asarray(q)).shape)


AcceptancePlan = UnitTwoStage | MortarMeanCriterion | ExecutionLimit | AlwaysAccept


@dataclass(frozen=True)
class ARModel:
    """AR(2) recursion for log-samples:
    ``y_k = phi1 y_{k-1} + phi2 y_{k-2} + N(innov_mean_scale * mu, innov_var_scale * q**2)``,
    started at ``y_0 = y_1 = mu`` and warmed up for ``burn_in`` steps.
    """

    phi1: float = 0.4
    phi2: float = 0.2
    innov_mean_scale: float = 0.4
    innov_var_scale: float = 0.8
    burn_in: int = 50

    def __post_init__(self):
        p1, p2 = self.phi1, self.phi2
        if not (-1 < p2 < 1 and p1 + p2 < 1 and p2 - p1 < 1):
            raise DomainError(f"AR(2) coefficients ({p1}, {p2}) are not stationary")
        if self.innov_var_scale <= 0 or self.burn_in < 0:
            raise DomainError("innov_var_scale must be positive and burn_in >= 0")

    @property
    def stationary_mean_factor(self) -> float:
        return self.innov_mean_scale / (1.0 - self.phi1 - self.phi2)

    @property
    def stationary_variance_factor(self) -> float:
        p1, p2 = self.phi1, self.phi2
        return self.innov_var_scale * (1 - p2) / ((1 + p2) * ((1 - p2) ** 2 - p1 * p1))

    def paths(self, rng, n_sim, n):
        """Drift ``a`` (shape ``(n,)``) and standardised paths ``u`` (``(n_sim, n)``)."""
        steps = self.burn_in + n
        e = rng.standard_normal((n_sim, steps)) * math.sqrt(self.innov_var_scale)
        a = np.empty(steps + 2)
        u = np.zeros((n_sim, steps + 2))
        a[:2] = 1.0
        for k in range(2, steps + 2):
            a[k] = self.phi1 * a[k - 1] + self.phi2 * a[k - 2] + self.innov_mean_scale
            u[:, k] = self.phi1 * u[:, k - 1] + self.phi2 * u[:, k - 2] + e[:, k - 2]
        return a[-n:], u[:, -n:]


def _paths(ar, rng, n_sim, n):
    if ar is None:
        return np.ones(n), rng.standard_normal((n_sim, n))
    return ar.paths(rng, n_sim, n)


def _check_point(point):
    if not isinstance(point, ParamPoint):
        point = ParamPoint(*point)
    return point


def simulate_batch(point, plan, ar=None, seed=0) -> bool:
    """Draw one batch at ``point``, apply the plan and return whether it is accepted."""
    point = _check_point(point)
    rng = np.random.default_rng(seed)
    a, u = _paths(ar, rng, 1, plan.sample_size)
    x = np.exp(a * point.mu + point.q * u)
    return bool(plan.accept(x)[0])


def acceptance_probability(point, plan, ar=None, n_sim=10_000, seed=0):
    """Monte Carlo acceptance probability and its binomial standard error."""
    if n_sim < 100:
        raise DomainError("n_sim must be >= 100")
    point = _check_point(point)
    rng = np.random.default_rng(seed)
    a, u = _paths(ar, rng, int(n_sim), plan.sample_size)
    hits = plan.accept(np.exp(a * point.mu + point.q * u))
    pa = float(hits.mean())
    return pa, math.sqrt(pa * (1.0 - pa) / n_sim)


def acceptance_surface(plan, mu_grid, q_grid, ar=None, n_sim=2_000, seed=0, chunk=64):
    """Acceptance probabilities on the tensor grid ``mu_grid x q_grid``.

    One set of standardised paths is shared by every node.
    """
    mu_grid = np.asarray(mu_grid, dtype=float)
    q_grid = np.asarray(q_grid, dtype=float)
    rng = np.random.default_rng(seed)
    a, u = _paths(ar, rng, int(n_sim), plan.sample_size)
    out = np.empty((mu_grid.size, q_grid.size))
    for j, q in enumerate(q_grid):
        qu = q * u
        for start in range(0, mu_grid.size, chunk):
            mus = mu_grid[start:start + chunk]
            x = np.exp(mus[:, None, None] * a + qu[None])
            out[start:start + chunk, j] = plan.accept(x).mean(axis=-1)
    return out


def defect_rate(point, limit, direction="lower"):
    """Fraction of the population beyond ``limit``.

    ``direction="lower"`` counts values below the limit (strength-type properties),
    ``"upper"`` counts values above it (eccentricity-type properties).
    """
    if not limit > 0:
        raise DomainError(f"limit must be positive, got {limit!r}")
    point = _check_point(point)
    below = float(ndtr((math.log(limit) - point.mu) / point.q))
    return below if direction == "lower" else 1.0 - below


def point_for_defect_rate(p, limit, q, direction="lower"):
    """Inverse of :func:`defect_rate` at fixed ``q``."""
    if not 0 < p < 1:
        raise DomainError("defect rate must lie in (0, 1)")
    z = ndtri(p) if direction == "lower" else ndtri(1.0 - p)
    return ParamPoint(math.log(limit) - q * z, q)


@dataclass(frozen=True)
class OCCurve:
    quality: tuple
    pa: tuple
    pa_stderr: tuple
    quality_axis: str = "defect_rate"

    @property
    def points(self):
        return list(zip(self.quality, self.pa, self.pa_stderr))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quality", "pa", "stderr"])
        for row in self.points:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, quality_axis="defect_rate") -> "OCCurve":
        rows = list(csv.reader(io.StringIO(text)))
        if rows[0] != ["quality", "pa", "stderr"]:
            raise ValueError(f"unexpected OC header {rows[0]}")
        cols = list(zip(*[[float(v) for v in r] for r in rows[1:]]))
        return cls(*cols, quality_axis=quality_axis)


def oc_curve(plan, levels, *, axis="defect_rate", fixed=None, ar=None, n_sim=10_000, seed=0):
    """Operating characteristic curve of ``plan`` over ``levels`` of one quality axis.

    ``axis="defect_rate"``: ``fixed`` is the log-space standard deviation of the
    (stationary) marginal; each defect rate is mapped to a log-mean.
    ``axis="mean"``: levels are log-means, ``fixed`` is ``q``.
    ``axis="cov"``: levels are CoVs, ``fixed`` is the log-mean.
    Every level uses the same seed, so neighbouring points share random numbers.
    """
    levels = sorted(float(v) for v in levels)
    if len(levels) < 2:
        raise DomainError("an OC sweep needs at least two quality levels")
    if fixed is None:
        raise DomainError("the non-swept parameter must be given")
    var_f = ar.stationary_variance_factor if ar is not None else 1.0
    mean_f = ar.stationary_mean_factor if ar is not None else 1.0
    pas, errs = [], []
    for level in levels:
        if axis == "defect_rate":
            if level <= 0.0 or level >= 1.0:
                # Degenerate endpoints: all or nothing beyond the limit.
                bad = level >= 1.0
                pas.append(0.0 if bad else 1.0)
                errs.append(0.0)
                continue
            marg = point_for_defect_rate(level, plan.limit, fixed, plan.direction)
            point = ParamPoint(marg.mu / mean_f, fixed / math.sqrt(var_f))
        elif axis == "mean":
            point = ParamPoint(level, fixed)
        elif axis == "cov":
            point = ParamPoint(fixed, math.sqrt(math.log1p(level**2)))
        else:
            raise DomainError(f"unknown quality axis {axis!r}")
        pa, err = acceptance_probability(point, plan, ar, n_sim, seed)
        pas.append(pa)
        errs.append(err)
    return OCCurve(tuple(levels), tuple(pas), tuple(errs), axis)
