"""Resistance of a vertically loaded masonry wall and its homogeneity degrees.

Units: lengths in m, stresses in MPa, resistance in kN/m.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .priors import DomainError

# First branch of the capacity reduction factor holds for lambda < BRANCH_LIMIT * A.
BRANCH_LIMIT = 1.14
BRANCH1_DIVISOR = 2.58
BRANCH2_FACTOR = 0.65


@dataclass(frozen=True)
class WallGeometry:
    h: float
    t: float
    e: float

    def __post_init__(self):
        if not (self.h > 0 and self.t > 0 and self.e >= 0):
            raise DomainError("wall dimensions must be positive")
        if self.r_e >= 0.5:
            raise DomainError("relative eccentricity must be below 0.5")

    @property
    def r_h(self) -> float:
        return self.h / self.t

    @property
    def r_e(self) -> float:
        return self.e / self.t


@dataclass(frozen=True)
class MasonrySpec:
    f_b: float
    f_m: float
    big_k: float = 0.79
    exp_alpha: float = 0.585
    exp_beta: float = 0.162
    k_e: float = 2400.0

    def __post_init__(self):
        if not (self.f_b > 0 and self.f_m > 0 and self.big_k > 0 and self.k_e > 0):
            raise DomainError("masonry parameters must be positive")


def characteristic_strength(spec: MasonrySpec) -> float:
    """``K * f_b**alpha * f_m**beta`` in MPa."""
    return spec.big_k * spec.f_b**spec.exp_alpha * spec.f_m**spec.exp_beta


def slenderness(geom: WallGeometry, spec: MasonrySpec) -> float:
    # f cancels because E = K_E * f.
    return geom.r_h / math.sqrt(spec.k_e)


def phi_reduction(lam: float, r_e: float) -> float:
    """Capacity reduction factor for slenderness ``lam`` and relative eccentricity ``r_e``."""
    if not 0 <= r_e < 0.5:
        raise DomainError(f"relative eccentricity must lie in [0, 0.5), got {r_e}")
    if lam < 0:
        raise DomainError("slenderness must be non-negative")
    a = 1.0 - 2.0 * r_e
    if lam < BRANCH_LIMIT * a:
        phi = a - lam**2 / (BRANCH1_DIVISOR * a)
    else:
        phi = BRANCH2_FACTOR * a**3 / lam**2
    return min(max(phi, 0.0), 1.0)


def resistance(geom: WallGeometry, f: float, r_e: float | None = None, lam: float | None = None,
               spec: MasonrySpec | None = None) -> float:
    """``f * Phi * t`` in kN/m for ``f`` in MPa and ``t`` in m.

    ``lam`` defaults to the wall slenderness (needs ``spec``) and ``r_e`` to ``geom.r_e``.
    """
    if r_e is None:
        r_e = geom.r_e
    if lam is None:
        if spec is None:
            raise DomainError("either lam or spec is required")
        lam = slenderness(geom, spec)
    return 1000.0 * f * phi_reduction(lam, r_e) * geom.t


@dataclass(frozen=True)
class Homogeneity:
    value: float
    branch: int


def homogeneity_eccentricity(lam: float, r_e: float) -> Homogeneity:
    """Magnitude of the log-derivative of Phi with respect to ``r_e``.

    d(Phi)/d(r_e) is negative; the positive magnitude is returned. In the second
    branch Phi is proportional to A**3, giving ``3 * 2 r_e / A``.
    """
    if not 0 <= r_e < 0.5:
        raise DomainError(f"relative eccentricity must lie in [0, 0.5), got {r_e}")
    a = 1.0 - 2.0 * r_e
    if lam >= BRANCH_LIMIT * a:
        return Homogeneity(3.0 * 2.0 * r_e / a, 2)
    c = BRANCH1_DIVISOR * a * a
    return Homogeneity(2.0 * r_e / a * (c + lam**2) / (c - lam**2), 1)


def homogeneity_numeric(model, x_d: float, rel_step: float = 1e-4) -> float:
    """Central-difference estimate of ``d ln R / d ln X`` at ``x_d``."""
    if not 0 < rel_step <= 0.1:
        raise DomainError("rel_step must lie in (0, 0.1]")
    hi = model(x_d * (1 + rel_step))
    lo = model(x_d * (1 - rel_step))
    mid = model(x_d)
    return (hi - lo) / (2 * rel_step * x_d) * x_d / mid


def resistance_log_sensitivity(degrees, deltas) -> float:
    """Linearised relative change of resistance, ``sum(n_i * L_i)``."""
    degrees = dict(degrees)
    deltas = dict(deltas)
    if set(degrees) != set(deltas):
        raise DomainError(f"names differ: {sorted(set(degrees) ^ set(deltas))}")
    return math.fsum(degrees[k] * deltas[k] for k in degrees)


def design_point_degrees(geom: WallGeometry, spec: MasonrySpec) -> dict:
    """Homogeneity degrees of unit strength, mortar strength and eccentricity."""
    lam = slenderness(geom, spec)
    return {
        "units": spec.exp_alpha,
        "mortar": spec.exp_beta,
        "execution": homogeneity_eccentricity(lam, geom.r_e).value,
    }
