import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qcfilter.priors import DomainError
from qcfilter.wall import (BRANCH_LIMIT, MasonrySpec, WallGeometry, characteristic_strength, design_point_degrees,
                           homogeneity_eccentricity, homogeneity_numeric, phi_reduction, resistance,
                           resistance_log_sensitivity, slenderness)

GEOM = WallGeometry(3.3, 0.24, 0.024)
SPEC = MasonrySpec(15.0, 5.0)


def test_design_point():
    assert characteristic_strength(SPEC) == pytest.approx(5.00, abs=0.01)
    lam = slenderness(GEOM, SPEC)
    assert lam == pytest.approx(0.281, abs=0.001)
    assert 1 - 2 * GEOM.r_e == pytest.approx(0.8, abs=1e-15)
    # 0.7617 uses the rounded slenderness 0.281; the unrounded one gives 0.76183.
    assert phi_reduction(0.281, 0.1) == pytest.approx(0.7617, abs=1e-4)
    assert phi_reduction(lam, 0.1) == pytest.approx(0.7617, abs=2e-4)
    assert resistance(GEOM, 5.0, spec=SPEC) == pytest.approx(914, abs=1)
    assert homogeneity_eccentricity(lam, 0.1).value == pytest.approx(0.275, abs=0.001)


def test_trivial_strength_and_slenderness():
    assert characteristic_strength(MasonrySpec(12.0, 3.0, 1.0, 1.0, 0.0)) == pytest.approx(12.0)
    doubled = MasonrySpec(30.0, 5.0)
    assert characteristic_strength(doubled) / characteristic_strength(SPEC) == pytest.approx(2**0.585)
    spec4 = MasonrySpec(15.0, 5.0, k_e=4 * 2400)
    assert slenderness(GEOM, spec4) == pytest.approx(slenderness(GEOM, SPEC) / 2)


def test_phi_cases():
    assert phi_reduction(0.0, 0.0) == 1.0
    a = 0.8
    lam = 2 * BRANCH_LIMIT * a
    assert phi_reduction(lam, 0.1) == pytest.approx(0.65 * a**3 / lam**2)
    with pytest.raises(DomainError):
        phi_reduction(0.3, 0.5)
    with pytest.raises(DomainError):
        WallGeometry(3.0, 0.2, 0.1)


def test_resistance_units():
    assert resistance(WallGeometry(1.0, 1.0, 0.0), 1.0, lam=0.0) == pytest.approx(1000.0)
    r1 = resistance(WallGeometry(3.3, 0.24, 0.024), 5.0, lam=0.3)
    r2 = resistance(WallGeometry(6.6, 0.48, 0.048), 5.0, lam=0.3)
    assert r2 == pytest.approx(2 * r1)
    with pytest.raises(DomainError):
        resistance(GEOM, 5.0)


@pytest.mark.parametrize("a", np.linspace(0.5, 1.0, 11))
def test_branch_near_continuity(a):
    r_e = (1 - a) / 2
    lam = BRANCH_LIMIT * a
    below = phi_reduction(lam * (1 - 1e-12), r_e)
    above = phi_reduction(lam, r_e)
    assert abs(below - above) < 0.01 * a


def test_phi_bounded_and_decreasing():
    lams = np.linspace(0, 3, 61)
    res = np.linspace(0, 0.45, 46)
    phi = np.array([[phi_reduction(l, r) for r in res] for l in lams])
    assert np.all((phi >= 0) & (phi <= 1))
    assert np.all(np.diff(phi, axis=0) <= 1e-12)
    assert np.all(np.diff(phi, axis=1) <= 1e-12)


def test_eccentricity_degree_limits():
    assert homogeneity_eccentricity(0.281, 0.0).value == 0.0
    assert homogeneity_eccentricity(1e-9, 0.1).value == pytest.approx(0.2 / 0.8, rel=1e-9)
    h = homogeneity_eccentricity(2.0, 0.1)
    assert h.branch == 2 and h.value == pytest.approx(3 * 0.2 / 0.8)


@pytest.mark.parametrize("lam", [0.281, 2.0])
def test_eccentricity_degree_matches_finite_difference(lam):
    num = homogeneity_numeric(lambda r: phi_reduction(lam, r), 0.1, rel_step=1e-4)
    assert -num == pytest.approx(homogeneity_eccentricity(lam, 0.1).value, abs=1e-3)


def test_strength_degrees_numeric():
    n_fb = homogeneity_numeric(lambda x: characteristic_strength(MasonrySpec(x, 5.0)), 15.0)
    n_fm = homogeneity_numeric(lambda x: characteristic_strength(MasonrySpec(15.0, x)), 5.0)
    assert n_fb == pytest.approx(0.585, abs=1e-6)
    assert n_fm == pytest.approx(0.162, abs=1e-6)


@given(st.floats(-3, 3), st.floats(0.1, 100))
def test_numeric_degree_of_power_law(n, x):
    assert homogeneity_numeric(lambda z: z**n, x, rel_step=1e-5) == pytest.approx(n, abs=1e-8)


def test_numeric_step_validation():
    with pytest.raises(DomainError):
        homogeneity_numeric(lambda z: z, 1.0, rel_step=0.5)


def test_degree_ordering():
    d = design_point_degrees(GEOM, SPEC)
    assert d["units"] > d["execution"] > d["mortar"]


def test_log_sensitivity():
    d = {"f_b": 0.585, "f_m": 0.162, "r_e": 0.275}
    assert resistance_log_sensitivity(d, {"f_b": 0, "f_m": 0, "r_e": 0}) == 0
    assert resistance_log_sensitivity(d, {"f_b": 0.1, "f_m": 0, "r_e": 0}) == pytest.approx(0.0585)
    lr = resistance_log_sensitivity(d, {k: 0.01 for k in d})
    assert lr == pytest.approx(0.01022, abs=1e-12)
    with pytest.raises(DomainError):
        resistance_log_sensitivity(d, {"f_b": 0.1})


def test_log_sensitivity_against_model():
    # Scale f_b, f_m by 1.01 and shrink r_e by 1% (eccentricity lowers R).
    lam = slenderness(GEOM, SPEC)

    def model(f_b, f_m, r_e):
        return resistance(GEOM, characteristic_strength(MasonrySpec(f_b, f_m)), r_e=r_e, lam=lam)

    base = model(15.0, 5.0, 0.1)
    moved = model(15.15, 5.05, 0.1 / 1.01)
    d = design_point_degrees(GEOM, SPEC)
    lr = resistance_log_sensitivity(d, {"units": 0.01, "mortar": 0.01, "execution": 0.01})
    assert math.log(moved / base) == pytest.approx(lr, abs=5e-4)
