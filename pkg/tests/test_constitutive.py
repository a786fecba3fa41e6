import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from richards_lab.bench import EX1_SOIL, SOILS
from richards_lab.constitutive import (
    VanGenuchtenParams,
    conductivity,
    dK_dpsi,
    dtheta_dpsi,
    lipschitz_info,
    water_content,
)

ALL_SOILS = [EX1_SOIL, SOILS["silt"], SOILS["clay"]]

# 30-digit mpmath evaluations of the closed forms (S_e inside the Mualem bracket)
THETA_EX1_AT_M1 = 0.288208029152624357645830438492
K_EX1_AT_M1 = 0.0153742449617778807326338673633


def test_water_content_saturation_and_limits():
    p = EX1_SOIL
    assert water_content(p, 0.0) == p.theta_S
    assert water_content(p, 3.0) == p.theta_S
    assert water_content(p, -1e8) == pytest.approx(p.theta_R, abs=1e-12)


def test_water_content_example1_value():
    assert water_content(EX1_SOIL, -1.0) == pytest.approx(THETA_EX1_AT_M1, rel=1e-13)
    assert abs(water_content(EX1_SOIL, -1.0) - 0.28820) < 1e-5


def test_conductivity_example1_value():
    assert conductivity(EX1_SOIL, -1.0) == pytest.approx(K_EX1_AT_M1, rel=1e-12)
    assert conductivity(EX1_SOIL, 0.0) == EX1_SOIL.K_S


@pytest.mark.parametrize("p", ALL_SOILS)
def test_derivatives_vanish_at_saturation(p):
    assert dtheta_dpsi(p, 0.0) == 0.0
    assert dK_dpsi(p, 0.0) == 0.0
    assert dtheta_dpsi(p, 1.0) == 0.0


@pytest.mark.parametrize("p", ALL_SOILS)
def test_continuity_at_zero(p):
    eps = 1e-300
    assert abs(water_content(p, -eps) - water_content(p, eps)) < 1e-12
    assert abs(conductivity(p, -eps) - conductivity(p, eps)) < 1e-12


@pytest.mark.parametrize("p", ALL_SOILS)
def test_derivatives_match_centered_differences(p):
    psi = -np.logspace(-3, 1, 200)
    step = 1e-6 * np.maximum(1.0, np.abs(psi))
    fd_theta = (water_content(p, psi + step) - water_content(p, psi - step)) / (2 * step)
    fd_K = (conductivity(p, psi + step) - conductivity(p, psi - step)) / (2 * step)
    # roundoff in the difference quotient is about eps/step
    np.testing.assert_allclose(dtheta_dpsi(p, psi), fd_theta, rtol=1e-5, atol=1e-9)
    np.testing.assert_allclose(dK_dpsi(p, psi), fd_K, rtol=1e-5, atol=1e-9 * p.K_S)


@pytest.mark.parametrize(
    "p, expected, tol",
    [
        (EX1_SOIL, 0.2341, 1e-3),
        (SOILS["silt"], 4.501e-2, 1e-4),
        (SOILS["clay"], 7.4546e-3, 1e-5),
    ],
)
def test_lipschitz_theta_published_values(p, expected, tol):
    info = lipschitz_info(p)
    assert abs(info.L_theta - expected) <= tol
    assert info.L_theta >= dtheta_dpsi(p, np.linspace(-50, 0, 200_001)).max()


def test_lipschitz_info_flags_non_lipschitz_K():
    assert lipschitz_info(SOILS["clay"], (-5.0, 0.0)).K_lipschitz is False
    info = lipschitz_info(EX1_SOIL, (-5.0, 0.0))
    assert info.K_lipschitz
    assert 0 < info.K_m <= info.K_M == EX1_SOIL.K_S
    assert np.isfinite(info.L_K_estimate)


def test_lipschitz_info_rejects_empty_range():
    with pytest.raises(ValueError):
        lipschitz_info(EX1_SOIL, (0.0, 0.0))


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(theta_R=0.5, theta_S=0.4, alpha=1, n=2, K_S=1),
        dict(theta_R=0.0, theta_S=0.4, alpha=0, n=2, K_S=1),
        dict(theta_R=0.0, theta_S=0.4, alpha=1, n=1, K_S=1),
        dict(theta_R=0.0, theta_S=0.4, alpha=1, n=2, K_S=0),
    ],
)
def test_invalid_parameters(kwargs):
    with pytest.raises(ValueError):
        VanGenuchtenParams(**kwargs)


finite_psi = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(a=finite_psi, b=finite_psi, k=st.sampled_from(range(3)))
def test_monotone_and_bounded(a, b, k):
    p = ALL_SOILS[k]
    lo, hi = min(a, b), max(a, b)
    assert water_content(p, lo) <= water_content(p, hi)
    for v in (lo, hi):
        assert p.theta_R <= water_content(p, v) <= p.theta_S
        assert 0.0 < conductivity(p, v) <= p.K_S
