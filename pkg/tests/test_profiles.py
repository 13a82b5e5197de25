import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stratwave import (
    PhysicalParameters,
    ProfileError,
    StratificationProfile,
    check_res2,
    check_res3,
    constant_density,
    from_beta,
    mu_star,
    params_from_descriptor,
    x_star,
)


def test_x_star_root():
    xs = x_star()
    assert abs(xs - 1.9368) < 1e-4
    assert abs(math.exp(xs) - xs - 5.0) < 1e-9


def test_mu_star_constant_density():
    params = PhysicalParameters(g=9.81, d=1.0, sigma=0.3, profile=constant_density(-3.2))
    assert mu_star(params) == 0.0


def test_mu_star_linear_profile():
    prof = StratificationProfile(
        p0=-4.0,
        rho_bar=lambda p: 1.0 - 0.05 * np.asarray(p, dtype=float),
        bernoulli_primitive=lambda p: np.zeros_like(np.asarray(p, dtype=float)),
    )
    params = PhysicalParameters(g=8.0, d=1.0, sigma=1.0, profile=prof)
    # ||rho'||_L1 = 0.05 * 4, no Bernoulli contribution
    assert abs(mu_star(params) - 2.0 * 8.0 * 0.2) < 1e-12


def test_res2_res3_constant_density():
    params = PhysicalParameters(g=9.81, d=1.0, sigma=0.3, profile=constant_density(-3.2))
    r2 = check_res2(params)
    assert r2["holds"] and r2["margin"] == -math.inf
    r3 = check_res3(params)
    # g d^3 rho |p0| / |p0|^3 = 9.81 * 3.2 / 32.768
    assert r3["holds"]
    assert abs(r3["lhs"] - 9.81 * 3.2 / 32.768) < 1e-12


def test_res3_fails_shallow_flux():
    params = PhysicalParameters(g=9.81, d=1.0, sigma=0.3, profile=constant_density(-1.0))
    r3 = check_res3(params)
    assert not r3["holds"]
    assert abs(r3["lhs"] - 9.81) < 1e-12


def test_profile_validation_errors():
    with pytest.raises(ProfileError):
        StratificationProfile(
            p0=1.0, rho_bar=lambda p: 1.0, bernoulli_primitive=lambda p: 0.0
        )
    with pytest.raises(ProfileError):
        StratificationProfile(
            p0=-1.0, rho_bar=lambda p: -1.0, bernoulli_primitive=lambda p: 0.0
        )
    with pytest.raises(ProfileError):
        # B(p0) != 0
        StratificationProfile(
            p0=-1.0, rho_bar=lambda p: 1.0, bernoulli_primitive=lambda p: p + 2.0
        )
    with pytest.raises(ProfileError):
        # increasing density declared nonincreasing
        StratificationProfile(
            p0=-1.0, rho_bar=lambda p: 1.0 + p + 1.0, bernoulli_primitive=lambda p: 0.0
        )


def test_positive_physical_parameters():
    prof = constant_density(-1.0)
    with pytest.raises(ProfileError):
        PhysicalParameters(g=-1.0, d=1.0, sigma=1.0, profile=prof)
    with pytest.raises(ProfileError):
        PhysicalParameters(g=9.81, d=1.0, sigma=0.0, profile=prof)


def test_from_beta_sqrt_singularity():
    # B = int C (p - p0)^{-1/2} = 2 C sqrt(p - p0)
    p0, C = -1.0, 0.5
    prof = from_beta(
        p0,
        rho_bar=lambda p: np.ones_like(np.asarray(p, dtype=float)),
        beta=lambda p: C / math.sqrt(p - p0),
        beta_singular=True,
    )
    p = np.linspace(p0, 0.0, 301)
    exact = 2.0 * C * np.sqrt(p - p0)
    assert np.max(np.abs(prof.bernoulli_primitive(p) - exact)) < 1e-9


def test_descriptor_round_trip():
    obj = {
        "p0": -3.2,
        "g": 9.81,
        "d": 1.0,
        "sigma": 0.3,
        "rho": {"kind": "linear", "value_at_top": 1.0, "slope": -0.02},
        "bernoulli": {"kind": "constant", "beta": 0.1},
    }
    params = params_from_descriptor(obj)
    assert params.profile.rho_bar(-1.0) == pytest.approx(1.02)
    assert params.profile.bernoulli_primitive(-3.2) == 0.0
    assert params.profile.bernoulli_primitive(0.0) == pytest.approx(0.32)


def test_descriptor_table_kinds():
    obj = {
        "p0": -2.0,
        "g": 9.81,
        "d": 1.0,
        "sigma": 1.0,
        "rho": {"kind": "table", "p": [-2.0, -1.0, 0.0], "value": [1.1, 1.05, 1.0]},
        "bernoulli": {"kind": "table_B", "p": [-2.0, -1.0, 0.0], "value": [0.0, 0.1, 0.15]},
    }
    params = params_from_descriptor(obj)
    assert params.profile.rho_bar(-2.0) == pytest.approx(1.1)
    assert params.profile.rho_bar_decreasing


def test_descriptor_malformed():
    with pytest.raises(ProfileError):
        params_from_descriptor({"p0": -1.0})
    with pytest.raises(ProfileError):
        params_from_descriptor(
            {
                "p0": -1.0,
                "g": 9.81,
                "d": 1.0,
                "sigma": 1.0,
                "rho": {"kind": "mystery"},
                "bernoulli": {"kind": "zero"},
            }
        )


@settings(max_examples=25, deadline=None)
@given(
    p0=st.floats(min_value=-8.0, max_value=-0.5),
    slope=st.floats(min_value=0.0, max_value=0.2),
    g=st.floats(min_value=1.0, max_value=20.0),
    d=st.floats(min_value=0.5, max_value=3.0),
)
def test_mu_star_matches_density_jump(p0, slope, g, d):
    # for beta = 0 and linear nonincreasing density, mu* = 2 g d (rho(p0)-rho(0))
    prof = StratificationProfile(
        p0=p0,
        rho_bar=lambda p: 1.0 - slope * np.asarray(p, dtype=float),
        bernoulli_primitive=lambda p: np.zeros_like(np.asarray(p, dtype=float)),
    )
    params = PhysicalParameters(g=g, d=d, sigma=1.0, profile=prof)
    assert mu_star(params) == pytest.approx(2.0 * g * d * slope * abs(p0), rel=1e-12)
