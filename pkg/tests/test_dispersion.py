import math

import numpy as np
import pytest

from stratwave import (
    InvalidStateError,
    PhysicalParameters,
    ProfileError,
    analytic_dispersion,
    check_w0_nondegenerate,
    constant_density,
    dispersion_constant,
    integrate_w1,
    integrate_w2,
    kernel_mode,
    largest_root_theta,
    shoot_depth,
    transversality_value,
    wronskian_at_top,
    wronskian_identity_check,
)
from stratwave.dispersion import wronskian_gradients


def test_theta0_closed_form(const_flow):
    # at theta = 0 with constant density z' = -g rho w', so z + g rho w is
    # conserved and a^3 w' = z + g rho w = a^3(p0), i.e. w' is exactly a^{-3}
    traj = integrate_w1(const_flow, 1.0, 0.0)
    g = const_flow.params.g
    a3_p0 = const_flow.a[0] ** 3
    invariant = traj.z + g * traj.w
    assert np.max(np.abs(invariant - a3_p0)) < 1e-8 * a3_p0
    wprime_exact = a3_p0 / const_flow.a**3
    assert np.max(np.abs(traj.wprime - wprime_exact)) < 1e-8 * np.max(wprime_exact)
    assert np.all(traj.w[1:] > 0.0)
    assert np.all(traj.wprime > 0.0)


def test_w2_initial_data_exact(const_flow):
    lam, theta = 1.3, 800.0
    traj = integrate_w2(const_flow, lam, theta)
    a3_top = const_flow.a[-1] ** 3
    assert traj.w[-1] == pytest.approx(lam**2 * a3_top, rel=1e-12)
    wp0_expected = lam**2 * const_flow.params.g * 1.0 + const_flow.params.sigma * theta
    assert traj.wprime[-1] == pytest.approx(wp0_expected, rel=1e-12)


def test_wronskian_constancy(const_flow):
    rng = np.random.default_rng(7)
    for _ in range(3):
        lam = float(rng.uniform(0.5, 2.0))
        theta = float(rng.uniform(10.0, 2000.0))
        t1 = integrate_w1(const_flow, lam, theta)
        t2 = integrate_w2(const_flow, lam, theta)
        linde = const_flow.a**3 * (t1.wprime * t2.w - t1.w * t2.wprime)
        scale = np.max(np.abs(linde))
        assert (np.max(linde) - np.min(linde)) < 1e-8 * scale


def test_wronskian_sign_structure(const_flow):
    lam = 1.0
    w0 = wronskian_at_top(const_flow, lam, 0.0)
    assert w0 < 0.0
    # beyond the largest root the Wronskian is positive
    root = largest_root_theta(const_flow, lam)
    assert wronskian_at_top(const_flow, lam, 4.0 * root) > 0.0


def test_largest_root_matches_analytic(const_flow, const_params):
    root = largest_root_theta(const_flow, 1.0)
    assert root == pytest.approx(analytic_dispersion(const_params), rel=1e-6)


def test_root_scaling(const_flow):
    t1 = largest_root_theta(const_flow, 0.75)
    t2 = largest_root_theta(const_flow, 1.5)
    assert t2 == pytest.approx(4.0 * t1, rel=1e-6)


def test_root_is_simple(const_flow):
    lam = 1.0
    root = largest_root_theta(const_flow, lam)
    _, w_th = wronskian_gradients(const_flow, lam, root)
    assert w_th > 0.0
    eps = 1e-4 * root
    assert wronskian_at_top(const_flow, lam, root - eps) < 0.0
    assert wronskian_at_top(const_flow, lam, root + eps) > 0.0


def test_refinement_oracle(const_flow):
    lam, theta = 1.2, 500.0
    t1 = integrate_w1(const_flow, lam, theta)
    t2 = integrate_w1(const_flow, lam, theta, rtol=1e-11, atol=1e-12)
    scale = np.max(np.abs(t2.w))
    assert np.max(np.abs(t1.w - t2.w)) < 1e-8 * scale


def test_dispersion_constant_full(branch_flow, branch_params):
    disp = dispersion_constant(branch_flow)
    assert disp.C_D == pytest.approx(analytic_dispersion(branch_params), rel=1e-6)
    assert disp.scaling_deviation <= 1e-6
    assert disp.lambda_star == pytest.approx(2.0 * math.pi / math.sqrt(disp.C_D))
    assert disp.transversality > 0.0
    assert disp.root_count == 1
    # lambda* consistency: theta = (2 pi)^2 is a Wronskian root at lambda*
    w = wronskian_at_top(branch_flow, disp.lambda_star, 4.0 * math.pi**2)
    scale = abs(
        wronskian_at_top(branch_flow, disp.lambda_star, 4.4 * math.pi**2)
    )
    assert abs(w) < 1e-8 * scale


def test_identity_and_sign(const_flow):
    lam = 1.3
    root = largest_root_theta(const_flow, lam)
    chk = wronskian_identity_check(const_flow, lam, root)
    assert not chk["indeterminate"]
    assert chk["rel_err"] <= 1e-4
    assert chk["w1_top_times_w_lambda"] < 0.0


def test_transversality_fd_cross_check(branch_flow):
    disp = dispersion_constant(branch_flow)
    w_lam, _ = wronskian_gradients(
        branch_flow, disp.lambda_star, 4.0 * math.pi**2, richardson=True
    )
    alt = -(disp.w1_profile.w[-1] / (4.0 * disp.lambda_star)) * w_lam
    assert disp.transversality == pytest.approx(alt, rel=1e-3)
    # constant density: both routes agree much more tightly
    assert disp.transversality == pytest.approx(alt, rel=1e-6)


def test_w0_nondegenerate(const_flow):
    res = check_w0_nondegenerate(const_flow)
    assert res["holds"]
    assert res["w0_at_top"] > 0.0
    assert res["z0_min"] > 0.0


def test_analytic_dispersion_properties():
    prof = constant_density(-3.2, 1.0)
    roots = []
    for sigma in (0.1, 1.0, 10.0):
        params = PhysicalParameters(g=9.81, d=1.0, sigma=sigma, profile=prof)
        cd = analytic_dispersion(params)
        roots.append(math.sqrt(cd))
        x = math.sqrt(cd)
        f = (9.81 + sigma * x * x) * math.tanh(x) / x - 3.2**2
        assert abs(f) < 1e-10 * 3.2**2
    assert roots[0] > roots[1] > roots[2]  # root decreases with sigma


def test_analytic_dispersion_preconditions():
    shallow = PhysicalParameters(
        g=9.81, d=1.0, sigma=1.0, profile=constant_density(-0.5)
    )
    with pytest.raises(ProfileError):
        analytic_dispersion(shallow)  # f(0) = g rho d - p0^2/d^2 >= 0
    from stratwave import StratificationProfile

    strat_prof = StratificationProfile(
        p0=-3.2,
        rho_bar=lambda p: 1.0 - 0.05 * np.asarray(p, dtype=float),
        bernoulli_primitive=lambda p: np.zeros_like(np.asarray(p, dtype=float)),
    )
    strat = PhysicalParameters(g=9.81, d=1.0, sigma=1.0, profile=strat_prof)
    with pytest.raises(ProfileError):
        analytic_dispersion(strat)


def test_cthe0_gate():
    # p0 = -1 makes A(0) = g large, so the non-degeneracy gate must trip
    params = PhysicalParameters(g=9.81, d=1.0, sigma=1.0, profile=constant_density(-1.0))
    flow = shoot_depth(params)
    with pytest.raises(InvalidStateError):
        largest_root_theta(flow, 1.0)


def test_kernel_mode_structure(branch_flow, branch_disp):
    mode = kernel_mode(branch_flow, branch_disp.lambda_star, branch_disp.w1_profile)
    q = np.linspace(-1.0, 2.0, 17)
    p0 = branch_flow.p_grid[0]
    assert np.max(np.abs(mode(q, p0))) < 1e-10
    p_mid = 0.5 * p0
    assert np.allclose(mode(q, p_mid), mode(-q, p_mid))
    assert np.allclose(mode(q, p_mid), mode(q + 1.0, p_mid))


def test_transversality_positive_stratified(strat_flow):
    lam = 1.0
    root = largest_root_theta(strat_flow, lam)
    t1 = integrate_w1(strat_flow, lam, root)
    val = transversality_value(strat_flow, lam, t1)
    assert val > 0.0
