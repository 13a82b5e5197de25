import dataclasses
import math

import numpy as np
import pytest
import scipy.sparse as sp

from stratwave import (
    ConvergenceError,
    FixedAmplitude,
    HeightField,
    InvalidStateError,
    amplitude,
    continue_branch,
    discrete_residual,
    half_jacobian,
    inverse_helmholtz_top,
    jacobian,
    kernel_grid,
    newton_correct,
    operator_norm,
    profile_diagnostics,
    shoot_depth,
    smallest_singular_pair,
    total_hp_grid,
    zero_field,
)


def smooth_field(flow, lam, n_q=32, amp=0.01):
    q = np.arange(n_q) / n_q
    s = (flow.p_grid - flow.p_grid[0]) / abs(flow.p_grid[0])
    h = amp * (
        np.outer(s, np.cos(2.0 * np.pi * q))
        + 0.4 * np.outer(s**2, np.cos(4.0 * np.pi * q))
    )
    return HeightField(q_grid=q, p_grid=flow.p_grid, h=h, lam=lam)


def test_laminar_is_exact_zero(branch_params, branch_flow):
    # the analytic subtraction makes the trivial solution exact on the grid
    for lam in (0.7, 1.0, 2.5, 4.0):
        res = discrete_residual(branch_params, branch_flow, zero_field(branch_flow, lam))
        assert np.max(np.abs(res)) == 0.0


def test_inverse_helmholtz_known_modes():
    n = 64
    q = np.arange(n) / n
    const = inverse_helmholtz_top(np.full(n, 2.5))
    assert np.allclose(const, 2.5, atol=1e-13)
    out = inverse_helmholtz_top(np.cos(2.0 * np.pi * q))
    assert np.allclose(out, np.cos(2.0 * np.pi * q) / (1.0 + 4.0 * np.pi**2), atol=1e-13)


def test_inverse_helmholtz_roundtrip():
    # apply (1 - d_qq) analytically to a trigonometric polynomial, then invert
    n = 64
    q = np.arange(n) / n
    f = 0.3 + np.cos(2.0 * np.pi * q) - 0.2 * np.sin(6.0 * np.pi * q)
    forced = (
        0.3
        + (1.0 + 4.0 * np.pi**2) * np.cos(2.0 * np.pi * q)
        - 0.2 * (1.0 + 36.0 * np.pi**2) * np.sin(6.0 * np.pi * q)
    )
    assert np.max(np.abs(inverse_helmholtz_top(forced) - f)) < 1e-12


def test_jacobian_matches_finite_differences(branch_params, branch_flow):
    for seed, lam, amp in ((0, 3.0, 0.01), (1, 3.6, 0.02), (2, 2.4, 0.005)):
        field = smooth_field(branch_flow, lam, amp=amp)
        jr = jacobian(branch_params, branch_flow, field, fd_check=True, seed=seed)
        assert jr.fd_report["max_rel_err"] <= 1e-6


def test_lambda_column_matches_finite_differences(branch_params, branch_flow):
    field = smooth_field(branch_flow, 3.1)
    jr = jacobian(branch_params, branch_flow, field, fd_check=False)
    dl = 1e-4  # roundoff dominates below this
    fp = discrete_residual(
        branch_params, branch_flow, dataclasses.replace(field, lam=field.lam + dl)
    )
    fm = discrete_residual(
        branch_params, branch_flow, dataclasses.replace(field, lam=field.lam - dl)
    )
    fd = (fp - fm).ravel() / (2.0 * dl)
    denom = max(np.max(np.abs(fd)), 1e-14)
    assert np.max(np.abs(jr.dF_dlam - fd)) / denom < 1e-6


def test_residual_second_order_consistency(branch_params):
    # manufactured (non-solution) height sampled on nested grids: residual
    # differences at shared nodes shrink at second order in the mesh width
    lam = 3.0

    def residual_on(n_p, n_q):
        flow = shoot_depth(branch_params, n_p=n_p)
        q = np.arange(n_q) / n_q
        s = (flow.p_grid - flow.p_grid[0]) / abs(flow.p_grid[0])
        h = 0.02 * np.outer(s**2, np.cos(2.0 * np.pi * q))
        field = HeightField(q_grid=q, p_grid=flow.p_grid, h=h, lam=lam)
        return discrete_residual(branch_params, flow, field)

    r1 = residual_on(32, 16)
    r2 = residual_on(64, 32)
    r3 = residual_on(128, 64)
    # interior row i (1-based) lives at res[i-1]; shared rows: i -> 2i
    i_c = np.arange(4, 28, 3)
    j_c = np.arange(0, 16, 2)
    d12 = r1[np.ix_(i_c - 1, j_c)] - r2[np.ix_(2 * i_c - 1, 2 * j_c)]
    d23 = r2[np.ix_(2 * i_c - 1, 2 * j_c)] - r3[np.ix_(4 * i_c - 1, 4 * j_c)]
    mask = np.abs(d23) > 1e-9
    assert np.count_nonzero(mask) > 20
    ratios = d12[mask] / d23[mask]
    assert 3.0 < np.median(ratios) < 5.0


def test_newton_fixed_lambda_stays_trivial(branch_params, branch_flow):
    field = zero_field(branch_flow, 2.0)
    corrected, lam, rnorm = newton_correct(branch_params, branch_flow, field)
    assert rnorm <= 1e-10
    assert lam == 2.0
    assert np.max(np.abs(corrected.h)) == 0.0


def test_fixed_amplitude_lands_near_critical_wavelength(
    branch_params, branch_flow, branch_disp
):
    wstar = kernel_grid(branch_flow, branch_disp)
    s = 1e-3
    pred = zero_field(branch_flow, branch_disp.lambda_star)
    pred = dataclasses.replace(pred, h=s * wstar)
    corrected, lam, rnorm = newton_correct(
        branch_params, branch_flow, pred, FixedAmplitude(wstar=wstar, s_target=s)
    )
    assert rnorm <= 1e-10
    assert amplitude(corrected, wstar) == pytest.approx(s, abs=1e-12)
    # grid bias of the discrete bifurcation point is below 1e-2 at this
    # resolution; the amplitude offset contributes O(s^2)
    assert abs(lam - branch_disp.lambda_star) < 2e-2


def test_corrupted_predictor_recovers(branch_params, branch_flow, branch_disp):
    wstar = kernel_grid(branch_flow, branch_disp)
    s = 1e-3
    rng = np.random.default_rng(3)
    noise = 0.2 * s * rng.standard_normal(wstar.shape)
    n_q = wstar.shape[1]
    idx = np.minimum(np.arange(n_q), n_q - np.arange(n_q))
    noise = noise[:, idx]  # symmetrize: Newton works on the even subspace
    noise[0] = 0.0
    pred = zero_field(branch_flow, branch_disp.lambda_star)
    pred = dataclasses.replace(pred, h=s * wstar + noise)
    corrected, lam, rnorm = newton_correct(
        branch_params, branch_flow, pred, FixedAmplitude(wstar=wstar, s_target=s)
    )
    assert rnorm <= 1e-10
    assert abs(lam - branch_disp.lambda_star) < 2e-2


def test_branch_run_diagnostics(branch_run):
    assert branch_run.status == "ok"
    for pts, sign in ((branch_run.points_plus, 1.0), (branch_run.points_minus, -1.0)):
        assert len(pts) >= 6  # root + 5 continuation points
        for pt in pts[1:]:
            assert pt.residual_norm <= 1e-10
            assert pt.crest_count == 2
            assert pt.monotone_ok
            assert pt.min_hp_total > 0.0
            assert abs(pt.eta_mean) <= 1e-9
            assert pt.even_defect <= 1e-10
            assert sign * pt.s > 0.0
        s_vals = [abs(pt.s) for pt in pts]
        assert all(b > a for a, b in zip(s_vals, s_vals[1:]))


def test_branch_wave_height_grows(branch_run):
    sups = [pt.eta_sup for pt in branch_run.points_plus]
    assert sups[0] < 1e-12  # H(0) - d roundoff only
    assert all(b > a for a, b in zip(sups, sups[1:]))


def test_continuation_guards(branch_params, branch_flow, branch_disp):
    bad_t = dataclasses.replace(branch_disp, transversality=-1.0)
    with pytest.raises(InvalidStateError):
        continue_branch(branch_params, branch_flow, bad_t, n_steps=1)
    bad_k = dataclasses.replace(
        branch_disp, kernel_collision=True, collision_details={"k": 2}
    )
    with pytest.raises(InvalidStateError):
        continue_branch(branch_params, branch_flow, bad_k, n_steps=1)


def test_profile_diagnostics_trivial(branch_flow):
    diag = profile_diagnostics(zero_field(branch_flow, 1.0), branch_flow)
    assert diag["eta_sup"] < 1e-12
    assert diag["crest_count"] == 0
    assert diag["monotone_ok"]
    assert abs(diag["eta_mean"]) < 1e-12
    assert diag["min_hp_total"] > 0.0


def test_amplitude_projection(branch_flow, branch_disp):
    wstar = kernel_grid(branch_flow, branch_disp)
    field = dataclasses.replace(zero_field(branch_flow, 1.0), h=0.3 * wstar)
    assert amplitude(field, wstar) == pytest.approx(0.3, rel=1e-13)


def test_degenerate_height_rejected(branch_params, branch_flow):
    field = smooth_field(branch_flow, 3.0, amp=5.0)  # drives h_p + H' negative
    assert np.min(total_hp_grid(field, branch_flow)) <= 0.0
    with pytest.raises(InvalidStateError):
        discrete_residual(branch_params, branch_flow, field)


def test_singular_value_helpers():
    d = sp.diags(np.arange(1.0, 21.0)).tocsr()
    sig_min, v = smallest_singular_pair(d)
    assert sig_min == pytest.approx(1.0, rel=1e-8)
    assert abs(v[0]) == pytest.approx(1.0, rel=1e-6)
    assert operator_norm(d) == pytest.approx(20.0, rel=1e-8)


def test_half_jacobian_shape(branch_params, branch_flow):
    field = zero_field(branch_flow, 3.0)
    J = half_jacobian(branch_params, branch_flow, field)
    n_p = len(branch_flow.p_grid) - 1
    n_half = field.n_q // 2 + 1
    assert J.shape == (n_p * n_half, n_p * n_half)
