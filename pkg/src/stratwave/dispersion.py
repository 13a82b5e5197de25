"""Dispersion analysis of the linearized problem.

The linearization of the wave problem around a laminar flow leads, for each
horizontal Fourier mode, to the Sturm-Liouville system

    w' = A' w + a^{-3} z,
    z' = (theta a / lambda^2 - g rho_bar A') w - A' z,        z = a^3 w' - g rho_bar w,

whose coefficients A' = g rho_bar / a^3 and a = 1/H' are continuous even for
rough profiles.  Nontrivial kernel modes correspond to zeros of the endpoint
Wronskian

    W(0; lambda, theta) = sigma theta w1(0) - lambda^2 z1(0),

where (w1, z1) solves the forward IVP with w1(p0) = 0, z1(p0) = a^3(p0).
The largest zero scales exactly as theta(lambda) = C_D lambda^2, which fixes
the critical wavelength lambda* = 2 pi / sqrt(C_D) and the kernel mode
w*(q,p) = w1(p; lambda*, 4 pi^2) cos(2 pi q).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from ._ode import integrate_batch
from .errors import InvalidStateError, IntegratorError, ProfileError
from .laminar import LaminarFlow
from .profiles import PhysicalParameters, check_cthe0

RTOL = 1e-10
ATOL = 1e-11
SCAN_POINTS = 512
CHOPIN_MULT = 100.0
THETA_SAFETY = 4.0
FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class SLTrajectory:
    """Solution samples of the first-order Sturm-Liouville system."""

    p_grid: np.ndarray
    w: np.ndarray
    z: np.ndarray
    wprime: np.ndarray
    direction: str  # "forward-from-p0" | "backward-from-0"


@dataclass(frozen=True)
class DispersionResult:
    lambda_samples: np.ndarray
    theta_of_lambda: np.ndarray
    C_D: float
    lambda_star: float
    w1_profile: SLTrajectory
    transversality: float
    scaling_deviation: float
    root_count: int
    roots_at_hat: tuple
    kernel_collision: bool
    collision_details: tuple


class _FastCubic:
    """Scalar cubic-spline evaluation without scipy call overhead."""

    __slots__ = ("x", "c", "nseg")

    def __init__(self, x, y):
        cs = CubicSpline(np.asarray(x, float), np.asarray(y, float))
        self.x = cs.x
        self.c = cs.c
        self.nseg = len(self.x) - 2

    def __call__(self, p):
        i = np.searchsorted(self.x, p) - 1
        if i < 0:
            i = 0
        elif i > self.nseg:
            i = self.nseg
        dx = p - self.x[i]
        c = self.c
        return ((c[0, i] * dx + c[1, i]) * dx + c[2, i]) * dx + c[3, i]


class _SLCoeffs:
    """Laminar coefficient interpolants shared by all dispersion operations."""

    def __init__(self, flow: LaminarFlow):
        params = flow.params
        self.g = params.g
        self.sigma = params.sigma
        self.hp = _FastCubic(flow.p_grid, flow.Hp)
        self.rho = _FastCubic(flow.p_grid, params.profile.rho_bar(flow.p_grid))
        self.p0 = float(flow.p_grid[0])
        self.a3_p0 = float(flow.a[0] ** 3)
        self.a_min = float(np.min(flow.a))
        self.rho_p0 = float(params.profile.rho_bar(self.p0))


def _coeffs(flow: LaminarFlow) -> _SLCoeffs:
    cached = getattr(flow, "_sl_coeffs", None)
    if cached is None:
        cached = _SLCoeffs(flow)
        object.__setattr__(flow, "_sl_coeffs", cached)
    return cached


def _endpoint_batch(co: _SLCoeffs, lams, thetas, rtol, atol=ATOL):
    """(w1(0), z1(0)) for each (lambda, theta) pair, integrated as one batch."""
    lams = np.atleast_1d(np.asarray(lams, float))
    thetas = np.atleast_1d(np.asarray(thetas, float))
    lams, thetas = np.broadcast_arrays(lams, thetas)
    m = lams.size
    lam2 = lams.astype(float).ravel() ** 2
    th = thetas.astype(float).ravel()
    g = co.g
    hp_eval, rho_eval = co.hp, co.rho

    def rhs(p, y):
        w, z = y
        hp = hp_eval(p)
        rho = rho_eval(p)
        hp3 = hp * hp * hp
        ap = g * rho * hp3
        return np.array([ap * w + hp3 * z, (th / (lam2 * hp) - g * rho * ap) * w - ap * z])

    y0 = np.zeros((2, m))
    y0[1, :] = co.a3_p0
    y = integrate_batch(rhs, co.p0, 0.0, y0, rtol, atol)
    return y[0], y[1]


def _wronskian_batch(co: _SLCoeffs, lams, thetas, rtol=RTOL):
    lams = np.atleast_1d(np.asarray(lams, float))
    thetas = np.atleast_1d(np.asarray(thetas, float))
    lams, thetas = np.broadcast_arrays(lams, thetas)
    w_top, z_top = _endpoint_batch(co, lams, thetas, rtol)
    return co.sigma * thetas.ravel() * w_top - lams.ravel() ** 2 * z_top


def _integrate_trajectory(flow, lam, theta, p_start, p_end, y0, rtol, atol):
    co = _coeffs(flow)
    g = co.g
    lam2 = lam * lam
    hp_eval, rho_eval = co.hp, co.rho

    def rhs(p, y):
        hp = hp_eval(p)
        rho = rho_eval(p)
        hp3 = hp * hp * hp
        ap = g * rho * hp3
        return [
            ap * y[0] + hp3 * y[1],
            (theta / (lam2 * hp) - g * rho * ap) * y[0] - ap * y[1],
        ]

    p_eval = flow.p_grid if p_end > p_start else flow.p_grid[::-1]
    sol = solve_ivp(
        rhs, (p_start, p_end), y0, method="RK45", t_eval=p_eval, rtol=rtol, atol=atol
    )
    if not sol.success:
        raise IntegratorError(f"SL integration failed: {sol.message}")
    w, z = sol.y
    if p_end < p_start:
        w, z = w[::-1], z[::-1]
    p = flow.p_grid
    hp = flow.Hp
    rho = flow.params.profile.rho_bar(p)
    wprime = g * rho * hp**3 * w + hp**3 * z
    return p, w, z, wprime


def integrate_w1(
    flow: LaminarFlow, lam: float, theta: float, rtol: float = RTOL, atol: float = ATOL
) -> SLTrajectory:
    """Forward IVP (SYS1): w(p0) = 0, w'(p0) = 1, i.e. z(p0) = a^3(p0)."""
    co = _coeffs(flow)
    p, w, z, wp = _integrate_trajectory(
        flow, lam, theta, co.p0, 0.0, [0.0, co.a3_p0], rtol, atol
    )
    return SLTrajectory(p_grid=p, w=w, z=z, wprime=wp, direction="forward-from-p0")


def integrate_w2(
    flow: LaminarFlow, lam: float, theta: float, rtol: float = RTOL, atol: float = ATOL
) -> SLTrajectory:
    """Backward IVP (SYS2): w(0) = lambda^2 a^3(0), w'(0) = lambda^2 g rho(0) + sigma theta."""
    co = _coeffs(flow)
    a3_top = float(flow.a[-1] ** 3)
    rho_top = float(flow.params.profile.rho_bar(0.0))
    w0 = lam**2 * a3_top
    wp0 = lam**2 * co.g * rho_top + co.sigma * theta
    z0 = a3_top * wp0 - co.g * rho_top * w0  # = sigma theta a^3(0)
    p, w, z, wp = _integrate_trajectory(flow, lam, theta, 0.0, co.p0, [w0, z0], rtol, atol)
    return SLTrajectory(p_grid=p, w=w, z=z, wprime=wp, direction="backward-from-0")


def wronskian_at_top(flow: LaminarFlow, lam: float, theta: float, rtol: float = RTOL) -> float:
    """W(0; lambda, theta) = sigma theta w1(0) - lambda^2 z1(0)."""
    co = _coeffs(flow)
    return float(_wronskian_batch(co, lam, theta, rtol)[0])


def _multisect(co, lam, lo, hi, rtol, target, m=129):
    """Shrink [lo, hi] around the largest sign change of W(0; lam, .).

    Endpoints are re-evaluated at the working tolerance each round, so a
    bracket inherited from a looser pass self-corrects as long as the true
    root lies inside.
    """
    while hi - lo > target * hi:
        pts = np.linspace(lo, hi, m)
        vals = _wronskian_batch(co, lam, pts, rtol)
        signs = np.sign(vals)
        flips = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
        if len(flips) == 0:
            break
        j = flips[-1]
        lo, hi = pts[j], pts[j + 1]
    return lo, hi


def _refine_root(co, lam, lo, hi, rel_tol):
    """Refine a sign-change bracket of W(0; lam, .) to relative rel_tol.

    A loose-tolerance pass does the bulk of the shrinking cheaply.  Near the
    root |W| falls below the loose integration noise and the loose bracket
    can drift by noise/W_theta, so it is re-widened before the tight pass.
    """
    lo, hi = _multisect(co, lam, lo, hi, 1e-6, 1e-5)
    pad = 20.0 * (hi - lo)
    lo, hi = _multisect(co, lam, max(lo - pad, 0.0), hi + pad, RTOL, rel_tol)
    return 0.5 * (lo + hi)


def largest_root_theta(
    flow: LaminarFlow,
    lam: float,
    *,
    scan_points: int = SCAN_POINTS,
    chopin_mult: float = CHOPIN_MULT,
    safety: float = THETA_SAFETY,
    max_doublings: int = 6,
    rel_tol: float = 1e-10,
    full_output: bool = False,
):
    """Largest theta with W(0; lambda, theta) = 0, by scan plus multisection.

    The scan covers [0, theta_hi] with a combined linear and logarithmic
    point set; theta_hi starts at lambda^2 times 100x the coefficient bound
    g^2 rho(p0)^2 / min(a)^4 (or a 16 pi^2 safety floor) and doubles while
    W(theta_hi) <= 0.
    """
    if not check_cthe0(flow)["holds"]:
        raise InvalidStateError("non-degeneracy condition e^{2A(0)}-2A(0)<=5 fails")
    co = _coeffs(flow)
    theta_hi = lam**2 * max(
        chopin_mult * co.g**2 * co.rho_p0**2 / co.a_min**4,
        16.0 * math.pi**2 * safety,
    )
    for _ in range(max_doublings):
        if _wronskian_batch(co, lam, theta_hi, rtol=1e-6)[0] > 0.0:
            break
        theta_hi *= 2.0
    n_half = scan_points // 2
    thetas = np.unique(
        np.concatenate(
            [
                [0.0],
                np.linspace(0.0, theta_hi, n_half + 1)[1:],
                np.geomspace(theta_hi * 1e-6, theta_hi, n_half),
            ]
        )
    )
    vals = _wronskian_batch(co, lam, thetas, rtol=1e-6)
    signs = np.sign(vals)
    flips = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    if len(flips) == 0:
        raise InvalidStateError(
            "no Wronskian sign change found: contradicts W(0;lambda,0)<0 and W->+inf"
        )
    roots = tuple(
        _refine_root(co, lam, thetas[i], thetas[i + 1], rel_tol) for i in flips
    )
    if full_output:
        return roots[-1], {"roots": roots, "root_count": len(roots), "theta_hi": theta_hi}
    return roots[-1]


def wronskian_gradients(
    flow: LaminarFlow,
    lam: float,
    theta: float,
    rel_step: float = FD_REL_STEP,
    richardson: bool = False,
):
    """Central finite-difference (W_lambda, W_theta) at (lam, theta)."""
    co = _coeffs(flow)

    def grads(h_rel):
        dl = h_rel * lam
        dt = h_rel * theta
        lams = np.array([lam + dl, lam - dl, lam, lam])
        ths = np.array([theta, theta, theta + dt, theta - dt])
        w = _wronskian_batch(co, lams, ths)
        return (w[0] - w[1]) / (2 * dl), (w[2] - w[3]) / (2 * dt)

    wl, wt = grads(rel_step)
    if richardson:
        wl2, wt2 = grads(rel_step / 2.0)
        wl = (4 * wl2 - wl) / 3.0
        wt = (4 * wt2 - wt) / 3.0
    return wl, wt


def wronskian_identity_check(
    flow: LaminarFlow, lam: float, theta_root: float, rel_step: float = FD_REL_STEP
) -> dict:
    """Check the identity W_theta / W_lambda = -lambda / (2 theta) at a root."""
    w_lam, w_th = wronskian_gradients(flow, lam, theta_root, rel_step)
    w1_top, _ = _endpoint_batch(_coeffs(flow), lam, theta_root, RTOL)
    scale = abs(w_th) + abs(w_lam)
    indeterminate = abs(w_lam) <= 1e-12 * scale
    ratio = w_th / w_lam if not indeterminate else math.nan
    expected = -lam / (2.0 * theta_root)
    return {
        "ratio": ratio,
        "expected": expected,
        "rel_err": abs(ratio - expected) / abs(expected) if not indeterminate else math.inf,
        "w1_top_times_w_lambda": float(w1_top[0]) * w_lam,
        "w_theta": w_th,
        "indeterminate": indeterminate,
    }


def transversality_value(
    flow: LaminarFlow, lambda_star: float, w1_profile: SLTrajectory
) -> float:
    """Transversality integral (1/2) int [(w1')^2/H'^3 - g rho (w1^2)'] dp.

    The second term is integrated by parts: the integral of g rho (w1^2)'
    equals g rho(0) w1(0)^2 minus the Stieltjes sum of w1^2 against the
    rho_bar increments, so no derivative of rho_bar is needed.  The smooth
    (w1')^2 term uses Simpson; at the default grid the trapezoid bias on the
    exponentially growing integrand would dominate the value.
    """
    p = w1_profile.p_grid
    w = w1_profile.w
    a3 = flow.a**3
    rho = flow.params.profile.rho_bar(p)
    i1 = float(simpson(w1_profile.wprime**2 * a3, x=p))
    w2 = w**2
    stieltjes = float(np.sum(0.5 * (w2[:-1] + w2[1:]) * np.diff(rho)))
    boundary = float(rho[-1]) * float(w[-1]) ** 2
    g = flow.params.g
    return 0.5 * (i1 - g * (boundary - stieltjes))


def check_w0_nondegenerate(flow: LaminarFlow) -> dict:
    """Integrate the theta = 0 system; non-degeneracy means w0(0) != 0."""
    traj = integrate_w1(flow, 1.0, 0.0)
    w_top = float(traj.w[-1])
    sup = float(np.max(np.abs(traj.w)))
    return {
        "holds": abs(w_top) > 1e-8 * sup,
        "w0_at_top": w_top,
        "z0_min": float(np.min(traj.z)),
    }


def analytic_dispersion(params: PhysicalParameters) -> float:
    """C_D for constant density, beta = 0, from the explicit dispersion relation.

    Solves f(x) = (g rho + sigma x^2) tanh(d x)/x - p0^2/d^2 = 0 for the
    unique positive root x and returns C_D = x^2.
    """
    prof = params.profile
    p = prof.sample_grid(64)
    rho_vals = prof.rho_bar(p)
    if np.ptp(rho_vals) > 1e-12 * rho_vals[0]:
        raise ProfileError("analytic dispersion requires constant density")
    if np.max(np.abs(prof.bernoulli_primitive(p))) > 1e-12:
        raise ProfileError("analytic dispersion requires beta = 0")
    g, d, sigma = params.g, params.d, params.sigma
    rho = float(rho_vals[0])
    flux = prof.p0**2 / d**2

    def f(x):
        if x == 0.0:
            return g * rho * d - flux
        return (g * rho + sigma * x * x) * math.tanh(d * x) / x - flux

    if f(0.0) >= 0.0:
        raise ProfileError("f(0) = g rho d - p0^2/d^2 must be negative")
    x_hi = 1.0
    while f(x_hi) <= 0.0:
        x_hi *= 2.0
        if x_hi > 1e12:
            raise InvalidStateError("no dispersion root found below 1e12")
    root = brentq(f, 0.0, x_hi, xtol=1e-15, rtol=1e-15)
    return float(root) ** 2


def dispersion_constant(
    flow: LaminarFlow, lambda_hat: float = 1.0, k_collision_max: int = 8
) -> DispersionResult:
    """Full dispersion analysis: C_D, lambda*, kernel profile, transversality."""
    lams = np.array([0.5 * lambda_hat, lambda_hat, 2.0 * lambda_hat])
    thetas = []
    info_hat = None
    for lam in lams:
        root, info = largest_root_theta(flow, lam, full_output=True)
        thetas.append(root)
        if lam == lambda_hat:
            info_hat = info
    thetas = np.array(thetas)
    ratios = thetas / lams**2
    c_d = float(ratios[1])
    scaling_deviation = float((np.max(ratios) - np.min(ratios)) / c_d)
    if scaling_deviation > 1e-5:
        warnings.warn(
            f"theta(lambda)/lambda^2 spread {scaling_deviation:.2e} exceeds 1e-5; "
            "integrator accuracy suspect (the scaling law is exact)",
            stacklevel=2,
        )
    lambda_star = 2.0 * math.pi / math.sqrt(c_d)
    four_pi2 = 4.0 * math.pi**2
    w1_profile = integrate_w1(flow, lambda_star, four_pi2)
    transversality = transversality_value(flow, lambda_star, w1_profile)
    # kernel-collision diagnostic: a secondary root theta_i(lambda*) must not
    # coincide with a higher-mode value (2 k pi)^2, k = 2..K
    collisions = []
    roots_at_star = [r / lambda_hat**2 * lambda_star**2 for r in info_hat["roots"]]
    for r in roots_at_star:
        for k in range(2, k_collision_max + 1):
            target = (2.0 * math.pi * k) ** 2
            if abs(r - target) <= 1e-6 * target:
                collisions.append((float(r), k))
    return DispersionResult(
        lambda_samples=lams,
        theta_of_lambda=thetas,
        C_D=c_d,
        lambda_star=lambda_star,
        w1_profile=w1_profile,
        transversality=transversality,
        scaling_deviation=scaling_deviation,
        root_count=info_hat["root_count"],
        roots_at_hat=info_hat["roots"],
        kernel_collision=bool(collisions),
        collision_details=tuple(collisions),
    )


class KernelMode:
    """Separable kernel mode w*(q, p) = w1(p) cos(2 pi q)."""

    def __init__(self, w1_profile: SLTrajectory):
        self._spline = CubicSpline(w1_profile.p_grid, w1_profile.w)

    def w1(self, p):
        return self._spline(p)

    def __call__(self, q, p):
        return self._spline(p) * np.cos(2.0 * np.pi * np.asarray(q, dtype=float))


def kernel_mode(
    flow: LaminarFlow, lambda_star: float, w1_profile: SLTrajectory | None = None
) -> KernelMode:
    """Kernel mode at the critical wavelength, normalized by w1'(p0) = 1."""
    if w1_profile is None:
        w1_profile = integrate_w1(flow, lambda_star, 4.0 * math.pi**2)
    return KernelMode(w1_profile)
