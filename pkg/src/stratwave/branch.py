"""Nonlinear height-function solver and bifurcation-branch continuation.

The unknown is the perturbation h(q,p) of the laminar height H(p) on the
scaled rectangle Omega = (0,1) x (p0,0).  The interior equation is the
divergence form

    (h_q/h_p)_q - ((lam^2+h_q^2)/(2 h_p^2) + lam^2 B + lam^2 g rho (h-d))_p
        + lam^2 g rho h_p = 0

for the total field; subtracting the laminar p-flux analytically (the
laminar solver satisfies the flux identity exactly, see `laminar`) leaves a
residual in perturbation quantities only, so F(lambda, 0) = 0 holds on the
grid to machine precision for every lambda.  The top boundary condition is
the nonlocal Dirichlet form

    h = (1-d_qq)^{-1} tr0[ h - K(h) (E(h) + 2 lam^2 g rho(0) h - mean_q E) ],

with K = (lam^2+h_q^2)^{3/2} / (2 sigma lam^3) and E = (lam^2+h_q^2)/h_p^2,
realized with spectral q-derivatives and the Fourier multiplier
1/(1+(2 pi k)^2).

Discretization: conservative second-order finite volumes in the interior
(robust to rough rho_bar and B), Fourier on the smooth periodic top row.
Even symmetry h(q,p) = h(1-q,p) is imposed by solving on the half-period
column set, which also pins the horizontal translation invariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve

from .dispersion import DispersionResult, kernel_mode
from .errors import ConvergenceError, InvalidStateError
from .laminar import LaminarFlow
from .profiles import PhysicalParameters

DEFAULT_NQ = 64
DEFAULT_NP = 128
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 25
NEWTON_MAX_HALVINGS = 8
FD_CHECK_DIRECTIONS = 10
FD_CHECK_TOL = 1e-6


@dataclass(frozen=True)
class HeightField:
    """Perturbation height on the periodic grid.

    h has shape (N_p+1, N_q): row 0 is the bottom p = p0 (identically 0 by
    the Dirichlet condition), row N_p the surface p = 0; columns are the
    uniform periodic q-grid j/N_q.
    """

    q_grid: np.ndarray
    p_grid: np.ndarray
    h: np.ndarray
    lam: float

    @property
    def n_q(self):
        return self.h.shape[1]

    @property
    def n_p(self):
        return self.h.shape[0] - 1


@dataclass(frozen=True)
class ContinuationPoint:
    lam: float
    s: float
    field: HeightField
    residual_norm: float
    min_hp_total: float
    eta_mean: float
    crest_count: int
    even_defect: float = 0.0
    monotone_ok: bool = True
    eta_sup: float = 0.0


@dataclass(frozen=True)
class BranchResult:
    points_plus: tuple
    points_minus: tuple
    lambda_star: float
    status: str


def zero_field(flow: LaminarFlow, lam: float, n_q: int = DEFAULT_NQ) -> HeightField:
    q = np.arange(n_q) / n_q
    h = np.zeros((len(flow.p_grid), n_q))
    return HeightField(q_grid=q, p_grid=flow.p_grid, h=h, lam=lam)


def _spectral_dq_matrix(n: int) -> np.ndarray:
    k = np.fft.rfftfreq(n, d=1.0 / n)  # integer wavenumbers 0..n/2
    mult = 2.0j * np.pi * k
    mult[-1] = 0.0  # odd Nyquist derivative has no real even-grid image
    return np.fft.irfft(mult[:, None] * np.fft.rfft(np.eye(n), axis=0), n=n, axis=0)


def _ih_matrix(n: int) -> np.ndarray:
    k = np.fft.rfftfreq(n, d=1.0 / n)
    mult = 1.0 / (1.0 + (2.0 * np.pi * k) ** 2)
    return np.fft.irfft(mult[:, None] * np.fft.rfft(np.eye(n), axis=0), n=n, axis=0)


def inverse_helmholtz_top(row: np.ndarray) -> np.ndarray:
    """Apply (1 - d_qq)^{-1} on 1-periodic samples via the Fourier multiplier.

    Mode k is scaled by 1/(1+(2 pi k)^2); the mean (k = 0) is preserved
    exactly.
    """
    row = np.asarray(row, dtype=float)
    k = np.fft.rfftfreq(len(row), d=1.0 / len(row))
    return np.fft.irfft(np.fft.rfft(row) / (1.0 + (2.0 * np.pi * k) ** 2), n=len(row))


class _Discretization:
    """Grid quantities shared by residual and Jacobian evaluation."""

    def __init__(self, params: PhysicalParameters, flow: LaminarFlow, n_q: int):
        p = flow.p_grid
        dps = np.diff(p)
        if not np.allclose(dps, dps[0], rtol=1e-12, atol=0.0):
            raise InvalidStateError("branch solver requires a uniform p-grid")
        if n_q % 2 != 0:
            raise InvalidStateError("N_q must be even")
        self.n_p = len(p) - 1
        self.n_q = n_q
        self.dp = float(dps[0])
        self.dq = 1.0 / n_q
        self.g = params.g
        self.sigma = params.sigma
        prof = params.profile
        self.rho = prof.rho_bar(p)
        self.rho_half = prof.rho_bar(p[:-1] + 0.5 * self.dp)
        self.rho_top = float(prof.rho_bar(0.0))
        self.Hp = flow.Hp
        self.Hp_half = np.diff(flow.H) / self.dp
        self.Dq = _spectral_dq_matrix(n_q)
        self.IH = _ih_matrix(n_q)
        # half-period even extension: full column j maps to min(j, n_q - j)
        n_half = n_q // 2 + 1
        ext = np.zeros((n_q, n_half))
        for j in range(n_q):
            ext[j, min(j, n_q - j)] = 1.0
        self.extend = sp.csr_matrix(ext)
        self.n_half = n_half


def _disc(params, flow, n_q) -> _Discretization:
    cached = getattr(flow, "_branch_disc", None)
    if cached is None or cached.n_q != n_q:
        cached = _Discretization(params, flow, n_q)
        object.__setattr__(flow, "_branch_disc", cached)
    return cached


def total_hp_grid(field: HeightField, flow: LaminarFlow) -> np.ndarray:
    """Nodal h_p + H' (one-sided second order at the p-endpoints)."""
    h = field.h
    dp = float(field.p_grid[1] - field.p_grid[0])
    hp = np.empty_like(h)
    hp[1:-1] = (h[2:] - h[:-2]) / (2.0 * dp)
    hp[0] = (-3.0 * h[0] + 4.0 * h[1] - h[2]) / (2.0 * dp)
    hp[-1] = (3.0 * h[-1] - 4.0 * h[-2] + h[-3]) / (2.0 * dp)
    return hp + flow.Hp[:, None]


def _surface_terms(disc, h, lam):
    c = h[-1]
    hqt = disc.Dq @ c
    hpt = disc.Hp[-1] + (3.0 * c - 4.0 * h[-2] + h[-3]) / (2.0 * disc.dp)
    if np.any(hpt <= 0.0):
        raise InvalidStateError("surface h_p + H' <= 0: outside the elliptic regime")
    lam2 = lam * lam
    w2 = lam2 + hqt**2
    K = w2**1.5 / (2.0 * disc.sigma * lam**3)
    E = w2 / hpt**2
    return c, hqt, hpt, w2, K, E


def discrete_residual(
    params: PhysicalParameters, flow: LaminarFlow, field: HeightField
) -> np.ndarray:
    """Residual of the discrete problem, shape (N_p, N_q).

    Rows 0..N_p-2 are the interior finite-volume balances at p-levels
    1..N_p-1; row N_p-1 is the nonlocal top boundary condition.  The laminar
    p-flux is subtracted analytically, so the zero field gives an exactly
    zero residual at every lambda.
    """
    disc = _disc(params, flow, field.n_q)
    h = field.h
    lam = field.lam
    lam2 = lam * lam
    dp, dq, g = disc.dp, disc.dq, disc.g

    hp_tot = total_hp_grid(field, flow)
    if np.any(hp_tot <= 0.0):
        raise InvalidStateError("h_p + H' <= 0: outside the elliptic regime")

    # q-fluxes h_q/h_p at (i, j+1/2), interior rows i = 1..N_p-1
    hp_c = (h[2:] - h[:-2]) / (2.0 * dp)  # rows 1..N_p-1
    T = disc.Hp[1:-1, None] + 0.5 * (hp_c + np.roll(hp_c, -1, axis=1))
    if np.any(T <= 0.0):
        raise InvalidStateError("h_p + H' <= 0 at a q-flux point")
    hq_u = (np.roll(h[1:-1], -1, axis=1) - h[1:-1]) / dq
    U = hq_u / T
    div_q = (U - np.roll(U, 1, axis=1)) / dq

    # perturbation p-fluxes at levels (i+1/2, j), i = 0..N_p-1
    t = disc.Hp_half[:, None] + (h[1:] - h[:-1]) / dp
    if np.any(t <= 0.0):
        raise InvalidStateError("h_p + H' <= 0 at a p-flux point")
    hq_all = (np.roll(h, -1, axis=1) - np.roll(h, 1, axis=1)) / (4.0 * dq)
    hq_g = hq_all[:-1] + hq_all[1:]
    hbar = 0.5 * (h[1:] + h[:-1])
    G = (
        (lam2 + hq_g**2) / (2.0 * t**2)
        - lam2 / (2.0 * disc.Hp_half[:, None] ** 2)
        + lam2 * g * disc.rho_half[:, None] * hbar
    )
    div_p = (G[1:] - G[:-1]) / dp

    interior = div_q - div_p + lam2 * g * disc.rho[1:-1, None] * hp_c

    c, hqt, hpt, w2, K, E = _surface_terms(disc, h, lam)
    e_bar = float(np.mean(E))
    inner = c - K * (E + 2.0 * lam2 * g * disc.rho_top * c - e_bar)
    top = c - disc.IH @ inner

    return np.vstack([interior, top[None, :]])


@dataclass(frozen=True)
class JacobianResult:
    J: sp.csr_matrix
    dF_dlam: np.ndarray
    fd_report: dict = dc_field(default_factory=dict)


def _assemble_jacobian(disc, h, lam):
    n_p, n_q = disc.n_p, disc.n_q
    dp, dq, g = disc.dp, disc.dq, disc.g
    lam2 = lam * lam

    rows, cols, vals = [], [], []

    def add(r_i, r_j, c_i, c_j, w):
        """Entry d(eq at p-row r_i, col r_j)/d(h at p-row c_i, col c_j)."""
        keep = (c_i >= 1) & (c_i <= n_p)
        rows.append(((r_i - 1) * n_q + r_j)[keep])
        cols.append(((c_i - 1) * n_q + c_j)[keep])
        vals.append(w[keep])

    jj = np.arange(n_q)
    jp1 = (jj + 1) % n_q
    jm1 = (jj - 1) % n_q

    # --- q-flux U(i, j+1/2), i = 1..N_p-1 ---
    hp_c = (h[2:] - h[:-2]) / (2.0 * dp)
    T = disc.Hp[1:-1, None] + 0.5 * (hp_c + np.roll(hp_c, -1, axis=1))
    hq_u = (np.roll(h[1:-1], -1, axis=1) - h[1:-1]) / dq
    invT = 1.0 / T
    coefT = -hq_u / T**2

    ii = np.arange(1, n_p)
    I, J = np.meshgrid(ii, jj, indexing="ij")
    Jp1 = np.meshgrid(ii, jp1, indexing="ij")[1]

    # flux (i, j+1/2) feeds eq (i, j) with +1/dq and eq (i, j+1) with -1/dq
    for eq_j, sgn in ((J, 1.0 / dq), (Jp1, -1.0 / dq)):
        add(I, eq_j, I, J, sgn * (-invT / dq))
        add(I, eq_j, I, Jp1, sgn * (invT / dq))
        for di, s_i in ((1, 1.0), (-1, -1.0)):
            w = sgn * s_i * coefT / (4.0 * dp)
            add(I, eq_j, I + di, J, w)
            add(I, eq_j, I + di, Jp1, w)

    # --- p-flux G(i+1/2, j), i = 0..N_p-1 ---
    t = disc.Hp_half[:, None] + (h[1:] - h[:-1]) / dp
    hq_all = (np.roll(h, -1, axis=1) - np.roll(h, 1, axis=1)) / (4.0 * dq)
    hq_g = hq_all[:-1] + hq_all[1:]
    dG_dt = -(lam2 + hq_g**2) / t**3
    dG_dhq = hq_g / t**2
    dG_dhbar = lam2 * g * disc.rho_half[:, None] * np.ones_like(t)

    ii = np.arange(n_p)  # half-level index
    I, J = np.meshgrid(ii, jj, indexing="ij")
    Jp1 = np.meshgrid(ii, jp1, indexing="ij")[1]
    Jm1 = np.meshgrid(ii, jm1, indexing="ij")[1]

    # flux at level i+1/2 feeds eq (i, j) with -1/dp (i >= 1) and eq (i+1, j)
    # with +1/dp (i+1 <= N_p-1)
    for eq_i, sgn, keep in (
        (I, -1.0 / dp, ii >= 1),
        (I + 1, 1.0 / dp, ii + 1 <= n_p - 1),
    ):
        sel = np.repeat(keep, n_q).reshape(n_p, n_q)

        def addf(c_i, c_j, w, eq_i=eq_i, sgn=sgn, sel=sel):
            add(eq_i[sel], J[sel], c_i[sel], c_j[sel], sgn * w[sel])

        addf(I, J, -dG_dt / dp + 0.5 * dG_dhbar)
        addf(I + 1, J, dG_dt / dp + 0.5 * dG_dhbar)
        addf(I, Jp1, dG_dhq / (4.0 * dq))
        addf(I + 1, Jp1, dG_dhq / (4.0 * dq))
        addf(I, Jm1, -dG_dhq / (4.0 * dq))
        addf(I + 1, Jm1, -dG_dhq / (4.0 * dq))

    # --- centered lam^2 g rho h_p term, eq rows i = 1..N_p-1 ---
    ii = np.arange(1, n_p)
    I, J = np.meshgrid(ii, jj, indexing="ij")
    cp = lam2 * g * disc.rho[1:-1, None] * np.ones((n_p - 1, n_q))
    add(I, J, I + 1, J, cp / (2.0 * dp))
    add(I, J, I - 1, J, -cp / (2.0 * dp))

    # --- top boundary rows ---
    c, hqt, hpt, w2, K, E = _surface_terms(disc, h, lam)
    e_bar = float(np.mean(E))
    a_top = lam2 * g * disc.rho_top
    bracket = E + 2.0 * a_top * c - e_bar
    Kp = 3.0 * hqt * np.sqrt(w2) / (2.0 * disc.sigma * lam**3)
    dE_dhq = 2.0 * hqt / hpt**2
    dE_dhp = -2.0 * w2 / hpt**3

    def inner_block(dhq_mat, dhp_fac, direct):
        """d(inner)/d(row): hq varies by dhq_mat, hpt by dhp_fac*I."""
        blk = np.zeros((n_q, n_q))
        if direct:
            blk += np.eye(n_q)
        dE = dE_dhq[:, None] * dhq_mat + np.diag(dE_dhp * dhp_fac)
        blk -= (Kp * bracket)[:, None] * dhq_mat
        blk -= K[:, None] * (dE - np.mean(dE, axis=0))
        if direct:
            blk -= np.diag(K * 2.0 * a_top)
        return blk

    zero = np.zeros((n_q, n_q))
    blk_c = np.eye(n_q) - disc.IH @ inner_block(disc.Dq, 3.0 / (2.0 * dp), True)
    blk_m1 = -disc.IH @ inner_block(zero, -4.0 / (2.0 * dp), False)
    blk_m2 = -disc.IH @ inner_block(zero, 1.0 / (2.0 * dp), False)

    r_top = (n_p - 1) * n_q
    for blk, c_row in ((blk_c, n_p), (blk_m1, n_p - 1), (blk_m2, n_p - 2)):
        R, C = np.meshgrid(np.arange(n_q), np.arange(n_q), indexing="ij")
        rows.append((r_top + R).ravel())
        cols.append(((c_row - 1) * n_q + C).ravel())
        vals.append(blk.ravel())

    n_dof = n_p * n_q
    J_mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_dof, n_dof),
    )

    # --- lambda column ---
    dG_dlam = lam / t**2 - lam / disc.Hp_half[:, None] ** 2 + 2.0 * lam * g * disc.rho_half[
        :, None
    ] * 0.5 * (h[1:] + h[:-1])
    hp_c = (h[2:] - h[:-2]) / (2.0 * dp)
    dR_dlam = -(dG_dlam[1:] - dG_dlam[:-1]) / dp + 2.0 * lam * g * disc.rho[1:-1, None] * hp_c
    dK_dlam = -3.0 * hqt**2 * np.sqrt(w2) / (2.0 * disc.sigma * lam**4)
    dE_dlam = 2.0 * lam / hpt**2
    dbr_dlam = dE_dlam + 4.0 * lam * g * disc.rho_top * c - float(np.mean(dE_dlam))
    dtop_dlam = disc.IH @ (dK_dlam * bracket + K * dbr_dlam)
    dF_dlam = np.concatenate([dR_dlam.ravel(), dtop_dlam])
    return J_mat, dF_dlam


def jacobian(
    params: PhysicalParameters,
    flow: LaminarFlow,
    field: HeightField,
    fd_check: bool = True,
    seed: int = 0,
) -> JacobianResult:
    """Analytic sparse Jacobian of discrete_residual in h plus the lambda column.

    With fd_check, compares the action on random directions against central
    finite differences; a max relative error above 1e-6 signals an
    implementation bug and raises.
    """
    disc = _disc(params, flow, field.n_q)
    J_mat, dF_dlam = _assemble_jacobian(disc, field.h, field.lam)
    report = {}
    if fd_check:
        rng = np.random.default_rng(seed)
        scale = max(1.0, float(np.max(np.abs(field.h))))
        errs = []
        for _ in range(FD_CHECK_DIRECTIONS):
            v = rng.standard_normal((disc.n_p, disc.n_q))
            v /= np.max(np.abs(v))
            delta = 1e-6 * scale
            hp = field.h.copy()
            hm = field.h.copy()
            hp[1:] += delta * v
            hm[1:] -= delta * v
            fp = discrete_residual(params, flow, replace(field, h=hp))
            fm = discrete_residual(params, flow, replace(field, h=hm))
            fd = (fp - fm).ravel() / (2.0 * delta)
            an = J_mat @ v.ravel()
            denom = max(float(np.max(np.abs(fd))), 1e-14)
            errs.append(float(np.max(np.abs(an - fd))) / denom)
        report = {"max_rel_err": max(errs), "per_direction": errs, "tol": FD_CHECK_TOL}
        if report["max_rel_err"] > FD_CHECK_TOL:
            raise InvalidStateError(
                f"Jacobian/finite-difference mismatch {report['max_rel_err']:.3e}"
            )
    return JacobianResult(J=J_mat, dF_dlam=dF_dlam, fd_report=report)


def _half_operator(disc, J_mat):
    """Restrict the full-grid Jacobian to the even (half-period) subspace."""
    n_p, n_q, n_half = disc.n_p, disc.n_q, disc.n_half
    ext = sp.kron(sp.eye(n_p), disc.extend, format="csr")
    sel = np.concatenate(
        [i * n_q + np.arange(n_half) for i in range(n_p)]
    )
    return (J_mat @ ext)[sel], ext, sel


@dataclass(frozen=True)
class FixedLambda:
    pass


@dataclass(frozen=True)
class Arclength:
    h_prev: np.ndarray  # full-grid previous perturbation, shape (N_p+1, N_q)
    lam_prev: float
    tangent_h: np.ndarray  # full grid, shape (N_p+1, N_q)
    tangent_lam: float
    ds: float


@dataclass(frozen=True)
class FixedAmplitude:
    wstar: np.ndarray  # full grid, shape (N_p+1, N_q)
    s_target: float


def amplitude(field: HeightField, wstar: np.ndarray) -> float:
    """Projection coordinate s = <h, w*> / <w*, w*> (discrete L2 pairing)."""
    return float(np.sum(field.h * wstar) / np.sum(wstar * wstar))


def _constraint_value(constraint, h, lam):
    if isinstance(constraint, Arclength):
        return (
            float(np.sum((h - constraint.h_prev) * constraint.tangent_h))
            + (lam - constraint.lam_prev) * constraint.tangent_lam
            - constraint.ds
        )
    if isinstance(constraint, FixedAmplitude):
        wstar = constraint.wstar
        return float(np.sum(h * wstar) / np.sum(wstar * wstar)) - constraint.s_target
    return 0.0


def newton_correct(
    params: PhysicalParameters,
    flow: LaminarFlow,
    field: HeightField,
    constraint=FixedLambda(),
    tol: float = NEWTON_TOL,
    max_iter: int = NEWTON_MAX_ITER,
) -> tuple:
    """Damped Newton on the even subspace; returns (field, lam, residual_norm).

    With FixedLambda the wavelength is frozen; Arclength and FixedAmplitude
    append the constraint row and free lambda (bordered solve).
    """
    disc = _disc(params, flow, field.n_q)
    n_p, n_q, n_half = disc.n_p, disc.n_q, disc.n_half
    h = field.h.copy()
    h[0] = 0.0
    lam = field.lam
    lam_free = not isinstance(constraint, FixedLambda)

    def full_residual(h_arr, lam_val):
        f = discrete_residual(params, flow, replace(field, h=h_arr, lam=lam_val))
        cval = _constraint_value(constraint, h_arr, lam_val) if lam_free else 0.0
        return f, cval, max(float(np.max(np.abs(f))), abs(cval))

    f, cval, rnorm = full_residual(h, lam)
    for _ in range(max_iter):
        if rnorm <= tol:
            return replace(field, h=h, lam=lam), lam, rnorm
        disc_j = _assemble_jacobian(disc, h, lam)
        J_half, ext, sel = _half_operator(disc, disc_j[0])
        f_half = f.ravel()[sel]
        if lam_free:
            b = disc_j[1][sel]
            if isinstance(constraint, Arclength):
                grad_full = constraint.tangent_h[1:].ravel()
                c_lam = constraint.tangent_lam
            else:
                wstar = constraint.wstar
                grad_full = (wstar[1:] / np.sum(wstar * wstar)).ravel()
                c_lam = 0.0
            c_half = ext.T @ grad_full
            A = sp.bmat(
                [
                    [J_half, b[:, None]],
                    [sp.csr_matrix(c_half[None, :]), np.array([[c_lam]])],
                ],
                format="csc",
            )
            rhs = np.concatenate([f_half, [cval]])
            try:
                step = splu(A).solve(-rhs)
            except RuntimeError as exc:
                raise ConvergenceError(f"bordered solve failed: {exc}") from exc
            du_half, dlam = step[:-1], step[-1]
        else:
            try:
                du_half = spsolve(J_half.tocsc(), -f_half)
            except RuntimeError as exc:
                raise ConvergenceError(f"Newton solve failed: {exc}") from exc
            dlam = 0.0
        du_full = (ext @ du_half).reshape(n_p, n_q)
        alpha = 1.0
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            h_try = h.copy()
            h_try[1:] = h[1:] + alpha * du_full
            lam_try = lam + alpha * dlam
            if lam_try <= 0.0:
                alpha *= 0.5
                continue
            try:
                f_try, c_try, r_try = full_residual(h_try, lam_try)
            except InvalidStateError:
                alpha *= 0.5
                continue
            if r_try < rnorm or rnorm <= tol * 10.0:
                h, lam, f, cval, rnorm = h_try, lam_try, f_try, c_try, r_try
                break
            alpha *= 0.5
        else:
            raise ConvergenceError("Newton damping failed (8 halvings)")
    if rnorm <= tol:
        return replace(field, h=h, lam=lam), lam, rnorm
    raise ConvergenceError(f"Newton did not converge: residual {rnorm:.3e}")


def profile_diagnostics(field: HeightField, flow: LaminarFlow) -> dict:
    """Wave-shape diagnostics of the surface profile eta(q)."""
    params = flow.params
    eta = field.h[-1] + flow.H[-1] - params.d
    n_q = len(eta)
    eta_mean = float(np.mean(eta))
    even_defect = float(
        np.max(np.abs(eta - eta[(-np.arange(n_q)) % n_q]))
    )
    d_eta = np.roll(eta, -1) - eta
    tol = 1e-10
    nz = d_eta[np.abs(d_eta) > tol]
    if len(nz) == 0:
        crest_count = 0
        monotone_ok = True
    else:
        s = np.sign(nz)
        crest_count = int(np.sum(s != np.roll(s, 1)))
        # strict monotonicity between extrema: at most the two near-extremal
        # increments may fall below the grid tolerance
        monotone_ok = crest_count == 2 and len(nz) >= n_q - 4
    hp_tot = total_hp_grid(field, flow)
    return {
        "eta_mean": eta_mean,
        "even_defect": even_defect,
        "crest_count": crest_count,
        "monotone_ok": monotone_ok,
        "min_hp_total": float(np.min(hp_tot)),
        "eta_sup": float(np.max(np.abs(eta))),
    }


def kernel_grid(
    flow: LaminarFlow, disp: DispersionResult, n_q: int = DEFAULT_NQ
) -> np.ndarray:
    """Grid samples of the kernel mode w*(q,p) on the branch grid."""
    mode = kernel_mode(flow, disp.lambda_star, disp.w1_profile)
    q = np.arange(n_q) / n_q
    return mode.w1(flow.p_grid)[:, None] * np.cos(2.0 * np.pi * q)[None, :]


def _make_point(field, flow, rnorm, wstar):
    diag = profile_diagnostics(field, flow)
    return ContinuationPoint(
        lam=field.lam,
        s=amplitude(field, wstar),
        field=field,
        residual_norm=rnorm,
        min_hp_total=diag["min_hp_total"],
        eta_mean=diag["eta_mean"],
        crest_count=diag["crest_count"],
        even_defect=diag["even_defect"],
        monotone_ok=diag["monotone_ok"],
        eta_sup=diag["eta_sup"],
    )


def continue_branch(
    params: PhysicalParameters,
    flow: LaminarFlow,
    disp: DispersionResult,
    n_steps: int = 5,
    ds: float = 0.05,
    n_q: int = DEFAULT_NQ,
) -> BranchResult:
    """Pseudo-arclength continuation of the bifurcating branch from (lambda*, 0).

    Traces both directions +/- ds along the kernel tangent.  The step is
    halved on Newton failure and grown by 1.3 on fast convergence, capped at
    the initial ds.
    """
    if disp.transversality <= 0.0:
        raise InvalidStateError(
            "transversality condition fails: bifurcation theorem inapplicable"
        )
    if disp.kernel_collision:
        raise InvalidStateError(
            f"kernel collision with higher Fourier modes: {disp.collision_details}; "
            "refusing to continue from a possibly multiple eigenvalue"
        )
    lam_star = disp.lambda_star
    wstar = kernel_grid(flow, disp, n_q)
    w_norm = wstar / math.sqrt(np.sum(wstar * wstar))

    base = zero_field(flow, lam_star, n_q)
    root = _make_point(base, flow, 0.0, wstar)

    def trace(direction):
        points = []
        h_prev = base.h
        lam_prev = lam_star
        t_h = direction * w_norm
        t_lam = 0.0
        step = ds
        first_failure = None
        while len(points) < n_steps:
            attempts = 0
            while True:
                pred_h = h_prev + step * t_h
                pred = replace(base, h=pred_h, lam=lam_prev + step * t_lam)
                con = Arclength(
                    h_prev=h_prev,
                    lam_prev=lam_prev,
                    tangent_h=t_h,
                    tangent_lam=t_lam,
                    ds=step,
                )
                try:
                    corrected, lam_new, rnorm = newton_correct(params, flow, pred, con)
                    break
                except (ConvergenceError, InvalidStateError) as exc:
                    attempts += 1
                    step *= 0.5
                    if attempts > 10:
                        if not points:
                            raise ConvergenceError(
                                "first continuation step failed: (lambda*, w*) "
                                f"predictor inconsistent ({exc})"
                            ) from exc
                        return points, f"terminated: {exc}"
            points.append(_make_point(corrected, flow, rnorm, wstar))
            d_h = corrected.h - h_prev
            d_lam = lam_new - lam_prev
            norm = math.sqrt(float(np.sum(d_h * d_h)) + d_lam * d_lam)
            t_h = d_h / norm
            t_lam = d_lam / norm
            h_prev = corrected.h
            lam_prev = lam_new
            if attempts == 0:
                step = min(step * 1.3, ds)
        return points, "ok"

    pts_plus, status_p = trace(+1.0)
    pts_minus, status_m = trace(-1.0)
    status = "ok" if status_p == status_m == "ok" else f"+:{status_p} -:{status_m}"
    return BranchResult(
        points_plus=(root,) + tuple(pts_plus),
        points_minus=(root,) + tuple(pts_minus),
        lambda_star=lam_star,
        status=status,
    )


def smallest_singular_pair(J: sp.spmatrix, n_iter: int = 60, seed: int = 1):
    """Smallest singular value and right singular vector by inverse iteration."""
    lu = splu(J.tocsc())
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(J.shape[1])
    v /= np.linalg.norm(v)
    for _ in range(n_iter):
        w = lu.solve(v, trans="T")
        v_new = lu.solve(w)
        nrm = np.linalg.norm(v_new)
        v = v_new / nrm
    return float(np.linalg.norm(J @ v)), v


def operator_norm(J: sp.spmatrix, n_iter: int = 60, seed: int = 2) -> float:
    """Largest singular value by power iteration on J^T J."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(J.shape[1])
    v /= np.linalg.norm(v)
    sig = 0.0
    for _ in range(n_iter):
        w = J @ v
        sig = float(np.linalg.norm(w))
        v = J.T @ w
        v /= np.linalg.norm(v)
    return sig


def half_jacobian(
    params: PhysicalParameters, flow: LaminarFlow, field: HeightField
) -> sp.csr_matrix:
    """Jacobian restricted to the even subspace (what Newton actually solves)."""
    disc = _disc(params, flow, field.n_q)
    J_mat, _ = _assemble_jacobian(disc, field.h, field.lam)
    J_half, _, _ = _half_operator(disc, J_mat)
    return J_half.tocsr()
