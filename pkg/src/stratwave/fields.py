"""Physical-plane reconstruction from the height function.

Inverts the hodograph map: given the total height h(q,p) the stream function
follows from h(x/lam, -psi(x,y)) = y + d, and the remaining fields are

    rho = rho_bar(-psi),  sqrt(rho)(u-c) = psi_y,  sqrt(rho) v = -psi_x,
    P = -rho((u-c)^2+v^2)/2 - g rho y - (B(-psi)-B(0)) + Q/2.

Derivatives of psi come from the push-forward identities
psi_x = (h_q/lam)/h_p and psi_y = -1/h_p evaluated at the inverted point,
never from differencing the inverted psi grid.  The factor 1/lam accounts
for the q = x/lam scaling of the stored height field.

The reconstructed fields feed `euler_residuals`, a central-difference check
of the original free-boundary Euler system used as an end-to-end oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .branch import HeightField
from .errors import InvalidStateError
from .laminar import LaminarFlow
from .profiles import PhysicalParameters

DEFAULT_NY = 64
INVERT_TOL = 1e-12


class HeightInterpolant:
    """Trig-in-q, cubic-spline-in-p interpolant of the total height.

    Exact on the grid; the q-representation is the trigonometric
    interpolant of the periodic rows, so q-derivatives are spectral.
    """

    def __init__(self, field: HeightField, flow: LaminarFlow):
        total = field.h + flow.H[:, None]
        n_q = field.n_q
        self.n_q = n_q
        self.coef = np.fft.rfft(total, axis=1) / n_q
        k = np.fft.rfftfreq(n_q, d=1.0 / n_q)
        self.k = k
        self.weights = np.where((k == 0) | (k == n_q // 2), 1.0, 2.0)
        dcoef = self.coef * (2.0j * np.pi * k)
        dcoef[:, -1] = 0.0  # odd Nyquist derivative
        self.spl = CubicSpline(field.p_grid, self.coef, axis=0)
        self.spl_p = self.spl.derivative()
        self.spl_dq = CubicSpline(field.p_grid, dcoef, axis=0)
        self.p0 = float(field.p_grid[0])

    def _sum(self, coef_at_p, q):
        phase = np.exp(2.0j * np.pi * np.multiply.outer(np.asarray(q, float), self.k))
        return np.sum(self.weights * (coef_at_p * phase).real, axis=-1)

    def h(self, q, p):
        return self._sum(self.spl(p), q)

    def hq(self, q, p):
        return self._sum(self.spl_dq(p), q)

    def hp(self, q, p):
        return self._sum(self.spl_p(p), q)

    def invert(self, q, y_plus_d, n_bisect: int = 48, n_newton: int = 2):
        """Solve h(q, p) = y + d for p in [p0, 0] (monotone in p by (C4))."""
        q = np.asarray(q, float)
        tgt = np.asarray(y_plus_d, float)
        lo = np.full_like(tgt, self.p0)
        hi = np.zeros_like(tgt)
        for _ in range(n_bisect):
            mid = 0.5 * (lo + hi)
            above = self.h(q, mid) > tgt
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
        p = 0.5 * (lo + hi)
        for _ in range(n_newton):
            p = p - (self.h(q, p) - tgt) / self.hp(q, p)
            p = np.clip(p, self.p0, 0.0)
        if np.max(np.abs(self.h(q, p) - tgt)) > 1e-9:
            raise InvalidStateError("height inversion failed to converge")
        return p


def bernoulli_constant(
    field: HeightField, flow: LaminarFlow, params: PhysicalParameters
) -> float:
    """Q = (1/lam) int |grad psi|^2 on the surface, periodic trapezoid.

    On the scaled grid |grad psi|^2 = (lam^2 + h_q^2)/(lam^2 h_p^2) at p = 0;
    h_p uses the same one-sided stencil as the branch solver's top row.
    """
    h = field.h
    lam = field.lam
    dp = float(field.p_grid[1] - field.p_grid[0])
    n_q = field.n_q
    k = np.fft.rfftfreq(n_q, d=1.0 / n_q)
    mult = 2.0j * np.pi * k
    mult[-1] = 0.0
    hq = np.fft.irfft(mult * np.fft.rfft(h[-1]), n=n_q)
    hp = flow.Hp[-1] + (3.0 * h[-1] - 4.0 * h[-2] + h[-3]) / (2.0 * dp)
    return float(np.mean((lam**2 + hq**2) / (lam**2 * hp**2)))


class _Reconstructor:
    """Point evaluator for all physical fields of one wave."""

    def __init__(self, params, flow, field, Q):
        self.params = params
        self.interp = HeightInterpolant(field, flow)
        self.lam = field.lam
        self.Q = Q
        self.b0 = float(params.profile.bernoulli_primitive(0.0))

    def __call__(self, x, y):
        params = self.params
        q = np.asarray(x, float) / self.lam
        tgt = np.asarray(y, float) + params.d
        tol = 1e-12 * params.d
        if np.any(tgt < -tol) or np.any(tgt > self.interp.h(q, 0.0) + tol):
            raise InvalidStateError("point outside the fluid domain [-d, eta(x)]")
        p = self.interp.invert(q, tgt)
        hp = self.interp.hp(q, p)
        hq = self.interp.hq(q, p)
        psi_y = -1.0 / hp
        psi_x = hq / (self.lam * hp)
        rho = params.profile.rho_bar(p)
        sq = np.sqrt(rho)
        u_rel = psi_y / sq
        v = -psi_x / sq
        B = params.profile.bernoulli_primitive(p) - self.b0
        P = (
            -0.5 * rho * (u_rel**2 + v**2)
            - params.g * rho * np.asarray(y, float)
            - B
            + 0.5 * self.Q
        )
        return {"psi": -p, "u_rel": u_rel, "v": v, "P": P, "rho": rho}


@dataclass(frozen=True)
class FlowField:
    lam: float
    x_grid: np.ndarray
    eta: np.ndarray
    y_columns: np.ndarray  # (n_y, n_q)
    psi: np.ndarray
    u_rel: np.ndarray
    v: np.ndarray
    P: np.ndarray
    rho: np.ndarray
    Q: float
    evaluate: _Reconstructor


def stream_from_height(
    field: HeightField, flow: LaminarFlow, params: PhysicalParameters
) -> HeightInterpolant:
    """Interpolant whose `invert` realizes psi(x,y) = -h^{-1}(x/lam, y+d)."""
    return HeightInterpolant(field, flow)


def reconstruct(
    params: PhysicalParameters,
    field: HeightField,
    flow: LaminarFlow,
    n_y: int = DEFAULT_NY,
) -> FlowField:
    """Physical fields on per-column grids from -d to eta(x).

    Columns use a cosine-graded (Chebyshev-like) vertical distribution to
    resolve the boundary layers of the interpolation error.
    """
    Q = bernoulli_constant(field, flow, params)
    ev = _Reconstructor(params, flow, field, Q)
    lam = field.lam
    x = lam * field.q_grid
    eta = field.h[-1] + flow.H[-1] - params.d
    t = 0.5 * (1.0 - np.cos(np.pi * np.linspace(0.0, 1.0, n_y)))
    y_cols = -params.d + t[:, None] * (eta + params.d)[None, :]
    X = np.broadcast_to(x, y_cols.shape)
    out = ev(X.ravel(), y_cols.ravel())
    shape = y_cols.shape
    return FlowField(
        lam=lam,
        x_grid=x,
        eta=eta,
        y_columns=y_cols,
        psi=out["psi"].reshape(shape),
        u_rel=out["u_rel"].reshape(shape),
        v=out["v"].reshape(shape),
        P=out["P"].reshape(shape),
        rho=out["rho"].reshape(shape),
        Q=Q,
        evaluate=ev,
    )


def _surface_derivatives(eta, lam):
    n_q = len(eta)
    k = np.fft.rfftfreq(n_q, d=1.0 / n_q)
    ck = np.fft.rfft(eta)
    d1 = 2.0j * np.pi * k / lam
    d1[-1] = 0.0
    etap = np.fft.irfft(d1 * ck, n=n_q)
    etapp = np.fft.irfft(-((2.0 * np.pi * k / lam) ** 2) * ck, n=n_q)
    return etap, etapp


def euler_residuals(
    ff: FlowField, params: PhysicalParameters, n_y_sample: int = 20
) -> dict:
    """Sup-norm residuals of the steady Euler free-boundary system.

    Interior derivatives by central differences with steps tied to the
    horizontal grid spacing; surface derivatives by the same Fourier
    differentiation the solver uses for its top row.
    """
    ev = ff.evaluate
    lam = ff.lam
    g = params.g
    hx = lam / (2.0 * len(ff.x_grid))
    depth = ff.eta + params.d
    # keep the FD stars inside the fluid for every neighbouring column
    margin = 0.1 * float(np.min(depth))
    etap0 = _surface_derivatives(ff.eta, lam)[0]
    span = depth - 2.0 * margin - np.abs(etap0) * hx
    frac = np.linspace(0.0, 1.0, n_y_sample)
    Y = (-params.d + margin) + frac[:, None] * span[None, :]
    X = np.broadcast_to(ff.x_grid, Y.shape)
    # vertical step tied to the horizontal resolution so both truncation
    # errors shrink together under grid refinement
    hy = min(0.5 * margin, hx * float(np.min(depth)) / lam)

    f0 = ev(X, Y)
    fxp = ev(X + hx, Y)
    fxm = ev(X - hx, Y)
    fyp = ev(X, Y + hy)
    fym = ev(X, Y - hy)

    def dx(name):
        return (fxp[name] - fxm[name]) / (2.0 * hx)

    def dy(name):
        return (fyp[name] - fym[name]) / (2.0 * hy)

    rho, u, v, P = f0["rho"], f0["u_rel"], f0["v"], f0["P"]
    mom_x = rho * (u * dx("u_rel") + v * dy("u_rel")) + dx("P")
    mom_y = rho * (u * dx("v") + v * dy("v")) + dy("P") + g * rho
    transport = u * dx("rho") + v * dy("rho")
    incomp = dx("u_rel") + dy("v")

    etap, etapp = _surface_derivatives(ff.eta, lam)
    surf = ev(ff.x_grid, ff.eta)
    dynamic = surf["P"] + params.sigma * etapp / (1.0 + etap**2) ** 1.5
    kinematic = surf["v"] - surf["u_rel"] * etap
    bottom = ev(ff.x_grid, np.full_like(ff.x_grid, -params.d))["v"]

    return {
        "momentum_x": float(np.max(np.abs(mom_x))),
        "momentum_y": float(np.max(np.abs(mom_y))),
        "transport": float(np.max(np.abs(transport))),
        "incompressibility": float(np.max(np.abs(incomp))),
        "dynamic": float(np.max(np.abs(dynamic))),
        "kinematic": float(np.max(np.abs(kinematic))),
        "bottom": float(np.max(np.abs(bottom))),
        "eta_mean": abs(float(np.mean(ff.eta))),
    }


def streamline_constancy(ff: FlowField, params: PhysicalParameters, n_levels: int = 6) -> dict:
    """Spread of rho and hydraulic head E along streamlines.

    Interpolates the gridded column data onto psi-level sets; the spread
    measures the grid interpolation error (second order), since the
    reconstruction itself is constant along level sets by construction.
    """
    psi_levels = np.linspace(0.15, 0.85, n_levels) * float(np.max(ff.psi))
    n_q = len(ff.x_grid)
    rho_spread = 0.0
    head_spread = 0.0
    E_cols = ff.P + 0.5 * ff.rho * (ff.u_rel**2 + ff.v**2) + params.g * ff.rho * ff.y_columns
    for lev in psi_levels:
        rho_line = np.empty(n_q)
        e_line = np.empty(n_q)
        for j in range(n_q):
            col_psi = ff.psi[::-1, j]  # increasing with depth reversed
            y_col = ff.y_columns[::-1, j]
            y_at = CubicSpline(col_psi, y_col)(lev)
            rho_line[j] = CubicSpline(ff.y_columns[:, j], ff.rho[:, j])(y_at)
            e_line[j] = CubicSpline(ff.y_columns[:, j], E_cols[:, j])(y_at)
        rho_spread = max(rho_spread, float(np.ptp(rho_line)))
        head_spread = max(head_spread, float(np.ptp(e_line)))
    return {"rho_spread": rho_spread, "head_spread": head_spread}


def height_roundtrip_error(
    ff: FlowField, field: HeightField, flow: LaminarFlow
) -> float:
    """Rebuild h from the gridded psi level sets and compare (O(grid^2))."""
    total = field.h + flow.H[:, None]
    err = 0.0
    p_interior = field.p_grid[1:-1]
    for j in range(len(ff.x_grid)):
        col_psi = ff.psi[::-1, j]
        y_col = ff.y_columns[::-1, j]
        y_back = CubicSpline(col_psi, y_col)(-p_interior)
        err = max(err, float(np.max(np.abs(y_back + flow.params.d - total[1:-1, j]))))
    return err
