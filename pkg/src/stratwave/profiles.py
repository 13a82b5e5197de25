"""Streamline-density profiles and admissibility checks.

A stratified flow is described by the streamline density rho_bar(p) and the
primitive B(p) of the Bernoulli function beta on [p0, 0], with B(p0) = 0.
beta itself may be singular-but-integrable at p0, so B is the primary
representation; everything downstream (laminar solver, dispersion, branch)
only ever evaluates rho_bar and B.

The admissibility conditions checked here are

    positivity    rho_bar >= rho_floor > 0
    monotonicity  rho_bar nonincreasing
    size (res2)   d + p0 / sqrt(mu_star - 2 min B) < 0
    flux (res3)   g d^3 rho_bar(p0) |p0| / [p0^2 - (mu_star - 2 min B) d^2]^{3/2}
                  <= x*/2

where mu_star = 2 (g d ||rho_bar'||_L1 + max B) and x* is the positive root
of e^x - x = 5.  The size condition guarantees the depth shooting problem
has a solution, and the flux condition implies the non-degeneracy condition
e^{2A(0)} - 2A(0) <= 5 checked by check_cthe0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import ProfileError

#: number of sample points used for min/max scans of B and rho_bar
SAMPLE_POINTS = 2048


def _as_vectorized(f: Callable) -> Callable:
    """Wrap a scalar-only callable so it accepts ndarrays."""

    def wrapped(p):
        p = np.asarray(p, dtype=float)
        if p.ndim == 0:
            return float(f(float(p)))
        out = f(p)
        out = np.asarray(out, dtype=float)
        if out.shape != p.shape:
            out = np.array([f(float(x)) for x in p.ravel()]).reshape(p.shape)
        return out

    return wrapped


@dataclass(frozen=True)
class StratificationProfile:
    """Streamline density rho_bar and Bernoulli primitive B on [p0, 0].

    Parameters
    ----------
    p0 : float
        Relative mass flux, p0 < 0; left endpoint of the streamline coordinate.
    rho_bar : callable
        Streamline density, positive on [p0, 0]; must accept ndarrays.
    bernoulli_primitive : callable
        B(p) = int_{p0}^p beta, with B(p0) = 0; must accept ndarrays.
    rho_bar_decreasing : bool
        Asserts rho_bar' <= 0 on a sample grid.
    rho_floor : float, optional
        Lower density bound rho0 (condition (CR)); defaults to the sampled
        minimum of rho_bar.
    rho_prime_l1 : float, optional
        ||rho_bar'||_{L1}.  Computed exactly as rho_bar(p0) - rho_bar(0) for
        nonincreasing profiles; must be supplied otherwise.
    beta_singular : bool
        Declares an integrable singularity of beta at p0 so that solvers use
        a graded p-mesh.
    metadata : dict
        Free-form extras (e.g. the regularity exponents r and alpha=(r-1)/r,
        which play no computational role).
    """

    p0: float
    rho_bar: Callable
    bernoulli_primitive: Callable
    rho_bar_decreasing: bool = True
    rho_floor: float | None = None
    rho_prime_l1: float | None = None
    beta_singular: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.p0 < 0:
            raise ProfileError(f"p0 must be negative, got {self.p0}")
        object.__setattr__(self, "rho_bar", _as_vectorized(self.rho_bar))
        object.__setattr__(
            self, "bernoulli_primitive", _as_vectorized(self.bernoulli_primitive)
        )
        p = self.sample_grid()
        rho = self.rho_bar(p)
        if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
            raise ProfileError("rho_bar must be positive and finite on [p0, 0]")
        b0 = float(self.bernoulli_primitive(self.p0))
        scale = max(1.0, float(np.max(np.abs(self.bernoulli_primitive(p)))))
        if abs(b0) > 1e-12 * scale:
            raise ProfileError(f"B(p0) must vanish, got {b0}")
        if self.rho_bar_decreasing:
            drho = np.diff(rho)
            if np.any(drho > 1e-10 * max(1.0, float(np.max(rho)))):
                raise ProfileError("rho_bar declared nonincreasing but increases")
        if self.rho_floor is None:
            object.__setattr__(self, "rho_floor", float(np.min(rho)))
        elif np.any(rho < self.rho_floor - 1e-12):
            raise ProfileError("rho_bar drops below the declared rho_floor")
        if self.rho_prime_l1 is None:
            if not self.rho_bar_decreasing:
                raise ProfileError(
                    "rho_prime_l1 must be supplied for non-monotone rho_bar"
                )
            l1 = float(self.rho_bar(self.p0) - self.rho_bar(0.0))
            object.__setattr__(self, "rho_prime_l1", max(l1, 0.0))

    def sample_grid(self, n: int = SAMPLE_POINTS) -> np.ndarray:
        """Uniform sample grid on [p0, 0] including both endpoints."""
        return np.linspace(self.p0, 0.0, n + 1)

    def b_range(self, n: int = SAMPLE_POINTS) -> tuple[float, float]:
        """(min, max) of B over the sample grid plus endpoints."""
        b = self.bernoulli_primitive(self.sample_grid(n))
        return float(np.min(b)), float(np.max(b))


@dataclass(frozen=True)
class PhysicalParameters:
    """Gravity g, depth d, surface tension sigma and the density profile."""

    g: float
    d: float
    sigma: float
    profile: StratificationProfile

    def __post_init__(self):
        if self.g <= 0 or self.d <= 0 or self.sigma <= 0:
            raise ProfileError("g, d and sigma must be positive")


# ----------------------------------------------------------------------
# constructors


def constant_density(p0: float, rho: float = 1.0, **kwargs) -> StratificationProfile:
    """Homogeneous irrotational profile: rho_bar = rho, beta = 0."""
    return StratificationProfile(
        p0=p0,
        rho_bar=lambda p: np.full_like(np.asarray(p, dtype=float), rho),
        bernoulli_primitive=lambda p: np.zeros_like(np.asarray(p, dtype=float)),
        rho_bar_decreasing=True,
        rho_floor=rho,
        rho_prime_l1=0.0,
        **kwargs,
    )


def from_beta(
    p0: float,
    rho_bar: Callable,
    beta: Callable,
    *,
    beta_singular: bool = False,
    n_quad: int = SAMPLE_POINTS,
    **kwargs,
) -> StratificationProfile:
    """Build a profile from beta by adaptive quadrature of B = int beta.

    B is tabulated cumulatively on a mesh graded toward p0 (algebraic
    grading exponent 2) when `beta_singular`, then interpolated as a cubic
    spline in the graded index variable, which absorbs sqrt-type endpoint
    behavior such as beta = C (p - p0)^{-1/2}.
    """
    u = np.linspace(0.0, 1.0, n_quad + 1)
    p_nodes = p0 + (0.0 - p0) * (u**2 if beta_singular else u)
    b_nodes = np.zeros_like(p_nodes)
    for i in range(1, len(p_nodes)):
        val, _ = integrate.quad(beta, p_nodes[i - 1], p_nodes[i], limit=200)
        b_nodes[i] = b_nodes[i - 1] + val
    from scipy.interpolate import CubicSpline

    spline = CubicSpline(u, b_nodes)
    span = 0.0 - p0

    if beta_singular:

        def b_func(p):
            s = np.clip((np.asarray(p, dtype=float) - p0) / span, 0.0, 1.0)
            return spline(np.sqrt(s))

    else:

        def b_func(p):
            s = np.clip((np.asarray(p, dtype=float) - p0) / span, 0.0, 1.0)
            return spline(s)

    return StratificationProfile(
        p0=p0,
        rho_bar=rho_bar,
        bernoulli_primitive=b_func,
        beta_singular=beta_singular,
        **kwargs,
    )


def _rho_from_descriptor(p0: float, spec: dict) -> tuple[Callable, bool]:
    kind = spec.get("kind")
    if kind == "constant":
        v = float(spec["value"])
        return (lambda p: np.full_like(np.asarray(p, dtype=float), v)), True
    if kind == "linear":
        a, b = float(spec["value_at_top"]), float(spec["slope"])
        return (lambda p: a + b * np.asarray(p, dtype=float)), b <= 0.0
    if kind == "exp":
        a, r = float(spec["value_at_top"]), float(spec["rate"])
        return (lambda p: a * np.exp(-r * np.asarray(p, dtype=float))), (
            r >= 0.0 and a > 0.0
        )
    if kind == "table":
        pts = np.asarray(spec["p"], dtype=float)
        vals = np.asarray(spec["value"], dtype=float)
        interp = PchipInterpolator(pts, vals)
        decreasing = bool(np.all(np.diff(vals) <= 0.0))
        return interp, decreasing
    raise ProfileError(f"unknown rho kind {kind!r}")


def _bernoulli_from_descriptor(p0: float, spec: dict) -> tuple[Callable, bool]:
    kind = spec.get("kind")
    if kind == "zero":
        return (lambda p: np.zeros_like(np.asarray(p, dtype=float))), False
    if kind == "constant":
        c = float(spec["beta"])
        return (lambda p: c * (np.asarray(p, dtype=float) - p0)), False
    if kind == "sqrt_singular":
        c = float(spec["coefficient"])
        return (
            lambda p: 2.0
            * c
            * np.sqrt(np.maximum(np.asarray(p, dtype=float) - p0, 0.0))
        ), True
    if kind == "table_B":
        pts = np.asarray(spec["p"], dtype=float)
        vals = np.asarray(spec["value"], dtype=float)
        return PchipInterpolator(pts, vals), False
    raise ProfileError(f"unknown bernoulli kind {kind!r}")


def params_from_descriptor(obj: dict) -> PhysicalParameters:
    """Build PhysicalParameters from a JSON profile descriptor.

    Expected keys: p0, g, d, sigma, rho {kind: constant|linear|exp|table},
    bernoulli {kind: zero|constant|sqrt_singular|table_B}.  Tabulated data
    are interpolated with monotone cubic (PCHIP) interpolation.
    """
    try:
        p0 = float(obj["p0"])
        g = float(obj["g"])
        d = float(obj["d"])
        sigma = float(obj["sigma"])
        rho_spec = obj["rho"]
        b_spec = obj["bernoulli"]
    except (KeyError, TypeError) as exc:
        raise ProfileError(f"malformed profile descriptor: {exc}") from exc
    rho_bar, decreasing = _rho_from_descriptor(p0, rho_spec)
    b_func, singular = _bernoulli_from_descriptor(p0, b_spec)
    profile = StratificationProfile(
        p0=p0,
        rho_bar=rho_bar,
        bernoulli_primitive=b_func,
        rho_bar_decreasing=decreasing,
        rho_prime_l1=obj.get("rho_prime_l1"),
        beta_singular=singular,
        metadata={"rho_kind": rho_spec.get("kind"), "bernoulli_kind": b_spec.get("kind")},
    )
    return PhysicalParameters(g=g, d=d, sigma=sigma, profile=profile)


# ----------------------------------------------------------------------
# derived scalars and admissibility checks


def x_star() -> float:
    """Positive root of e^x - x = 5 (approximately 1.9368)."""
    return float(brentq(lambda x: math.exp(x) - x - 5.0, 1.0, 3.0, xtol=1e-12))


def mu_star(params: PhysicalParameters) -> float:
    """mu* = 2 (g d ||rho_bar'||_L1 + max B)."""
    prof = params.profile
    _, b_max = prof.b_range()
    return 2.0 * (params.g * params.d * prof.rho_prime_l1 + b_max)


def check_res2(params: PhysicalParameters) -> dict:
    """Size condition: margin = d + p0/sqrt(mu* - 2 min B) < 0."""
    prof = params.profile
    b_min, _ = prof.b_range()
    rad = mu_star(params) - 2.0 * b_min
    if rad < -1e-12:
        raise ProfileError(f"mu* - 2 min B = {rad} < 0: inconsistent profile data")
    if rad <= 0.0:
        # degenerate case mu* = 0, min B = 0: condition trivially satisfied
        return {"holds": True, "margin": -math.inf}
    margin = params.d + prof.p0 / math.sqrt(rad)
    return {"holds": margin < 0.0, "margin": margin}


def check_res3(params: PhysicalParameters) -> dict:
    """Sufficient flux condition for non-degeneracy of the theta=0 system."""
    prof = params.profile
    b_min, _ = prof.b_range()
    rad = max(mu_star(params) - 2.0 * b_min, 0.0)
    denom = prof.p0**2 - rad * params.d**2
    if denom <= 0.0:
        raise ProfileError("p0^2 - (mu* - 2 min B) d^2 <= 0: size condition violated")
    rho_p0 = float(prof.rho_bar(prof.p0))
    lhs = params.g * params.d**3 * rho_p0 * abs(prof.p0) / denom**1.5
    return {"holds": lhs <= x_star() / 2.0, "lhs": lhs}


def check_cthe0(flow) -> dict:
    """Non-degeneracy condition e^{2A(0)} - 2A(0) <= 5 on a laminar flow."""
    a0 = float(flow.A[-1])
    return {"holds": math.exp(2.0 * a0) - 2.0 * a0 <= 5.0, "a0": a0}
