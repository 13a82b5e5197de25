"""Steady periodic stratified capillary-gravity water waves.

Pipeline: admissibility checks and laminar background flows, dispersion
analysis of the linearized problem, bifurcation-branch continuation of
nonlaminar waves, and reconstruction of the physical velocity, pressure and
density fields.
"""

from .branch import (
    Arclength,
    BranchResult,
    ContinuationPoint,
    FixedAmplitude,
    FixedLambda,
    HeightField,
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
    smallest_singular_pair,
    total_hp_grid,
    zero_field,
)
from .dispersion import (
    DispersionResult,
    SLTrajectory,
    analytic_dispersion,
    check_w0_nondegenerate,
    dispersion_constant,
    integrate_w1,
    integrate_w2,
    kernel_mode,
    largest_root_theta,
    transversality_value,
    wronskian_at_top,
    wronskian_identity_check,
)
from .errors import (
    BracketError,
    ConvergenceError,
    IntegratorError,
    InvalidStateError,
    ProfileError,
)
from .fields import (
    FlowField,
    HeightInterpolant,
    bernoulli_constant,
    euler_residuals,
    height_roundtrip_error,
    reconstruct,
    stream_from_height,
    streamline_constancy,
)
from .laminar import LaminarFlow, laminar_residual, picard_solve, shoot_depth
from .profiles import (
    PhysicalParameters,
    StratificationProfile,
    check_cthe0,
    check_res2,
    check_res3,
    constant_density,
    from_beta,
    mu_star,
    params_from_descriptor,
    x_star,
)

__version__ = "0.1.0"
