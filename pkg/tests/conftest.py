"""Shared fixtures: the three reference configurations.

- const_*: homogeneous irrotational, sigma = 0.3 (dispersion oracle config)
- branch_*: homogeneous irrotational, sigma = 3.0; all Sturm-Liouville
  scales are O(1) there, which keeps branch/field tests well conditioned
- strat_*: linearly stratified, rho_bar = 1 - 0.05 p on [-4, 0] with g = 8,
  the strongest stratification that still passes every admissibility check
"""

import numpy as np
import pytest

from stratwave import (
    PhysicalParameters,
    StratificationProfile,
    constant_density,
    dispersion_constant,
    shoot_depth,
)
from stratwave.branch import continue_branch


@pytest.fixture(scope="session")
def const_params():
    return PhysicalParameters(
        g=9.81, d=1.0, sigma=0.3, profile=constant_density(-3.2, 1.0)
    )


@pytest.fixture(scope="session")
def const_flow(const_params):
    return shoot_depth(const_params)


@pytest.fixture(scope="session")
def branch_params():
    return PhysicalParameters(
        g=9.81, d=1.0, sigma=3.0, profile=constant_density(-3.2, 1.0)
    )


@pytest.fixture(scope="session")
def branch_flow(branch_params):
    return shoot_depth(branch_params, n_p=128)


@pytest.fixture(scope="session")
def branch_disp(branch_flow):
    return dispersion_constant(branch_flow)


@pytest.fixture(scope="session")
def branch_run(branch_params, branch_flow, branch_disp):
    return continue_branch(branch_params, branch_flow, branch_disp, n_steps=5, ds=0.05)


def linear_stratification(p0=-4.0, slope=0.05):
    return StratificationProfile(
        p0=p0,
        rho_bar=lambda p: 1.0 - slope * np.asarray(p, dtype=float),
        bernoulli_primitive=lambda p: np.zeros_like(np.asarray(p, dtype=float)),
    )


@pytest.fixture(scope="session")
def strat_params():
    return PhysicalParameters(g=8.0, d=1.0, sigma=1.0, profile=linear_stratification())


@pytest.fixture(scope="session")
def strat_flow(strat_params):
    return shoot_depth(strat_params)
