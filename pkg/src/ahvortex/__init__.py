"""Numerical toolkit for self-dual vortices with a general coupling function."""

from .coupling import (CouplingModel, builtin_classical, builtin_m_family, model_from_selector,
                       validate_coupling, check_plane_conditions)
from .geometry import ConfigError, DomainSpec, GridField, VortexConfiguration, make_grid
from .elliptic import SolverOptions, ScalarSolution, solve, solve_torus, solve_plane

__version__ = "0.1.0"
