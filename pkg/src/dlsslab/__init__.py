"""Structure-preserving discretization lab for a fourth-order diffusion flow.

Public surface: the cyclic grid calculus, densities and initial-data
handling, the three-point mobility, Lyapunov functionals, the implicit
Euler solver with adaptive stepping, the diffusive transport distance,
functional-inequality suites, and refinement studies.
"""

__version__ = "0.1.0"

from .density import (
    ContinuousDatum,
    Density,
    bls_datum,
    density_from_values,
    hellinger,
    is_positive,
    project_initial,
    random_positive_density,
    reconstruct,
    uniform_datum,
)
from .flow import SolverConfig, StepRecord, Trajectory, evolve_pair, implicit_euler_step, simulate
from .grid import GridFunction, GridSpec
from .metric import Curve, MetricConfig, action, connecting_curve, distance_lower, distance_upper, geodesic

__all__ = [
    "ContinuousDatum",
    "Curve",
    "Density",
    "GridFunction",
    "GridSpec",
    "MetricConfig",
    "SolverConfig",
    "StepRecord",
    "Trajectory",
    "action",
    "bls_datum",
    "connecting_curve",
    "density_from_values",
    "distance_lower",
    "distance_upper",
    "evolve_pair",
    "geodesic",
    "hellinger",
    "implicit_euler_step",
    "is_positive",
    "project_initial",
    "random_positive_density",
    "reconstruct",
    "simulate",
    "uniform_datum",
    "__version__",
]
