"""Perturbed generalized eigenproblems for interior outlier suppression in
multipatch isogeometric discretizations."""

from .assembly import OperatorSet, assemble
from .dynamics import CentralDifference, critical_timestep, energy, integrate
from .eigensolve import Spectrum, max_eigenpair, refine_eigenpair, solve_gevp
from .errors import (
    ConfigError,
    ConvergenceError,
    EstimationError,
    MatchingError,
    NoOutlierError,
    NotSPDError,
    NumericalError,
    StabilityError,
)
from .multipatch import ProblemKind, build_space_1d, build_space_2d, count_interior_outliers
from .perturbation import PerturbationParams, algorithm1_estimate, estimate_exact_target_1d, perturb
from .spectral import PROBLEMS, analytic_modes, flag_outliers, match_modes
from .spline import SplineSpace1D, eval_basis, gauss_rule

__version__ = "0.1.0"
