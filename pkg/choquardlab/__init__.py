__version__ = "0.1.0"

from choquardlab.utility_functions import (ConvergenceError, GridResolutionError, Logger, ParameterError,
                                           QuadratureError)
from choquardlab.geometry import DomainMask, Grid, Shape, boundary_patches, build_domain, build_grid
from choquardlab.operators import MixedForm
from choquardlab.choquard import ChoquardState, bubble_field, compute_exponents, hls_constant_estimate
from choquardlab.spectral import first_eigen_fractional, first_eigen_local, first_eigen_mixed
from choquardlab.variational import ProblemParams, VariationalProblem
from choquardlab.verify import OracleSuite, nonexistence_criterion, pohozaev_terms
