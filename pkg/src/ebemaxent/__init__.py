"""Maximum-entropy densities on ``[-1, 1]^d`` from polynomial moments, solved equation by equation."""

from importlib.metadata import PackageNotFoundError, version

from ._kernels import BACKEND
from .baselines import NewtonConfig, newton_full_solve
from .basis import BasisSet, MultiIndex, count_multi_indices, enumerate_multi_indices, reorder_for_convexity
from .core import Density, MomentProblem, eval_jacobian, eval_residuals, moment_error, normalize
from .ebe import EbeConfig, SolveReport, ebe_solve
from .exceptions import (
    DegenerateAxis,
    Diverged,
    DomainError,
    EbeError,
    ExponentOverflow,
    NoConvergence,
    ResourceLimitError,
    SingularMatrix,
    ZeroDerivative,
)
from .ingest import SampleSet, build_problem, empirical_moments, fit_rescale, load_samples_csv
from .quadrature import QuadratureRule, clenshaw_curtis_1d, make_rule, smolyak_sparse_grid, uniform_grid
from .rescale import AffineRescale

try:
    __version__ = version("ebemaxent")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AffineRescale",
    "BasisSet",
    "DegenerateAxis",
    "Density",
    "Diverged",
    "DomainError",
    "EbeConfig",
    "EbeError",
    "ExponentOverflow",
    "MomentProblem",
    "MultiIndex",
    "NewtonConfig",
    "NoConvergence",
    "QuadratureRule",
    "ResourceLimitError",
    "SampleSet",
    "SingularMatrix",
    "SolveReport",
    "ZeroDerivative",
    "build_problem",
    "clenshaw_curtis_1d",
    "count_multi_indices",
    "ebe_solve",
    "empirical_moments",
    "enumerate_multi_indices",
    "eval_jacobian",
    "eval_residuals",
    "fit_rescale",
    "load_samples_csv",
    "make_rule",
    "moment_error",
    "newton_full_solve",
    "normalize",
    "reorder_for_convexity",
    "smolyak_sparse_grid",
    "uniform_grid",
]
