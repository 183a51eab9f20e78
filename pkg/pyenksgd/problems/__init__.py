"""
This package contains the problem abstraction and the built-in benchmark problems. Problems are resolved by name
through :func:`pyenksgd.problems.get_problem`; user problems are added with
:func:`pyenksgd.problems.register_problem`.
"""

from .spec import (ProblemSpec, RegularizerParts, NoiseModel, EvalCounter, ForwardEvaluator, ProblemDomainError,
                   UnknownProblemError, apply_noise, affine_reparameterization, register_problem, get_problem,
                   available_problems)
from .suite import (linear_ls_problem, quadratic_problem, nls_problem, poisson_regression_problem,
                    signal_reconstruction_problem, poisson_negative_log_likelihood, rectified_sine, NLS_PROBLEMS)
