"""
Root package of the PyEnKSGD library. Contains the ensemble Kalman-Stein gradient descent optimizer, its EnKF-type
and finite difference baselines, the benchmark problems and the experiment harness.
"""

import logging

from .ensemble import (Ensemble, DeviationMatrix, InvalidEnsembleSizeError, NonFiniteValueError, projection_matrix,
                       ensemble_mean, ensemble_deviations, empirical_covariance, recombine)
from .stein import (EvaluatedEnsemble, ProjectedDerivatives, UnsupportedProblemError, forward_deviations,
                    scalar_deviations, projected_gradient, projected_hessian)
from .transform import (TransformPair, UpdateVariant, NonPositiveTransformError, transform_matrix, deviations_step,
                        clip_deviations, gaussian_perturbations)
from .enksgd import (OptimizerConfig, IterationRecord, RunResult, enksgd_minimize, backtracking_line_search,
                     cfd_gradient, cfd_gd_minimize)
from .problems import ProblemSpec, NoiseModel, get_problem, register_problem

logging.getLogger(__name__).addHandler(logging.NullHandler())
