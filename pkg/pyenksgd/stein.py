"""
Module contains the Monte Carlo projections of derivatives onto the ensemble. By Stein's identity the
cross-covariance of the particles and their forward values stands in for the unavailable Jacobian, which gives
estimates of the projected gradient ``Y^T grad Phi(x_mean)`` and the projected Hessian ``Y^T B Y`` from forward
evaluations alone.
"""

from typing import Optional, Union
from dataclasses import dataclass
import numpy as np
from pyenksgd.ensemble import Ensemble, ensemble_mean, ensemble_deviations
from pyenksgd.problems.spec import ProblemSpec, ForwardEvaluator, as_evaluator

class UnsupportedProblemError(TypeError):
    """
    Raised if a problem lacks a callback the estimators require.
    """

class EvaluatedEnsemble:
    """
    Forward-map values of every particle of an ensemble, plus the regularizer values needed when the
    regularizer gradients are unavailable.
    """
    def __init__(self, forward_values: np.ndarray, reg_x_values: Optional[np.ndarray] = None,
                 reg_y_values: Optional[np.ndarray] = None):
        """
        :param forward_values: The ``N_y x K`` matrix of forward values, column ``k`` belonging to particle ``k``.
        :param reg_x_values: Optional values ``R(x^(k))``.
        :param reg_y_values: Optional values ``T(G(x^(k)))``.
        """
        forward_values = np.array(forward_values, dtype=float)

        if forward_values.ndim != 2:
            raise ValueError("Forward values must be a two-dimensional matrix.")

        k = forward_values.shape[1]

        for name, values in (("reg_x_values", reg_x_values), ("reg_y_values", reg_y_values)):
            if values is not None and np.shape(values) != (k,):
                raise ValueError(f"{name} must hold one value per particle ({k}), got shape {np.shape(values)}.")

        self.forward_values = forward_values
        self.mean_forward = forward_values.mean(axis=1)
        self.reg_x_values = None if reg_x_values is None else np.asarray(reg_x_values, dtype=float)
        self.reg_y_values = None if reg_y_values is None else np.asarray(reg_y_values, dtype=float)

    @property
    def k_particles(self) -> int:
        """
        Returns the number of evaluated particles.
        """
        return self.forward_values.shape[1]

    @staticmethod
    def evaluate(ens: Ensemble, problem: Union[ProblemSpec, ForwardEvaluator]) -> "EvaluatedEnsemble":
        """
        Evaluates the forward map at every particle, in particle order. Costs ``K`` forward evaluations. The
        regularizer values are only computed where the gradient is missing and the regularizer is active.

        :param ens: The ensemble.
        :param problem: The problem or the run's evaluator.
        :return: The evaluated ensemble.
        """
        evaluator = as_evaluator(problem)
        spec = evaluator.spec
        states = ens.states
        forward_values = np.column_stack([evaluator.forward(states[:, k]) for k in range(ens.k_particles)])

        reg_x_values = None
        reg_y_values = None

        if spec.uses_reg_x and spec.reg_x.grad is None and spec.reg_x.value is not None:
            reg_x_values = np.array([spec.reg_x.value(states[:, k]) for k in range(ens.k_particles)], dtype=float)

        if spec.uses_reg_y and spec.reg_y.grad is None and spec.reg_y.value is not None:
            reg_y_values = np.array([spec.reg_y.value(forward_values[:, k]) for k in range(ens.k_particles)],
                                    dtype=float)

        return EvaluatedEnsemble(forward_values, reg_x_values, reg_y_values)

@dataclass
class ProjectedDerivatives:
    """
    Derivative information of one iteration, projected onto the ensemble.
    """
    q: np.ndarray
    ybar_at_mean: np.ndarray
    h_proj: np.ndarray

def forward_deviations(ev: EvaluatedEnsemble) -> np.ndarray:
    """
    Returns the forward-map deviations matrix ``Gamma``, column ``k`` being ``G(x^(k))`` minus the mean of the
    particle forward values.

    :param ev: The evaluated ensemble.
    :return: The ``N_y x K`` deviations.
    """
    return ev.forward_values - ev.mean_forward[:, np.newaxis]

def scalar_deviations(values: np.ndarray) -> np.ndarray:
    """
    Centers a vector of per-particle scalar values.

    :param values: One value per particle.
    :return: The centered values.
    """
    values = np.asarray(values, dtype=float)

    if values.ndim != 1 or values.shape[0] < 2:
        raise ValueError("Scalar deviations require one value for each of at least 2 particles.")

    return values - values.mean()

def _require(callback, what: str, spec: ProblemSpec):
    if callback is None:
        raise UnsupportedProblemError(f"Problem '{spec.name}' does not provide the {what}.")

    return callback

def _mean_forward_value(ens: Ensemble, evaluator: ForwardEvaluator, ybar: Optional[np.ndarray]) -> np.ndarray:
    if ybar is not None:
        return np.asarray(ybar, dtype=float)

    return evaluator.forward(ensemble_mean(ens))

def projected_gradient(ens: Ensemble, ev: EvaluatedEnsemble, problem: Union[ProblemSpec, ForwardEvaluator],
                       ybar: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Returns the Stein estimate ``q`` of ``Y^T grad Phi(x_mean)``::

        q = Gamma^T grad D(ybar) + alpha_x Y^T grad R(x_mean) + alpha_y Gamma^T grad T(ybar)

    with ``ybar = G(x_mean)``. Regularizer terms fall back to centered regularizer values if the gradient is
    unavailable.

    :param ens: The ensemble.
    :param ev: The forward values of the ensemble.
    :param problem: The problem or the run's evaluator.
    :param ybar: The forward value at the ensemble mean. Evaluated, at the cost of one evaluation, if omitted.
    :return: The length ``K`` vector ``q``.
    :raises UnsupportedProblemError: If the loss gradient or a needed regularizer callback is missing.
    """
    evaluator = as_evaluator(problem)
    spec = evaluator.spec
    loss_grad = _require(spec.loss_grad, "loss gradient", spec)

    gamma = forward_deviations(ev)
    ybar = _mean_forward_value(ens, evaluator, ybar)
    q = gamma.T @ np.asarray(loss_grad(ybar), dtype=float)

    if spec.uses_reg_x:
        if spec.reg_x.grad is not None:
            dev = ensemble_deviations(ens).values
            q = q + spec.alpha_x * (dev.T @ np.asarray(spec.reg_x.grad(ensemble_mean(ens)), dtype=float))
        else:
            _require(ev.reg_x_values, "state regularizer gradient or values", spec)
            q = q + spec.alpha_x * scalar_deviations(ev.reg_x_values)

    if spec.uses_reg_y:
        if spec.reg_y.grad is not None:
            q = q + spec.alpha_y * (gamma.T @ np.asarray(spec.reg_y.grad(ybar), dtype=float))
        else:
            _require(ev.reg_y_values, "observation regularizer gradient or values", spec)
            q = q + spec.alpha_y * scalar_deviations(ev.reg_y_values)

    return q

def projected_hessian(ens: Ensemble, ev: EvaluatedEnsemble, problem: Union[ProblemSpec, ForwardEvaluator],
                      ybar: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Returns the projected Hessian::

        Gamma^T (hess D(ybar) + alpha_y hess T(ybar)) Gamma + alpha_x Y^T hess R(x_mean) Y

    Missing regularizer Hessians are replaced by the identity in state space, contributing ``alpha Y^T Y``.
    The result is symmetrized.

    :param ens: The ensemble.
    :param ev: The forward values of the ensemble.
    :param problem: The problem or the run's evaluator.
    :param ybar: The forward value at the ensemble mean. Evaluated, at the cost of one evaluation, if omitted.
    :return: The ``K x K`` symmetric matrix.
    :raises UnsupportedProblemError: If the loss Hessian is missing.
    """
    evaluator = as_evaluator(problem)
    spec = evaluator.spec
    loss_hess = _require(spec.loss_hess, "loss Hessian", spec)

    gamma = forward_deviations(ev)
    dev = ensemble_deviations(ens).values
    ybar = _mean_forward_value(ens, evaluator, ybar)

    h_proj = gamma.T @ np.asarray(loss_hess(ybar), dtype=float) @ gamma

    if spec.uses_reg_y:
        if spec.reg_y.hess is not None:
            h_proj = h_proj + spec.alpha_y * (gamma.T @ np.asarray(spec.reg_y.hess(ybar), dtype=float) @ gamma)
        else:
            h_proj = h_proj + spec.alpha_y * (dev.T @ dev)

    if spec.uses_reg_x:
        if spec.reg_x.hess is not None:
            hess_r = np.asarray(spec.reg_x.hess(ensemble_mean(ens)), dtype=float)
            h_proj = h_proj + spec.alpha_x * (dev.T @ hess_r @ dev)
        else:
            h_proj = h_proj + spec.alpha_x * (dev.T @ dev)

    return 0.5 * (h_proj + h_proj.T)

def project_derivatives(ens: Ensemble, ev: EvaluatedEnsemble,
                        problem: Union[ProblemSpec, ForwardEvaluator]) -> ProjectedDerivatives:
    """
    Computes ``q`` and the projected Hessian sharing a single evaluation of ``G(x_mean)``.

    :param ens: The ensemble.
    :param ev: The forward values of the ensemble.
    :param problem: The problem or the run's evaluator.
    :return: The projected derivatives.
    """
    evaluator = as_evaluator(problem)
    ybar = evaluator.forward(ensemble_mean(ens))

    return ProjectedDerivatives(q=projected_gradient(ens, ev, evaluator, ybar),
                                ybar_at_mean=ybar,
                                h_proj=projected_hessian(ens, ev, evaluator, ybar))
