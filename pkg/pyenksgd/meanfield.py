"""
Module contains reference implementations of the continuous-time covariance dynamics behind the method:

.. math::

    \\dot P = P - \\frac{1}{\\delta} P B P + \\beta \\delta I

its closed-form solution for ``beta = 0``, the stationary eigenvalue relation for ``beta > 0`` and a fixed-step
Runge-Kutta integrator. The optimizer never uses this module. It serves as an oracle for tests and diagnostics.
"""

from typing import Callable
from dataclasses import dataclass
import numpy as np
import scipy.linalg

MatrixField = Callable[[np.ndarray], np.ndarray]

class CovarianceIntegrationError(ValueError):
    """
    Raised if the integrated covariance loses positive definiteness.
    """

def _is_positive_definite(p: np.ndarray) -> bool:
    if not np.isfinite(p).all():
        return False

    try:
        scipy.linalg.cholesky(p, lower=True)
    except np.linalg.LinAlgError:
        return False

    return True

def _require_spd(p: np.ndarray, name: str) -> np.ndarray:
    p = np.atleast_2d(np.asarray(p, dtype=float))

    if p.shape[0] != p.shape[1]:
        raise ValueError(f"{name} must be square, got shape {p.shape}.")

    if not np.allclose(p, p.T, rtol=0, atol=1e-10 * max(1.0, np.abs(p).max())):
        raise ValueError(f"{name} must be symmetric.")

    if not _is_positive_definite(p):
        raise ValueError(f"{name} must be positive definite.")

    return p

@dataclass
class CovarianceState:
    """
    A symmetric positive definite covariance ``p`` at time ``t``.
    """
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.t < 0:
            raise ValueError(f"Time must be non-negative, got {self.t}.")

        self.p = _require_spd(self.p, "The covariance")

def covariance_ode_rhs(p: np.ndarray, b: np.ndarray, delta: float, beta: float = 0.0) -> np.ndarray:
    """
    Returns ``P - (1/delta) P B P + beta delta I``.

    :param p: The covariance.
    :param b: The Hessian ``B``.
    :param delta: The scale parameter.
    :param beta: The perturbation strength.
    :return: The symmetric time derivative.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))

    if p.shape != b.shape:
        raise ValueError(f"Covariance of shape {p.shape} does not match B of shape {b.shape}.")

    rhs = p - (p @ b @ p) / delta + beta * delta * np.eye(p.shape[0])

    return 0.5 * (rhs + rhs.T)

def closed_form_covariance(t: float, p0: np.ndarray, b: np.ndarray, delta: float) -> np.ndarray:
    """
    Returns the solution ``P(t) = delta [(1 - e^{-t}) B + delta e^{-t} P0^{-1}]^{-1}`` of the unperturbed ODE.

    :param t: The time.
    :param p0: The initial covariance.
    :param b: The Hessian ``B``.
    :param delta: The scale parameter.
    :return: The covariance at time ``t``.
    :raises ValueError: If ``t < 0`` or an input is not symmetric positive definite.
    """
    if t < 0:
        raise ValueError(f"Time must be non-negative, got {t}.")

    p0 = _require_spd(p0, "The initial covariance")
    b = _require_spd(b, "B")

    if t == 0:
        return p0.copy()

    decay = np.exp(-t)
    precision = (1 - decay) * b + delta * decay * scipy.linalg.inv(p0)
    p = delta * scipy.linalg.inv(0.5 * (precision + precision.T))

    return 0.5 * (p + p.T)

def stationary_eigen_relation(lam: float, delta: float, beta: float = 0.0) -> float:
    """
    Returns the eigenvalue ``d = (delta / (2 lambda)) (1 + sqrt(1 + 4 beta lambda))`` of the stationary
    covariance belonging to the eigenvalue ``lambda`` of ``B``.

    :param lam: The eigenvalue of ``B``.
    :param delta: The scale parameter.
    :param beta: The perturbation strength.
    :return: The stationary eigenvalue.
    """
    if lam <= 0 or delta <= 0 or beta < 0:
        raise ValueError("The eigen relation requires lambda > 0, delta > 0 and beta >= 0.")

    return delta / (2 * lam) * (1 + np.sqrt(1 + 4 * beta * lam))

def integrate_matrix_ode(rhs: MatrixField, p0: np.ndarray, t_end: float, n_steps: int) -> np.ndarray:
    """
    Integrates ``dP/dt = rhs(P)`` with the classical fourth-order Runge-Kutta scheme and fixed step
    ``t_end / n_steps``. The state is symmetrized after every step.

    :param rhs: The right-hand side.
    :param p0: The initial covariance.
    :param t_end: The final time.
    :param n_steps: The number of steps.
    :return: The covariance at ``t_end``.
    :raises CovarianceIntegrationError: If the state loses positive definiteness.
    """
    if n_steps < 1:
        raise ValueError(f"At least one step is required, got {n_steps}.")

    h = t_end / n_steps
    p = np.atleast_2d(np.array(p0, dtype=float))

    for step in range(n_steps):
        k1 = rhs(p)
        k2 = rhs(p + 0.5 * h * k1)
        k3 = rhs(p + 0.5 * h * k2)
        k4 = rhs(p + h * k3)

        p = p + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        p = 0.5 * (p + p.T)

        if not _is_positive_definite(p):
            raise CovarianceIntegrationError(f"Covariance lost positive definiteness in step {step + 1} "
                                             f"of {n_steps}; reduce the step size.")

    return p

def integrate_covariance(p0: np.ndarray, b: np.ndarray, delta: float, beta: float, t_end: float,
                         n_steps: int) -> CovarianceState:
    """
    Integrates the perturbed covariance ODE from ``p0`` to ``t_end``.

    :return: The covariance state at ``t_end``.
    """
    initial = CovarianceState(p0)

    def field(p: np.ndarray) -> np.ndarray:
        return covariance_ode_rhs(p, b, delta, beta)

    return CovarianceState(integrate_matrix_ode(field, initial.p, t_end, n_steps), t_end)
