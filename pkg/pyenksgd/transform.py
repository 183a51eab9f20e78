"""
Module contains the ensemble transform kernels: construction of the transform matrix and its square root, the
deviation updates of the EnKSGD and EnKF variants, Gaussian perturbations and the clipping of deviation columns.
"""

from enum import Enum
from dataclasses import dataclass
import numpy as np
import scipy.linalg
from pyenksgd.ensemble import DeviationMatrix

# Added to the singular values of I + (dt / (delta K)) H before inversion
SVD_JITTER = 1e-7

class NonPositiveTransformError(ValueError):
    """
    Raised if ``I + (dt / (delta K)) H`` is not positive definite, which happens for indefinite projected
    Hessians and too large steps.
    """

class UpdateVariant(str, Enum):
    """
    Deviation update rule.

    ``ENKSGD`` scales the transformed deviations by ``exp(dt / 2)``, ``ENKF`` omits the growth factor.
    """
    ENKSGD = "enksgd"
    ENKF = "enkf"

@dataclass
class TransformPair:
    """
    The ``K x K`` transform matrix ``T`` and its symmetric square root.
    """
    t: np.ndarray
    t_sqrt: np.ndarray

    @staticmethod
    def identity(k: int) -> "TransformPair":
        """
        Returns the exact identity pair, used when the line search fails.

        :param k: The ensemble size.
        """
        return TransformPair(np.eye(k), np.eye(k))

def transform_matrix(h_proj: np.ndarray, dt: float, delta: float, k: int) -> TransformPair:
    """
    Computes ``T = M^{-1}`` and ``T^{1/2} = M^{-1/2}`` for ``M = I + (dt / (delta K)) h_proj``. Both are taken from
    the singular value decomposition ``M = U S U^T`` with ``S`` replaced by ``S + 1e-7``.

    :param h_proj: The symmetric projected Hessian.
    :param dt: The step size.
    :param delta: The scale parameter.
    :param k: The ensemble size.
    :return: The transform pair.
    :raises NonPositiveTransformError: If ``M`` has an eigenvalue that the jitter does not lift above zero.

    Examples
    --------
        >>> transform_matrix(np.array([[3.0]]), dt=1.0, delta=1.0, k=1).t
        array([[0.24999999]])
    """
    if dt < 0:
        raise ValueError(f"The step size must be non-negative, got {dt}.")

    if delta <= 0:
        raise ValueError(f"The scale parameter must be positive, got {delta}.")

    h_proj = np.atleast_2d(np.asarray(h_proj, dtype=float))

    if h_proj.shape != (k, k):
        raise ValueError(f"The projected Hessian has shape {h_proj.shape}, expected ({k}, {k}).")

    m = np.eye(k) + (dt / (delta * k)) * h_proj
    m = 0.5 * (m + m.T)

    smallest = scipy.linalg.eigvalsh(m)[0]

    if smallest + SVD_JITTER <= 0:
        raise NonPositiveTransformError(f"I + (dt / (delta K)) H is not positive definite for dt={dt} "
                                        f"(smallest eigenvalue {smallest:.3e}).")

    u, s, _ = scipy.linalg.svd(m)
    s = s + SVD_JITTER
    t = (u / s) @ u.T
    t_sqrt = (u / np.sqrt(s)) @ u.T

    return TransformPair(0.5 * (t + t.T), 0.5 * (t_sqrt + t_sqrt.T))

def deviations_step(dev: DeviationMatrix, tp: TransformPair, dt: float, variant: UpdateVariant, beta: float,
                    delta: float, xi: np.ndarray) -> DeviationMatrix:
    """
    Advances the deviations by one step.

    ``ENKSGD``: ``exp(dt / 2) Y T^{1/2} + sqrt(beta delta dt) Xi``
    ``ENKF``: ``Y T^{1/2} + sqrt(beta delta dt) Xi``

    :param dev: The current deviations.
    :param tp: The transform pair of the accepted step.
    :param dt: The accepted step size, zero after a failed line search.
    :param variant: The update rule.
    :param beta: The perturbation strength.
    :param delta: The scale parameter.
    :param xi: The ``N_x x K`` standard Gaussian perturbations.
    :return: The new deviations, not yet re-centered.
    """
    if dt < 0:
        raise ValueError(f"The step size must be non-negative, got {dt}.")

    if beta < 0:
        raise ValueError(f"The perturbation strength must be non-negative, got {beta}.")

    xi = np.asarray(xi, dtype=float)

    if xi.shape != dev.values.shape:
        raise ValueError(f"Perturbations of shape {xi.shape} do not match deviations of shape {dev.values.shape}.")

    stepped = dev.values @ tp.t_sqrt

    if UpdateVariant(variant) is UpdateVariant.ENKSGD:
        stepped = np.exp(dt / 2) * stepped

    return DeviationMatrix(stepped + np.sqrt(beta * delta * dt) * xi)

def clip_deviations(dev: DeviationMatrix, gamma_lb: float, gamma_ub: float, n_x: int) -> DeviationMatrix:
    """
    Bounds the size of every deviation column. A column ``c`` with ``|c| / N_x > gamma_ub`` is rescaled to norm
    ``gamma_ub``; afterwards a non-zero column with ``|c| / N_x < gamma_lb`` is rescaled to norm ``gamma_lb``.

    :param dev: The deviations.
    :param gamma_lb: The lower bound.
    :param gamma_ub: The upper bound, may be infinite.
    :param n_x: The state dimension.
    :return: The clipped deviations.
    """
    if gamma_lb < 0 or gamma_ub <= gamma_lb:
        raise ValueError(f"Invalid deviation bounds gamma_lb={gamma_lb}, gamma_ub={gamma_ub}.")

    values = dev.values
    norms = np.linalg.norm(values, axis=0)
    scales = np.ones_like(norms)

    upper = norms / n_x > gamma_ub
    scales[upper] = gamma_ub / norms[upper]

    clipped_norms = norms * scales
    lower = (clipped_norms / n_x < gamma_lb) & (clipped_norms > 0)
    scales[lower] = gamma_lb / norms[lower]

    if not (upper.any() or lower.any()):
        return dev

    return DeviationMatrix(values * scales)

def gaussian_perturbations(n_x: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draws an ``N_x x K`` matrix of independent standard Gaussian entries.

    :param n_x: The state dimension.
    :param k: The ensemble size.
    :param rng: The generator of the run.
    :return: The perturbations.
    """
    return rng.standard_normal((n_x, k))
