"""
Module contains the ensemble container and the exact linear-algebra primitives that operate on it: the
centering projection, the ensemble mean, the deviations matrix, the empirical covariance and the recombination
of deviations and mean into a new ensemble.
"""

from typing import Optional, Union
import numpy as np

class InvalidEnsembleSizeError(ValueError):
    """
    Raised if an ensemble has fewer than two particles.
    """

class NonFiniteValueError(ValueError):
    """
    Raised if a state or forward-map value contains NaN or infinite entries. Carries the index of the
    first offending particle and, if known, the iteration in which the value was produced.
    """
    def __init__(self, message: str, particle: Optional[int] = None, iteration: Optional[int] = None):
        super().__init__(message)
        self.particle = particle
        self.iteration = iteration

def check_finite(matrix: np.ndarray, what: str, iteration: Optional[int] = None):
    """
    Ensures all entries of a matrix, whose columns are associated with particles, are finite.

    :param matrix: The matrix to check, one column per particle. Vectors are treated as a single column.
    :param what: Human readable name of the checked quantity, used in the error message.
    :param iteration: Optional iteration index reported in the error.
    :raises NonFiniteValueError: If any entry is NaN or infinite.
    """
    values = np.asarray(matrix, dtype=float)

    if values.ndim == 1:
        values = values[:, np.newaxis]

    finite = np.isfinite(values)

    if finite.all():
        return

    particle = int(np.flatnonzero(~finite.all(axis=0))[0])
    location = f" in iteration {iteration}" if iteration is not None else ""

    raise NonFiniteValueError(f"The {what} of particle {particle} contains non-finite values{location}.",
                              particle=particle, iteration=iteration)

class Ensemble:
    """
    Core class representing an ensemble of particles. Particle ``k`` is stored as column ``k`` of the
    ``N_x x K`` states matrix.
    """
    def __init__(self, states: np.ndarray):
        """
        Constructs a new ensemble from its states matrix.

        :param states: The ``N_x x K`` states matrix.
        :raises InvalidEnsembleSizeError: If the ensemble has fewer than two particles.
        :raises NonFiniteValueError: If any state is not finite.
        """
        states = np.array(states, dtype=float)

        if states.ndim != 2:
            raise ValueError("The states of an ensemble must be a two-dimensional matrix.")

        if states.shape[0] < 1:
            raise ValueError("The state dimension of an ensemble must be positive.")

        if states.shape[1] < 2:
            raise InvalidEnsembleSizeError(f"An ensemble requires at least 2 particles, got {states.shape[1]}.")

        check_finite(states, "state")

        states.flags.writeable = False
        self._states = states

    @property
    def states(self) -> np.ndarray:
        """
        Returns the states matrix. The returned array is read-only.

        :return: The ``N_x x K`` states matrix.
        """
        return self._states

    @property
    def n_x(self) -> int:
        """
        Returns the state dimension.

        :return: The number of rows of the states matrix.
        """
        return self._states.shape[0]

    @property
    def k_particles(self) -> int:
        """
        Returns the ensemble size.

        :return: The number of particles.
        """
        return self._states.shape[1]

    def particle(self, k: int) -> np.ndarray:
        """
        Returns the state of a single particle.

        :param k: The particle index.
        :return: A copy of column ``k``.
        """
        if k < 0 or k >= self.k_particles:
            raise IndexError(f"Particle index {k} out of range for an ensemble of {self.k_particles} particles.")

        return self._states[:, k].copy()

    @staticmethod
    def from_mean_and_deviations(mean: np.ndarray, dev: Union["DeviationMatrix", np.ndarray]) -> "Ensemble":
        """
        Constructs an ensemble from a mean and a deviations matrix, see :func:`recombine`.

        :param mean: The ensemble mean.
        :param dev: The deviations.
        :return: The recombined ensemble.
        """
        return recombine(dev, mean)

    def __str__(self) -> str:
        return f"Ensemble(n_x={self.n_x}, k_particles={self.k_particles})"

    def __repr__(self) -> str:
        return self.__str__()

class DeviationMatrix:
    """
    Deviations of the particles from the ensemble mean, one column per particle.

    The columns of matrices produced by :func:`ensemble_deviations` sum to zero. Stepped or perturbed
    deviations may violate this until they are passed through :func:`recombine`.
    """
    def __init__(self, deviations: np.ndarray):
        """
        Constructs a new deviations matrix.

        :param deviations: The ``N_x x K`` deviations.
        """
        deviations = np.array(deviations, dtype=float)

        if deviations.ndim != 2:
            raise ValueError("A deviations matrix must be two-dimensional.")

        check_finite(deviations, "deviation")

        deviations.flags.writeable = False
        self._values = deviations

    @property
    def values(self) -> np.ndarray:
        """
        Returns the deviations. The returned array is read-only.

        :return: The ``N_x x K`` matrix.
        """
        return self._values

    @property
    def n_x(self) -> int:
        """
        Returns the state dimension.
        """
        return self._values.shape[0]

    @property
    def k_particles(self) -> int:
        """
        Returns the number of particles.
        """
        return self._values.shape[1]

    @property
    def centering_residual(self) -> float:
        """
        Returns the norm of the column sum relative to the largest column norm. Zero deviations give zero.

        :return: The relative centering residual.
        """
        scale = np.linalg.norm(self._values, axis=0).max(initial=0.0)

        if scale == 0.0:
            return 0.0

        return float(np.linalg.norm(self._values.sum(axis=1)) / scale)

def projection_matrix(k: int) -> np.ndarray:
    """
    Returns the symmetric centering projection ``I - (1/K) 1 1^T`` of size ``K x K``.

    :param k: The ensemble size.
    :return: The projection matrix.
    :raises InvalidEnsembleSizeError: If ``k < 2``.

    Examples
    --------
        >>> projection_matrix(2)
        array([[ 0.5, -0.5],
               [-0.5,  0.5]])
    """
    if k < 2:
        raise InvalidEnsembleSizeError(f"The projection matrix requires at least 2 particles, got {k}.")

    return np.eye(k) - np.full((k, k), 1.0 / k)

def ensemble_mean(e: Ensemble) -> np.ndarray:
    """
    Returns the empirical mean of the particle states.

    :param e: The ensemble.
    :return: The mean vector of length ``N_x``.
    """
    return e.states.mean(axis=1)

def ensemble_deviations(e: Ensemble) -> DeviationMatrix:
    """
    Returns the deviations of the particles from the ensemble mean. Computed by direct mean subtraction,
    which agrees with ``X @ projection_matrix(K)``.

    :param e: The ensemble.
    :return: The centered deviations.
    """
    return DeviationMatrix(e.states - ensemble_mean(e)[:, np.newaxis])

def empirical_covariance(e: Ensemble) -> np.ndarray:
    """
    Returns the empirical covariance ``(1/K) Y Y^T`` of the ensemble.

    :param e: The ensemble.
    :return: The symmetric positive semi-definite ``N_x x N_x`` covariance.
    """
    dev = ensemble_deviations(e).values
    cov = dev @ dev.T / e.k_particles

    return 0.5 * (cov + cov.T)

def recombine(dev: Union[DeviationMatrix, np.ndarray], mean: np.ndarray) -> Ensemble:
    """
    Builds the ensemble ``Y Pi_K + mean 1^T``. The projection re-centers the deviations, so the mean of the
    returned ensemble equals ``mean`` even if the columns of ``dev`` do not sum to zero.

    :param dev: The deviations.
    :param mean: The target ensemble mean.
    :return: The recombined ensemble.
    :raises ValueError: If the dimensions disagree.
    """
    values = dev.values if isinstance(dev, DeviationMatrix) else np.asarray(dev, dtype=float)
    mean = np.asarray(mean, dtype=float).ravel()

    if values.ndim != 2 or values.shape[0] != mean.shape[0]:
        raise ValueError(f"Deviations of shape {values.shape} do not match a mean of length {mean.shape[0]}.")

    centered = values - values.mean(axis=1, keepdims=True)

    return Ensemble(centered + mean[:, np.newaxis])
