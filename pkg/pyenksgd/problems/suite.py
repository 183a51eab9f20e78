"""
Module contains the built-in benchmark problems: an ill-conditioned linear least squares problem, a small
nonlinear least squares suite, Poisson regression on simulated count data and a regularized signal
reconstruction through a saturating amplifier.
"""

from typing import Callable, Dict, Optional, Tuple
import numpy as np
import scipy.sparse
from scipy.special import gammaln
from pyenksgd.problems.spec import (ProblemSpec, RegularizerParts, NoiseModel, ProblemDomainError,
                                    UnknownProblemError, register_problem, get_problem, available_problems)

def _least_squares_loss(y_obs: np.ndarray) -> Tuple[Callable, Callable, Callable]:
    """
    Returns value, gradient and Hessian of ``D(y) = 1/2 |y - y_obs|^2``.
    """
    identity = np.eye(y_obs.shape[0])

    def value(y: np.ndarray) -> float:
        return 0.5 * float(np.sum((y - y_obs) ** 2))

    def grad(y: np.ndarray) -> np.ndarray:
        return y - y_obs

    def hess(_: np.ndarray) -> np.ndarray:
        return identity

    return value, grad, hess

def _quadratic_form(matrix: np.ndarray) -> RegularizerParts:
    """
    Returns the regularizer ``1/2 |M x|^2`` with analytic derivatives.
    """
    gram = matrix.T @ matrix

    return RegularizerParts(value=lambda x: 0.5 * float(np.sum((matrix @ x) ** 2)),
                            grad=lambda x: gram @ x,
                            hess=lambda _: gram)

def linear_ls_problem(n: int = 13, sigma: float = 0.0) -> ProblemSpec:
    """
    Linear least squares ``Phi(x) = 1/2 |G x|^2`` with diagonal ``g_ii = 10^(-2 + 0.5 (i - 1))``, minimized at 0.
    The condition number grows by one order of magnitude per state component.

    :param n: The dimension.
    :param sigma: The forward-map noise level.
    :return: The problem, starting at ``10^5 1``.
    """
    if n < 1:
        raise ValueError(f"The dimension must be positive, got {n}.")

    diagonal = 10.0 ** (-2 + 0.5 * np.arange(n))
    value, grad, hess = _least_squares_loss(np.zeros(n))

    return ProblemSpec(name="linear_ls", n_x=n, n_y=n, forward_map=lambda x: diagonal * x, loss_value=value,
                       loss_grad=grad, loss_hess=hess, noise=NoiseModel(sigma), x0=np.full(n, 1e5),
                       data={"g_diagonal": diagonal})

def quadratic_problem(g: float = 1.0, y_obs: float = 1.0, sigma: float = 0.0) -> ProblemSpec:
    """
    One-dimensional quadratic ``Phi(x) = 1/2 (g x - y_obs)^2`` with minimizer ``y_obs / g``.

    :param g: The slope.
    :param y_obs: The observation.
    :param sigma: The forward-map noise level.
    :return: The problem, starting at 0.
    """
    value, grad, hess = _least_squares_loss(np.array([float(y_obs)]))

    return ProblemSpec(name="quadratic", n_x=1, n_y=1, forward_map=lambda x: g * np.asarray(x, dtype=float),
                       loss_value=value, loss_grad=grad, loss_hess=hess, noise=NoiseModel(sigma),
                       x0=np.zeros(1))

def _rosenbrock(x: np.ndarray) -> np.ndarray:
    return np.array([1 - x[0], 10 * (x[1] - x[0] ** 2)])

_GULF_M = 99

def _gulf_residuals(abscissae: np.ndarray, targets: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    def residuals(x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.exp(-np.abs(abscissae - x[1]) ** x[2] / x[0]) - targets

    return residuals

def _mgh11() -> Callable[[np.ndarray], np.ndarray]:
    # Gulf research and development function
    t = np.arange(1, _GULF_M + 1) / 100
    y = 25 + (-50 * np.log(t)) ** (2 / 3)

    return _gulf_residuals(y, t)

def _hs25() -> Callable[[np.ndarray], np.ndarray]:
    i = np.arange(1, _GULF_M + 1)
    u = 25 + (-50 * np.log(0.01 * i)) ** (2 / 3)

    return _gulf_residuals(u, 0.01 * i)

def _mgh18() -> Callable[[np.ndarray], np.ndarray]:
    # Biggs EXP6 function
    t = 0.1 * np.arange(1, 14)
    y = np.exp(-t) - 5 * np.exp(-10 * t) + 3 * np.exp(-4 * t)

    def residuals(x: np.ndarray) -> np.ndarray:
        return x[2] * np.exp(-t * x[0]) - x[3] * np.exp(-t * x[1]) + x[5] * np.exp(-t * x[4]) - y

    return residuals

# name -> (residual factory, number of residuals, standard starting point)
NLS_PROBLEMS: Dict[str, Tuple[Callable[[], Callable], int, Tuple[float, ...]]] = {
    "nls_rosenbrock": (lambda: _rosenbrock, 2, (-1.2, 1.0)),
    "hs25": (_hs25, _GULF_M, (100.0, 12.5, 3.0)),
    "mgh11": (_mgh11, _GULF_M, (5.0, 2.5, 0.15)),
    "mgh18": (_mgh18, 13, (1.0, 2.0, 1.0, 1.0, 1.0, 1.0)),
}

def nls_problem(name: str, sigma: float = 0.0) -> ProblemSpec:
    """
    Nonlinear least squares ``Phi(x) = 1/2 |f(x)|^2`` from the classic test collections. Names outside the
    built-in set are looked up among the registered problems.

    :param name: One of ``nls_rosenbrock``, ``hs25``, ``mgh11``, ``mgh18`` or a registered name.
    :param sigma: The forward-map noise level.
    :return: The problem, starting at the collection's standard point.
    :raises UnknownProblemError: If the name is neither built in nor registered.
    """
    if name not in NLS_PROBLEMS:
        if name in available_problems():
            return get_problem(name, sigma=sigma)

        raise UnknownProblemError(f"Unknown least squares problem '{name}'. "
                                  f"Built-in problems: {', '.join(sorted(NLS_PROBLEMS))}.")

    factory, m, start = NLS_PROBLEMS[name]
    residuals = factory()
    value, grad, hess = _least_squares_loss(np.zeros(m))

    return ProblemSpec(name=name, n_x=len(start), n_y=m, forward_map=residuals, loss_value=value,
                       loss_grad=grad, loss_hess=hess, noise=NoiseModel(sigma), x0=np.array(start))

POISSON_N_X = 41
POISSON_N_Y = 189

def _negative_log_loss() -> Tuple[Callable, Callable, Callable]:
    """
    Returns value, gradient and Hessian of ``D(y) = -sum(log y)``.
    """
    def require_positive(y: np.ndarray):
        if np.any(y <= 0):
            raise ProblemDomainError(f"The negative log likelihood requires positive probabilities, "
                                     f"got minimum {np.min(y):.3e}.")

    def value(y: np.ndarray) -> float:
        require_positive(y)
        return -float(np.sum(np.log(y)))

    def grad(y: np.ndarray) -> np.ndarray:
        require_positive(y)
        return -1 / y

    def hess(y: np.ndarray) -> np.ndarray:
        require_positive(y)
        return np.diag(1 / y ** 2)

    return value, grad, hess

def poisson_regression_problem(seed: int = 0, sigma: float = 0.0, n_x: int = POISSON_N_X,
                               n_y: int = POISSON_N_Y) -> ProblemSpec:
    """
    Maximum likelihood Poisson regression on a simulated dataset. Features ``a_i ~ N(0, S)`` with diagonal
    ``S_mm = 10^(-5 + 0.1 (m - 1))``, a true parameter ``x* ~ N(0, I)`` and counts ``b_i ~ Pois(exp(a_i^T x*))``.
    The forward map returns the per-datum probabilities ``exp(b_i a_i^T x - exp(a_i^T x)) / b_i!`` and the loss
    is their negative log likelihood.

    :param seed: The seed of the dataset simulation.
    :param sigma: The forward-map noise level.
    :param n_x: The number of features.
    :param n_y: The number of data points.
    :return: The problem, starting at ``2.5 1``.
    """
    rng = np.random.default_rng(seed)
    variances = 10.0 ** (-5 + 0.1 * np.arange(n_x))
    features = rng.standard_normal((n_y, n_x)) * np.sqrt(variances)
    x_true = rng.standard_normal(n_x)
    counts = rng.poisson(np.exp(features @ x_true)).astype(float)
    log_factorials = gammaln(counts + 1)

    def forward_map(x: np.ndarray) -> np.ndarray:
        eta = features @ x
        return np.exp(counts * eta - np.exp(eta) - log_factorials)

    value, grad, hess = _negative_log_loss()

    return ProblemSpec(name="poisson", n_x=n_x, n_y=n_y, forward_map=forward_map, loss_value=value,
                       loss_grad=grad, loss_hess=hess, noise=NoiseModel(sigma), x0=np.full(n_x, 2.5),
                       data={"features": features, "counts": counts, "x_true": x_true,
                             "feature_variances": variances})

def poisson_negative_log_likelihood(problem: ProblemSpec, x: np.ndarray) -> float:
    """
    Evaluates ``sum_i exp(a_i^T x) - b_i a_i^T x + log(b_i!)`` directly from the simulated data of a Poisson
    problem, without forming the probabilities.

    :param problem: A problem built by :func:`poisson_regression_problem`.
    :param x: The parameter.
    :return: The negative log likelihood.
    """
    features, counts = problem.data["features"], problem.data["counts"]
    eta = features @ np.asarray(x, dtype=float)

    return float(np.sum(np.exp(eta) - counts * eta + gammaln(counts + 1)))

SIGNAL_N = 101
SIGNAL_GAIN = 100.0
SIGNAL_SATURATION = 25.0
SIGNAL_NOISE = 15.0

def rectified_sine(t: np.ndarray, amplitude: float = 20.0, frequency: float = 3.0) -> np.ndarray:
    """
    Returns the half-wave rectified signal ``max(0, amplitude sin(2 pi frequency t))``.
    """
    return np.maximum(0.0, amplitude * np.sin(2 * np.pi * frequency * np.asarray(t, dtype=float)))

def signal_reconstruction_problem(seed: int = 0, sigma: float = 0.0, n: int = SIGNAL_N,
                                  alpha_x: float = 1e10, alpha_y: float = 5.0,
                                  measurement_noise: Optional[float] = None) -> ProblemSpec:
    """
    Reconstruction of a rectified sine measured through the amplifier ``G(x) = 100 tanh(x / 25)``.

    The loss is ``1/2 |y - y_obs|^2``. ``R(x) = 1/2 (x_1^2 + x_n^2)`` pins the end points and
    ``T(y) = 1/2 |F y|^2``, with ``F`` the forward difference matrix, smooths the amplified signal. The target is
    sampled at ``t_i = (i - 1) / (n - 1)`` and observed with ``N(0, 15^2)`` measurement noise.

    :param seed: The seed of the measurement noise.
    :param sigma: The forward-map noise level during optimization.
    :param n: The number of samples.
    :param alpha_x: The weight of ``R``.
    :param alpha_y: The weight of ``T``.
    :param measurement_noise: Standard deviation of the measurement noise, 15 if omitted.
    :return: The problem, starting at 0.
    """
    if n < 2:
        raise ValueError(f"The signal requires at least 2 samples, got {n}.")

    measurement_noise = SIGNAL_NOISE if measurement_noise is None else measurement_noise
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, 1.0, n)
    target = rectified_sine(t)

    def forward_map(x: np.ndarray) -> np.ndarray:
        return SIGNAL_GAIN * np.tanh(np.asarray(x, dtype=float) / SIGNAL_SATURATION)

    y_obs = forward_map(target) + measurement_noise * rng.standard_normal(n)
    value, grad, hess = _least_squares_loss(y_obs)

    boundary = np.zeros((n, n))
    boundary[0, 0] = boundary[-1, -1] = 1.0
    differences = scipy.sparse.diags([np.ones(n - 1), -np.ones(n - 1)], [0, 1], shape=(n - 1, n)).toarray()

    return ProblemSpec(name="signal", n_x=n, n_y=n, forward_map=forward_map, loss_value=value,
                       loss_grad=grad, loss_hess=hess, reg_x=_quadratic_form(boundary),
                       reg_y=_quadratic_form(differences), alpha_x=alpha_x, alpha_y=alpha_y,
                       noise=NoiseModel(sigma), x0=np.zeros(n),
                       data={"t": t, "target": target, "y_obs": y_obs})

def _register_builtins():
    register_problem("linear_ls", lambda dimension=13, sigma=0.0: linear_ls_problem(dimension, sigma), overwrite=True)
    register_problem("quadratic", lambda sigma=0.0: quadratic_problem(sigma=sigma), overwrite=True)
    register_problem("poisson", lambda seed=0, sigma=0.0: poisson_regression_problem(seed, sigma), overwrite=True)
    register_problem("signal", lambda seed=0, sigma=0.0: signal_reconstruction_problem(seed, sigma), overwrite=True)

    for name in NLS_PROBLEMS:
        register_problem(name, lambda sigma=0.0, _name=name: nls_problem(_name, sigma), overwrite=True)

_register_builtins()
