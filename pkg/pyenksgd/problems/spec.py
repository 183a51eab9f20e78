"""
Module contains the black-box problem abstraction. A problem consists of a forward map ``G``, a loss ``D`` on
the observation space with known derivatives, optional regularizers ``R`` on the state space and ``T`` on the
observation space and their weights. The objective is ``Phi(x) = D(G(x)) + alpha_x R(x) + alpha_y T(G(x))``.

Problems are pure descriptions. Counting and noisy evaluation happen in a :class:`ForwardEvaluator` bound to a
single run.
"""

import inspect
import logging
import threading
from typing import Any, Callable, Dict, List, Optional, Union
from dataclasses import dataclass, field, replace
import numpy as np
import scipy.linalg

logger = logging.getLogger(__name__)

VectorFunction = Callable[[np.ndarray], np.ndarray]
ScalarFunction = Callable[[np.ndarray], float]

class ProblemDomainError(ValueError):
    """
    Raised if the loss is evaluated outside of its domain, e.g. the logarithm of a non-positive probability.
    """

class UnknownProblemError(KeyError):
    """
    Raised if a problem name cannot be resolved.
    """
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""

@dataclass
class NoiseModel:
    """
    Additive Gaussian noise ``eta ~ N(0, sigma^2 I)`` applied to every forward-map call.
    """
    sigma: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError(f"The noise level must be a non-negative number, got {self.sigma}.")

    @property
    def deterministic(self) -> bool:
        """
        Returns whether the model leaves the forward map unchanged.
        """
        return self.sigma == 0.0

@dataclass
class RegularizerParts:
    """
    A regularizer given by its value, gradient and Hessian. Each part is independently optional.
    """
    value: Optional[ScalarFunction] = None
    grad: Optional[VectorFunction] = None
    hess: Optional[VectorFunction] = None

class EvalCounter:
    """
    Thread-safe counter of forward-map evaluations.
    """
    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        """
        Returns the number of counted evaluations.
        """
        return self._count

    def increment(self, n: int = 1) -> int:
        """
        Adds ``n`` evaluations to the counter.

        :param n: The number of evaluations to add.
        :return: The updated count.
        """
        if n < 0:
            raise ValueError("An evaluation counter can not be decremented.")

        with self._lock:
            self._count += n
            return self._count

def apply_noise(y: np.ndarray, model: NoiseModel, rng: Optional[np.random.Generator]) -> np.ndarray:
    """
    Returns ``y + eta`` with a fresh draw ``eta ~ N(0, sigma^2 I)``. For ``sigma = 0`` the input is returned
    unchanged and no random numbers are consumed.

    :param y: The noiseless forward value.
    :param model: The noise model.
    :param rng: The random number generator of the run.
    :return: The noisy forward value.
    """
    y = np.asarray(y, dtype=float)

    if model.deterministic:
        return y

    if rng is None:
        raise ValueError("A random number generator is required to apply non-zero noise.")

    return y + model.sigma * rng.standard_normal(y.shape)

@dataclass
class ProblemSpec:
    """
    Black-box problem description.

    ``forward_map`` is the deterministic map ``G``. The loss callbacks ``loss_value``, ``loss_grad`` and
    ``loss_hess`` compute ``D``, its gradient and its Hessian on the observation space. ``x0`` is the standard
    starting point and ``data`` holds simulated datasets for inspection.
    """
    name: str
    n_x: int
    n_y: int
    forward_map: VectorFunction
    loss_value: ScalarFunction
    loss_grad: Optional[VectorFunction] = None
    loss_hess: Optional[VectorFunction] = None
    reg_x: Optional[RegularizerParts] = None
    reg_y: Optional[RegularizerParts] = None
    alpha_x: float = 0.0
    alpha_y: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    x0: Optional[np.ndarray] = None
    data: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError(f"Problem dimensions must be positive, got n_x={self.n_x} and n_y={self.n_y}.")

        if self.alpha_x < 0 or self.alpha_y < 0:
            raise ValueError("Regularization weights must be non-negative.")

        if self.x0 is not None:
            self.x0 = np.asarray(self.x0, dtype=float).ravel()

            if self.x0.shape[0] != self.n_x:
                raise ValueError(f"The starting point has length {self.x0.shape[0]}, expected {self.n_x}.")

    @property
    def uses_reg_x(self) -> bool:
        """
        Returns whether the state-space regularizer contributes to the objective.
        """
        return self.reg_x is not None and self.alpha_x > 0

    @property
    def uses_reg_y(self) -> bool:
        """
        Returns whether the observation-space regularizer contributes to the objective.
        """
        return self.reg_y is not None and self.alpha_y > 0

    def objective(self, y: np.ndarray, x: np.ndarray) -> float:
        """
        Assembles ``Phi`` from a forward value ``y`` and the state ``x`` it belongs to. Does not call the
        forward map.

        :param y: The (possibly noisy) forward value at ``x``.
        :param x: The state.
        :return: The objective value.
        """
        phi = float(self.loss_value(y))

        if self.uses_reg_x:
            if self.reg_x.value is None:
                raise ValueError(f"Problem '{self.name}' has no value callback for its state regularizer.")

            phi += self.alpha_x * float(self.reg_x.value(x))

        if self.uses_reg_y:
            if self.reg_y.value is None:
                raise ValueError(f"Problem '{self.name}' has no value callback for its observation regularizer.")

            phi += self.alpha_y * float(self.reg_y.value(y))

        return phi

    def noiseless_objective(self, x: np.ndarray) -> float:
        """
        Evaluates ``Phi(x)`` with the deterministic forward map. The call is not counted.

        :param x: The state.
        :return: The objective value.
        """
        x = np.asarray(x, dtype=float)
        return self.objective(np.asarray(self.forward_map(x), dtype=float), x)

    def evaluator(self, rng: Optional[np.random.Generator] = None,
                  counter: Optional[EvalCounter] = None) -> "ForwardEvaluator":
        """
        Binds the problem to a run.

        :param rng: The random number generator of the run, used for the forward-map noise.
        :param counter: Optional shared evaluation counter.
        :return: A new forward evaluator.
        """
        return ForwardEvaluator(self, rng, counter)

class ForwardEvaluator:
    """
    Evaluates the forward map of a problem on behalf of one run. Every call to :meth:`forward` counts as one
    evaluation and draws fresh noise from the run's generator.
    """
    def __init__(self, spec: ProblemSpec, rng: Optional[np.random.Generator] = None,
                 counter: Optional[EvalCounter] = None):
        """
        :param spec: The problem to evaluate.
        :param rng: The generator used for noise draws. Only required for noisy problems.
        :param counter: The evaluation counter. A fresh counter is created if omitted.
        """
        self._spec = spec
        self._rng = rng
        self._counter = counter if counter is not None else EvalCounter()

        if rng is None and not spec.noise.deterministic:
            self._rng = np.random.default_rng()
            logger.warning("Noisy problem '%s' evaluated without a seeded generator.", spec.name)

    @property
    def spec(self) -> ProblemSpec:
        """
        Returns the evaluated problem.
        """
        return self._spec

    @property
    def counter(self) -> EvalCounter:
        """
        Returns the evaluation counter.
        """
        return self._counter

    @property
    def evaluations(self) -> int:
        """
        Returns the number of forward-map calls so far.
        """
        return self._counter.count

    def forward(self, x: np.ndarray) -> np.ndarray:
        """
        Evaluates the (noisy) forward map ``F(x) = G(x) + eta``.

        :param x: The state.
        :return: The forward value of length ``N_y``.
        """
        y = np.asarray(self._spec.forward_map(np.asarray(x, dtype=float)), dtype=float).ravel()
        self._counter.increment()

        if y.shape[0] != self._spec.n_y:
            raise ValueError(f"Forward map of '{self._spec.name}' returned {y.shape[0]} values, "
                             f"expected {self._spec.n_y}.")

        return apply_noise(y, self._spec.noise, self._rng)

    def phi(self, x: np.ndarray) -> float:
        """
        Evaluates ``Phi(x)`` at the cost of one forward-map call.

        :param x: The state.
        :return: The objective value.
        """
        return self._spec.objective(self.forward(x), np.asarray(x, dtype=float))

def as_evaluator(problem: Union[ProblemSpec, ForwardEvaluator]) -> ForwardEvaluator:
    """
    Returns ``problem`` if it already is an evaluator, else binds a fresh one.

    :param problem: A problem or evaluator.
    :return: The forward evaluator.
    """
    if isinstance(problem, ForwardEvaluator):
        return problem

    if isinstance(problem, ProblemSpec):
        return problem.evaluator()

    raise TypeError(f"Expected a ProblemSpec or ForwardEvaluator, got {type(problem).__name__}.")

def affine_reparameterization(problem: ProblemSpec, a: np.ndarray, b: np.ndarray) -> ProblemSpec:
    """
    Returns the problem ``x~ -> Phi(A x~ + b)``. Regularizer derivatives on the state space follow the chain
    rule, the starting point is mapped to ``A^{-1} (x0 - b)``.

    :param problem: The original problem.
    :param a: The invertible ``N_x x N_x`` matrix.
    :param b: The shift vector.
    :return: The reparameterized problem.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float).ravel()

    if a.shape != (problem.n_x, problem.n_x) or b.shape != (problem.n_x,):
        raise ValueError(f"An affine map for problem '{problem.name}' requires a {problem.n_x}x{problem.n_x} "
                         f"matrix and a shift of length {problem.n_x}.")

    def to_original(x: np.ndarray) -> np.ndarray:
        return a @ np.asarray(x, dtype=float) + b

    reg_x = None

    if problem.reg_x is not None:
        parts = problem.reg_x
        reg_x = RegularizerParts(
            value=(lambda x: parts.value(to_original(x))) if parts.value is not None else None,
            grad=(lambda x: a.T @ parts.grad(to_original(x))) if parts.grad is not None else None,
            hess=(lambda x: a.T @ parts.hess(to_original(x)) @ a) if parts.hess is not None else None)

    x0 = scipy.linalg.solve(a, problem.x0 - b) if problem.x0 is not None else None

    return replace(problem, name=f"{problem.name}_affine",
                   forward_map=lambda x: problem.forward_map(to_original(x)),
                   reg_x=reg_x, x0=x0)

_REGISTRY: Dict[str, Callable[..., ProblemSpec]] = {}

def register_problem(name: str, factory: Callable[..., ProblemSpec], overwrite: bool = False):
    """
    Registers a problem factory under a name, making it available to :func:`get_problem` and the command line.

    :param name: The problem name.
    :param factory: Callable returning a :class:`ProblemSpec`. Keyword parameters it does not accept are
        dropped by :func:`get_problem`.
    :param overwrite: Whether an existing registration may be replaced.
    """
    if not callable(factory):
        raise TypeError("A problem factory must be callable.")

    if name in _REGISTRY and not overwrite:
        raise ValueError(f"A problem named '{name}' is already registered.")

    _REGISTRY[name] = factory

def available_problems() -> List[str]:
    """
    Returns the names of all registered problems in alphabetical order.
    """
    return sorted(_REGISTRY)

def get_problem(name: str, **params: Any) -> ProblemSpec:
    """
    Constructs a registered problem.

    :param name: The problem name.
    :param params: Factory parameters, e.g. ``sigma``, ``seed`` or ``dimension``. ``None`` values and
        parameters the factory does not accept are ignored.
    :return: The problem.
    :raises UnknownProblemError: If no problem of that name is registered.
    """
    if name not in _REGISTRY:
        raise UnknownProblemError(f"Unknown problem '{name}'. Available problems: {', '.join(available_problems())}.")

    factory = _REGISTRY[name]
    params = {key: value for key, value in params.items() if value is not None}
    signature = inspect.signature(factory)

    if not any(p.kind == inspect.Parameter.VAR_KEYWORD for p in signature.parameters.values()):
        params = {key: value for key, value in params.items() if key in signature.parameters}

    return factory(**params)
