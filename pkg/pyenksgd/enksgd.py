"""
Module contains the optimizers: the ensemble Kalman-Stein gradient descent (and its EnKF-type variant), which
estimates preconditioned gradients from an ensemble of forward evaluations, and a central finite difference
gradient descent baseline. Both use the same backtracking line search and the same evaluation accounting, one
count per forward-map call.
"""

import logging
from typing import Any, Dict, List, NamedTuple, Optional, TYPE_CHECKING, Union
from dataclasses import dataclass, asdict
import numpy as np
from tabulate import tabulate
from pyenksgd.ensemble import DeviationMatrix, NonFiniteValueError, recombine, check_finite
from pyenksgd.problems.spec import ProblemSpec, ForwardEvaluator, ProblemDomainError, as_evaluator
from pyenksgd.stein import EvaluatedEnsemble, projected_gradient, projected_hessian
from pyenksgd.transform import (TransformPair, UpdateVariant, NonPositiveTransformError, transform_matrix,
                                deviations_step, clip_deviations, gaussian_perturbations)

if TYPE_CHECKING:
    import pandas as pd

logger = logging.getLogger(__name__)

@dataclass
class OptimizerConfig:
    """
    Tunables of the optimizers. Line-search constants, deviation bounds and the initial deviation scale default
    to the values used throughout the benchmarks.
    """
    particles: int = 8
    beta: float = 0.0
    delta: float = 1.0
    mu_ls: float = 1.0
    c_ls: float = 1e-4
    tau_ls: float = 0.1
    l_max: int = 15
    gamma_lb: float = 1e-4
    gamma_ub: float = 1e4
    n_max: int = 1000
    variant: UpdateVariant = UpdateVariant.ENKSGD
    sigma_0: float = 1e-2
    budget: Optional[int] = None
    seed: Optional[int] = None
    record_means: bool = False

    def __post_init__(self):
        self.variant = UpdateVariant(self.variant)

    def validate(self) -> "OptimizerConfig":
        """
        Checks all bounds.

        :return: The config itself.
        :raises ValueError: Naming the first invalid field.
        """
        checks = [
            ("particles", self.particles >= 2),
            ("beta", self.beta >= 0),
            ("delta", self.delta > 0),
            ("mu_ls", self.mu_ls > 0),
            ("c_ls", 0 < self.c_ls < 1),
            ("tau_ls", 0 < self.tau_ls < 1),
            ("l_max", self.l_max >= 0),
            ("gamma_lb", self.gamma_lb >= 0),
            ("gamma_ub", self.gamma_ub > self.gamma_lb),
            ("n_max", self.n_max >= 1),
            ("sigma_0", self.sigma_0 >= 0),
            ("budget", self.budget is None or self.budget >= 1),
        ]

        for name, valid in checks:
            if not valid:
                raise ValueError(f"Invalid optimizer setting {name}={getattr(self, name)!r}.")

        return self

    def to_dict(self) -> Dict[str, Any]:
        """
        Converts the config to a JSON compatible dictionary.
        """
        data = asdict(self)
        data["variant"] = self.variant.value

        return data

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "OptimizerConfig":
        """
        Constructs a config from a dictionary, ignoring unknown keys.
        """
        known = OptimizerConfig.__dataclass_fields__
        return OptimizerConfig(**{key: value for key, value in data.items() if key in known})

@dataclass
class IterationRecord:
    """
    Outcome of iteration ``n``: the objective at the new mean, the accepted step (0 after a failed line
    search), the backtracking index and the cumulative number of forward evaluations.
    """
    n: int
    phi_mean: float
    dt: float
    backtracks: int
    cumulative_evals: int
    mean: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, Any]:
        data = {"n": self.n, "phi_mean": self.phi_mean, "dt": self.dt, "backtracks": self.backtracks,
                "cumulative_evals": self.cumulative_evals}

        if self.mean is not None:
            data["mean"] = self.mean.tolist()

        return data

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "IterationRecord":
        mean = data.get("mean")
        return IterationRecord(n=int(data["n"]), phi_mean=float(data["phi_mean"]), dt=float(data["dt"]),
                               backtracks=int(data["backtracks"]), cumulative_evals=int(data["cumulative_evals"]),
                               mean=np.asarray(mean, dtype=float) if mean is not None else None)

@dataclass
class RunResult:
    """
    Trace and terminal statistics of one optimization run.
    """
    trace: List[IterationRecord]
    terminal_mean: np.ndarray
    terminal_phi: float
    total_evals: int
    method: str = UpdateVariant.ENKSGD.value
    seed: Optional[int] = None
    terminal_phi_noiseless: Optional[float] = None
    _columns = ["iter", "phi_mean", "dt", "backtracks", "cum_evals"]

    def __post_init__(self):
        if len(self.trace) == 0:
            raise ValueError("A run result requires a non-empty trace.")

        if self.terminal_phi != self.trace[-1].phi_mean:
            raise ValueError("The terminal objective must equal the objective of the last iteration.")

        self.terminal_mean = np.asarray(self.terminal_mean, dtype=float)

    @property
    def iterations(self) -> int:
        """
        Returns the number of completed iterations.
        """
        return len(self.trace)

    def _rows(self) -> List[List[Any]]:
        return [[r.n, r.phi_mean, r.dt, r.backtracks, r.cumulative_evals] for r in self.trace]

    def __str__(self) -> str:
        """
        Returns the trace as a plain-text table.
        """
        return tabulate(self._rows(), headers=self._columns)

    def __repr__(self) -> str:
        return (f"RunResult(method={self.method!r}, seed={self.seed}, iterations={self.iterations}, "
                f"terminal_phi={self.terminal_phi:.6e}, total_evals={self.total_evals})")

    def to_dict(self) -> Dict[str, Any]:
        """
        Converts the result to a JSON compatible dictionary.
        """
        return {"method": self.method, "seed": self.seed, "terminal_mean": self.terminal_mean.tolist(),
                "terminal_phi": self.terminal_phi, "terminal_phi_noiseless": self.terminal_phi_noiseless,
                "total_evals": self.total_evals, "trace": [record.to_dict() for record in self.trace]}

    @staticmethod
    def from_dict(data: Dict[str, Any]) -> "RunResult":
        """
        Constructs a result from its dictionary representation.
        """
        return RunResult(trace=[IterationRecord.from_dict(record) for record in data["trace"]],
                         terminal_mean=np.asarray(data["terminal_mean"], dtype=float),
                         terminal_phi=float(data["terminal_phi"]), total_evals=int(data["total_evals"]),
                         method=data.get("method", UpdateVariant.ENKSGD.value), seed=data.get("seed"),
                         terminal_phi_noiseless=data.get("terminal_phi_noiseless"))

    def to_pandas(self) -> "pd.DataFrame":
        """
        Converts the trace to a pandas data frame with one row per iteration.

        .. important::

            This method requires the pandas library to be installed. See `pandas`_ for more information.

        :return: The pandas data frame.

        .. _pandas: https://pandas.pydata.org/
        """
        try:
            # pylint: disable=import-outside-toplevel
            import pandas as pd
        except ImportError as exc:
            raise ImportError(
                "Pandas is not installed. Please install it using `pip install pandas`."
            ) from exc

        return pd.DataFrame(self._rows(), columns=self._columns)

class LineSearchResult(NamedTuple):
    """
    Outcome of the backtracking line search. On exhaustion ``dt`` is 0, the mean is unchanged, the transform is
    the identity and ``backtracks`` equals ``l_max``.
    """
    dt: float
    mean_next: np.ndarray
    transform: TransformPair
    backtracks: int
    phi_next: float

def _trial_objective(evaluator: ForwardEvaluator, x: np.ndarray) -> float:
    try:
        return evaluator.phi(x)
    except ProblemDomainError:
        # Counted, but the trial fails the decrease test
        return np.nan

def backtracking_line_search(phi_at_mean: float, q: np.ndarray, dev: DeviationMatrix, h_proj: np.ndarray,
                             problem: Union[ProblemSpec, ForwardEvaluator], config: OptimizerConfig,
                             mean: np.ndarray) -> LineSearchResult:
    """
    Searches ``dt = mu_ls tau_ls^l`` for ``l = 0, ..., l_max - 1`` and accepts the first proposal
    ``x' = mean - Y r`` with ``r = (dt / (delta K)) T q`` satisfying the sufficient decrease condition
    ``Phi(x') <= Phi(mean) - c_ls q^T r``. Every trial costs one forward evaluation.

    :param phi_at_mean: The objective at the current mean.
    :param q: The projected gradient.
    :param dev: The current deviations.
    :param h_proj: The projected Hessian, reused for every trial.
    :param problem: The problem or the run's evaluator.
    :param config: The optimizer config.
    :param mean: The current mean.
    :return: The line-search outcome.
    """
    evaluator = as_evaluator(problem)
    k = dev.k_particles
    mean = np.asarray(mean, dtype=float)

    for trial in range(config.l_max):
        dt = config.mu_ls * config.tau_ls ** trial

        try:
            tp = transform_matrix(h_proj, dt, config.delta, k)
        except NonPositiveTransformError:
            continue

        r = (dt / (config.delta * k)) * (tp.t @ q)
        proposal = mean - dev.values @ r
        phi_trial = _trial_objective(evaluator, proposal)

        if phi_trial <= phi_at_mean - config.c_ls * float(q @ r):
            return LineSearchResult(dt, proposal, tp, trial, phi_trial)

    return LineSearchResult(0.0, mean.copy(), TransformPair.identity(k), config.l_max, phi_at_mean)

def _budget_exhausted(evaluator: ForwardEvaluator, budget: Optional[int]) -> bool:
    return budget is not None and evaluator.evaluations >= budget

def _resolve_rng(config: OptimizerConfig, rng: Optional[np.random.Generator]) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(config.seed)

def _checked_start(problem: ProblemSpec, x0: np.ndarray) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float).ravel()

    if x0.shape[0] != problem.n_x:
        raise ValueError(f"The starting point has length {x0.shape[0]}, problem '{problem.name}' "
                         f"has dimension {problem.n_x}.")

    check_finite(x0, "starting point")

    return x0

def _finish(trace: List[IterationRecord], mean: np.ndarray, evaluator: ForwardEvaluator, method: str,
            seed: Optional[int]) -> RunResult:
    spec = evaluator.spec
    noiseless = trace[-1].phi_mean if spec.noise.deterministic else spec.noiseless_objective(mean)
    result = RunResult(trace=trace, terminal_mean=mean, terminal_phi=trace[-1].phi_mean,
                       total_evals=evaluator.evaluations, method=method, seed=seed,
                       terminal_phi_noiseless=noiseless)

    logger.info("Finished %s run (seed %s) after %d iterations: Phi=%.6e, %d evaluations.",
                method, seed, result.iterations, result.terminal_phi, result.total_evals)

    return result

def enksgd_minimize(problem: Union[ProblemSpec, ForwardEvaluator], x0: np.ndarray, config: OptimizerConfig,
                    initial_deviations: Optional[np.ndarray] = None,
                    rng: Optional[np.random.Generator] = None) -> RunResult:
    """
    Minimizes ``Phi`` with the ensemble Kalman-Stein gradient descent, or its EnKF-type variant depending on
    ``config.variant``.

    Each iteration evaluates the forward map at the ``K`` particles and at the mean, estimates the projected
    gradient and Hessian, runs the backtracking line search on the mean, steps and clips the deviations and
    recombines them with the new mean. The run stops after ``n_max`` iterations or after the iteration in which
    the evaluation budget is reached.

    The generator is consumed in a fixed order: the initial deviations, then per iteration the forward-map
    noise of the particles, the mean and the line-search trials, then the deviation perturbations.

    :param problem: The problem or an evaluator bound to this run.
    :param x0: The initial mean.
    :param config: The optimizer config.
    :param initial_deviations: Optional ``N_x x K`` deviations replacing the ``N(0, sigma_0^2)`` draw.
    :param rng: Optional generator, created from ``config.seed`` if omitted. Also used for forward-map noise
        when ``problem`` is a :class:`ProblemSpec`.
    :return: The run result.
    :raises NonFiniteValueError: If a forward value or the objective at the mean is not finite.
    """
    config.validate()
    rng = _resolve_rng(config, rng)
    evaluator = problem if isinstance(problem, ForwardEvaluator) else problem.evaluator(rng)
    spec = evaluator.spec
    mean = _checked_start(spec, x0)
    k = config.particles

    if initial_deviations is None:
        initial_deviations = config.sigma_0 * gaussian_perturbations(spec.n_x, k, rng)

    ensemble = recombine(initial_deviations, mean)
    dev = DeviationMatrix(ensemble.states - mean[:, np.newaxis])
    trace: List[IterationRecord] = []

    logger.info("Starting %s run (seed %s) on '%s' with K=%d.", config.variant.value, config.seed, spec.name, k)

    for n in range(config.n_max):
        if _budget_exhausted(evaluator, config.budget):
            break

        ev = EvaluatedEnsemble.evaluate(ensemble, evaluator)
        check_finite(ev.forward_values, "forward value", iteration=n)

        ybar = evaluator.forward(mean)
        check_finite(ybar, "forward value at the mean", iteration=n)
        phi = spec.objective(ybar, mean)

        if not np.isfinite(phi):
            raise NonFiniteValueError(f"The objective at the mean is not finite in iteration {n}.", iteration=n)

        q = projected_gradient(ensemble, ev, evaluator, ybar)
        h_proj = projected_hessian(ensemble, ev, evaluator, ybar)
        search = backtracking_line_search(phi, q, dev, h_proj, evaluator, config, mean)

        if search.dt == 0.0 and config.l_max > 0:
            logger.warning("Line search exhausted in iteration %d of the %s run (seed %s).",
                           n, config.variant.value, config.seed)

        xi = gaussian_perturbations(spec.n_x, k, rng)
        stepped = deviations_step(dev, search.transform, search.dt, config.variant, config.beta, config.delta, xi)
        stepped = clip_deviations(stepped, config.gamma_lb, config.gamma_ub, spec.n_x)

        mean = search.mean_next
        ensemble = recombine(stepped, mean)
        dev = DeviationMatrix(ensemble.states - mean[:, np.newaxis])

        trace.append(IterationRecord(n=n, phi_mean=search.phi_next, dt=search.dt, backtracks=search.backtracks,
                                     cumulative_evals=evaluator.evaluations,
                                     mean=mean.copy() if config.record_means else None))

        logger.debug("Iteration %d: dt=%.3e, backtracks=%d, Phi=%.6e, evaluations=%d.",
                     n, search.dt, search.backtracks, search.phi_next, evaluator.evaluations)

    if len(trace) == 0:
        raise ValueError("The evaluation budget was exhausted before the first iteration.")

    return _finish(trace, mean, evaluator, config.variant.value, config.seed)

def cfd_gradient(problem: Union[ProblemSpec, ForwardEvaluator], x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """
    Returns the central finite difference gradient ``(Phi(x + h e_i) - Phi(x - h e_i)) / (2h)``. Costs ``2 N_x``
    forward evaluations.

    :param problem: The problem or the run's evaluator.
    :param x: The point.
    :param h: The stencil size.
    :return: The gradient estimate.
    """
    if h <= 0:
        raise ValueError(f"The stencil size must be positive, got {h}.")

    evaluator = as_evaluator(problem)
    x = np.asarray(x, dtype=float).ravel()
    grad = np.empty_like(x)

    for i in range(x.shape[0]):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (evaluator.phi(x + step) - evaluator.phi(x - step)) / (2 * h)

    return grad

def cfd_gd_minimize(problem: Union[ProblemSpec, ForwardEvaluator], x0: np.ndarray, config: OptimizerConfig,
                    h: float = 1e-4, rng: Optional[np.random.Generator] = None) -> RunResult:
    """
    Minimizes ``Phi`` by gradient descent on central finite difference gradients. The step ``x' = x - dt g`` is
    accepted if ``Phi(x') <= Phi(x) - c_ls dt g^T g``, searching ``dt`` as in :func:`backtracking_line_search`.
    Each iteration costs ``1 + 2 N_x`` evaluations plus one per trial.

    :param problem: The problem or an evaluator bound to this run.
    :param x0: The starting point.
    :param config: The optimizer config. Ensemble settings are ignored.
    :param h: The stencil size.
    :param rng: Optional generator for forward-map noise, created from ``config.seed`` if omitted.
    :return: The run result.
    """
    config.validate()
    rng = _resolve_rng(config, rng)
    evaluator = problem if isinstance(problem, ForwardEvaluator) else problem.evaluator(rng)
    spec = evaluator.spec
    x = _checked_start(spec, x0)
    trace: List[IterationRecord] = []

    logger.info("Starting cfd-gd run (seed %s) on '%s' with h=%.1e.", config.seed, spec.name, h)

    for n in range(config.n_max):
        if _budget_exhausted(evaluator, config.budget):
            break

        phi = evaluator.phi(x)

        if not np.isfinite(phi):
            raise NonFiniteValueError(f"The objective is not finite in iteration {n}.", iteration=n)

        grad = cfd_gradient(evaluator, x, h)
        check_finite(grad, "finite difference gradient", iteration=n)
        decrease = float(grad @ grad)

        dt, phi_next, backtracks = 0.0, phi, config.l_max

        for trial in range(config.l_max):
            trial_dt = config.mu_ls * config.tau_ls ** trial
            proposal = x - trial_dt * grad
            phi_trial = _trial_objective(evaluator, proposal)

            if phi_trial <= phi - config.c_ls * trial_dt * decrease:
                dt, phi_next, backtracks, x = trial_dt, phi_trial, trial, proposal
                break

        trace.append(IterationRecord(n=n, phi_mean=phi_next, dt=dt, backtracks=backtracks,
                                     cumulative_evals=evaluator.evaluations,
                                     mean=x.copy() if config.record_means else None))

        logger.debug("Iteration %d: dt=%.3e, backtracks=%d, Phi=%.6e, evaluations=%d.",
                     n, dt, backtracks, phi_next, evaluator.evaluations)

    if len(trace) == 0:
        raise ValueError("The evaluation budget was exhausted before the first iteration.")

    return _finish(trace, x, evaluator, "cfd-gd", config.seed)
