"""
Module contains the experiment driver. An experiment repeats one optimization method on one problem for a number
of independently seeded runs under a common evaluation budget and summarizes the terminal objective values by
the mean, median and variance of ``log10 Phi``.
"""

import os
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple
from dataclasses import dataclass, field, replace
import numpy as np
from tabulate import tabulate
from pyenksgd.enksgd import OptimizerConfig, RunResult, enksgd_minimize, cfd_gd_minimize
from pyenksgd.problems import ProblemSpec, get_problem
from pyenksgd.transform import UpdateVariant

logger = logging.getLogger(__name__)

METHODS = ("enksgd", "enkf", "cfd-gd")

# Sample variance, divisor n - 1
VARIANCE_DDOF = 1

class ExperimentError(RuntimeError):
    """
    Raised if a run of an experiment fails. Carries the run index and its seed so the failure can be replayed.
    """
    def __init__(self, message: str, run_index: int, seed: int):
        super().__init__(message)
        self.run_index = run_index
        self.seed = seed

@dataclass
class ExperimentConfig:
    """
    Protocol of an experiment. ``budget`` applies to every run and overrides ``optimizer.budget``;
    ``problem_params`` are passed to the problem factory (e.g. ``sigma``, ``seed``, ``dimension``).
    """
    problem: str
    method: str = "enksgd"
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    runs: int = 30
    master_seed: int = 0
    budget: Optional[int] = None
    problem_params: Dict[str, Any] = field(default_factory=dict)
    x0: Optional[List[float]] = None
    stencil: float = 1e-4
    workers: Optional[int] = None
    output: Optional[str] = None
    output_format: str = "csv"
    summary_output: Optional[str] = None
    dataset_output: Optional[str] = None
    verbosity: int = 0

    def validate(self) -> "ExperimentConfig":
        """
        Checks the protocol and the optimizer settings.

        :return: The config itself.
        :raises ValueError: If a setting is invalid.
        """
        if self.method not in METHODS:
            raise ValueError(f"Unknown method '{self.method}'. Available methods: {', '.join(METHODS)}.")

        if self.runs < 1:
            raise ValueError(f"An experiment requires at least one run, got runs={self.runs}.")

        if self.budget is not None and self.budget < 1:
            raise ValueError(f"The budget must be positive, got {self.budget}.")

        if self.stencil <= 0:
            raise ValueError(f"The stencil size must be positive, got {self.stencil}.")

        if self.workers is not None and self.workers < 1:
            raise ValueError(f"The number of workers must be positive, got {self.workers}.")

        if self.output_format not in ("csv", "json"):
            raise ValueError(f"Unknown trace format '{self.output_format}'. Available formats: csv, json.")

        self.optimizer.validate()

        return self

    def to_dict(self) -> Dict[str, Any]:
        """
        Converts the config to a JSON compatible dictionary.
        """
        return {"problem": self.problem, "method": self.method, "optimizer": self.optimizer.to_dict(),
                "runs": self.runs, "master_seed": self.master_seed, "budget": self.budget,
                "problem_params": dict(self.problem_params), "x0": self.x0, "stencil": self.stencil,
                "workers": self.workers, "output": self.output, "output_format": self.output_format,
                "summary_output": self.summary_output, "dataset_output": self.dataset_output,
                "verbosity": self.verbosity}

@dataclass
class SummaryStats:
    """
    Statistics of ``log10 Phi`` over the runs of an experiment.
    """
    mean: float
    median: float
    variance: float
    mean_evals: Optional[float] = None
    runs: int = 0
    variance_ddof: int = VARIANCE_DDOF

    def to_dict(self) -> Dict[str, Any]:
        """
        Converts the statistics to a dictionary, recording the variance convention.
        """
        return {"mean": self.mean, "median": self.median, "variance": self.variance,
                "mean_evals": self.mean_evals, "runs": self.runs, "variance_ddof": self.variance_ddof}

def summarize(values: Sequence[float], evals: Optional[Sequence[int]] = None) -> SummaryStats:
    """
    Computes mean, median and sample variance. A single value has variance 0.

    :param values: The values, typically ``log10`` of terminal objectives.
    :param evals: Optional evaluation totals of the runs.
    :return: The statistics.
    :raises ValueError: If ``values`` is empty.
    """
    values = np.asarray(values, dtype=float)

    if values.size == 0:
        raise ValueError("Statistics require at least one value.")

    variance = float(np.var(values, ddof=VARIANCE_DDOF)) if values.size > 1 else 0.0
    mean_evals = float(np.mean(evals)) if evals is not None and len(evals) > 0 else None

    return SummaryStats(mean=float(np.mean(values)), median=float(np.median(values)), variance=variance,
                        mean_evals=mean_evals, runs=int(values.size))

def safe_log10(phi: float) -> float:
    """
    Returns ``log10`` of an objective value, floored at the smallest positive double.
    """
    return float(np.log10(max(phi, np.finfo(float).tiny)))

def derive_seed(master_seed: int, run_index: int) -> int:
    """
    Derives the seed of run ``run_index``. Depends only on the master seed and the index, so traces of a run do
    not change when more runs are added.

    :param master_seed: The experiment seed.
    :param run_index: The run index.
    :return: The run seed.
    """
    state = np.random.SeedSequence([master_seed, run_index]).generate_state(1, dtype=np.uint64)

    return int(state[0])

def build_problem(config: ExperimentConfig) -> ProblemSpec:
    """
    Resolves the problem of an experiment. A simulated dataset is seeded by ``problem_params["seed"]`` and
    otherwise by the master seed, so it is shared by all runs.
    """
    params = dict(config.problem_params)
    params.setdefault("seed", config.master_seed)

    return get_problem(config.problem, **params)

def _starting_point(config: ExperimentConfig, problem: ProblemSpec) -> np.ndarray:
    if config.x0 is not None:
        x0 = np.asarray(config.x0, dtype=float).ravel()

        if x0.size == 1 and problem.n_x > 1:
            return np.full(problem.n_x, x0[0])

        return x0

    if problem.x0 is not None:
        return problem.x0

    return np.zeros(problem.n_x)

def run_single(config: ExperimentConfig, problem: ProblemSpec, run_index: int) -> RunResult:
    """
    Executes one run of an experiment.

    :param config: The experiment config.
    :param problem: The resolved problem.
    :param run_index: The index of the run.
    :return: The run result.
    """
    seed = derive_seed(config.master_seed, run_index)
    budget = config.budget if config.budget is not None else config.optimizer.budget
    variant = UpdateVariant.ENKF if config.method == "enkf" else UpdateVariant.ENKSGD
    optimizer = replace(config.optimizer, seed=seed, budget=budget, variant=variant)
    x0 = _starting_point(config, problem)

    if config.method == "cfd-gd":
        return cfd_gd_minimize(problem, x0, optimizer, h=config.stencil)

    return enksgd_minimize(problem, x0, optimizer)

def run_experiment(config: ExperimentConfig) -> Tuple[List[RunResult], SummaryStats]:
    """
    Runs all repetitions of an experiment on a thread pool and summarizes them. Results are returned in run
    order.

    :param config: The experiment config.
    :return: The run results and the statistics of ``log10`` of their terminal objectives.
    :raises ExperimentError: If any run fails, reporting the lowest failing run index and its seed.
    """
    config.validate()
    problem = build_problem(config)
    workers = config.workers or min(config.runs, os.cpu_count() or 1)

    logger.info("Running %d %s runs on '%s' with %d workers.", config.runs, config.method, problem.name, workers)

    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(run_single, config, problem, i) for i in range(config.runs)]

        results: List[RunResult] = []

        for run_index, future in enumerate(futures):
            try:
                results.append(future.result())
            # pylint: disable-next=broad-exception-caught
            except Exception as exc:
                for pending in futures:
                    pending.cancel()

                seed = derive_seed(config.master_seed, run_index)
                raise ExperimentError(f"Run {run_index} (seed {seed}) of the {config.method} experiment on "
                                      f"'{config.problem}' failed: {exc}", run_index, seed) from exc

    stats = summarize([safe_log10(result.terminal_phi) for result in results],
                      [result.total_evals for result in results])

    logger.info("Finished %s on '%s': mean log10 Phi %.3f, median %.3f, variance %.3e.",
                config.method, problem.name, stats.mean, stats.median, stats.variance)

    return results, stats

def format_summary(stats: SummaryStats, label: str = "") -> str:
    """
    Renders statistics as a plain-text table.

    :param stats: The statistics.
    :param label: Optional row label, e.g. the method name.
    :return: The table.
    """
    headers = ["", "Mean", "Median", "Var.", "Evals", "Runs"]
    row = [label, f"{stats.mean:.1E}", f"{stats.median:.1E}", f"{stats.variance:.1E}",
           "" if stats.mean_evals is None else f"{stats.mean_evals:.0f}", stats.runs]

    return tabulate([row], headers=headers)
