"""
Tests the benchmark experiments end to end. These tests run thirty repetitions per method and are deselected by
default; run them with ``pytest -m slow``.
"""

import numpy as np
import pytest
from pyenksgd.enksgd import OptimizerConfig
from pyenksgd.harness import ExperimentConfig, run_experiment, safe_log10
from pyenksgd.problems import poisson_negative_log_likelihood, poisson_regression_problem

pytestmark = pytest.mark.slow

def _experiment(problem: str, method: str, optimizer: OptimizerConfig, **kwargs):
    return run_experiment(ExperimentConfig(problem=problem, method=method, optimizer=optimizer, runs=30,
                                           master_seed=2024, **kwargs))

def test_rosenbrock_after_500_evaluations():
    """
    Tests if EnKSGD solves the Rosenbrock problem within 500 evaluations while the EnKF variant stalls.
    """
    optimizer = OptimizerConfig(particles=8, beta=1e-8, delta=1e-3)
    _, enksgd = _experiment("nls_rosenbrock", "enksgd", optimizer, budget=500)
    _, enkf = _experiment("nls_rosenbrock", "enkf", optimizer, budget=500)

    assert enksgd.median <= -12
    assert -1.5 <= enkf.median <= 1.5
    assert enksgd.median <= enkf.median - 10

def test_ill_conditioned_linear_least_squares():
    """
    Tests if EnKSGD beats the EnKF variant and finite differences by orders of magnitude on the ill-conditioned
    linear problem and stays close to the noise level with noisy evaluations, where finite differences degrade.
    """
    optimizer = OptimizerConfig(particles=20, beta=1e-8, delta=1.0)
    _, enksgd = _experiment("linear_ls", "enksgd", optimizer, budget=1300)
    _, enkf = _experiment("linear_ls", "enkf", optimizer, budget=1300)
    _, cfd = _experiment("linear_ls", "cfd-gd", optimizer, budget=1300)

    assert enksgd.median <= enkf.median - 8
    assert enksgd.median <= cfd.median - 6

    sigma = 1e-2
    noisy, _ = _experiment("linear_ls", "enksgd", optimizer, budget=1300, problem_params={"sigma": sigma})
    noiseless_logs = [safe_log10(result.terminal_phi_noiseless) for result in noisy]
    below = [result.terminal_phi_noiseless <= 1e-1 for result in noisy]

    assert sum(below) >= 27
    assert np.median(noiseless_logs) <= np.log10(sigma ** 2) + 2

    _, noisy_cfd = _experiment("linear_ls", "cfd-gd", optimizer, budget=1300, problem_params={"sigma": sigma})

    assert noisy_cfd.median > cfd.median

def test_poisson_regression():
    """
    Tests if EnKSGD reaches a lower negative log likelihood than the EnKF variant in most paired runs and
    decreases it monotonically.
    """
    optimizer = OptimizerConfig(particles=25, beta=1e-6, delta=1.0)
    problem = poisson_regression_problem(seed=2024)
    enksgd, _ = _experiment("poisson", "enksgd", optimizer, budget=1585)
    enkf, _ = _experiment("poisson", "enkf", optimizer, budget=1585)

    wins = [poisson_negative_log_likelihood(problem, a.terminal_mean)
            <= poisson_negative_log_likelihood(problem, b.terminal_mean) for a, b in zip(enksgd, enkf)]

    assert sum(wins) >= 24

    for result in enksgd:
        phis = [record.phi_mean for record in result.trace]

        assert all(later <= earlier for earlier, later in zip(phis, phis[1:]))

def test_signal_reconstruction():
    """
    Tests if EnKSGD reconstructs the rectified signal to the reference level after 60 iterations and better than
    the EnKF variant.
    """
    optimizer = OptimizerConfig(particles=101, beta=1e-6, delta=1e-3, n_max=61)
    enksgd, _ = _experiment("signal", "enksgd", optimizer)
    enkf, _ = _experiment("signal", "enkf", optimizer)

    enksgd_log = np.mean([safe_log10(result.trace[59].phi_mean) for result in enksgd])
    enkf_log = np.mean([safe_log10(result.trace[60].phi_mean) for result in enkf])

    assert abs(enksgd_log - 4.28) <= 0.20
    assert enksgd_log < enkf_log
