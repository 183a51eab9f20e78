"""
Tests the optimizers, the line search and the run results.
"""

import numpy as np
import pytest
from pyenksgd.enksgd import (OptimizerConfig, IterationRecord, RunResult, backtracking_line_search,
                             enksgd_minimize, cfd_gradient, cfd_gd_minimize)
from pyenksgd.ensemble import DeviationMatrix, NonFiniteValueError
from pyenksgd.problems import (ProblemSpec, affine_reparameterization, linear_ls_problem, quadratic_problem,
                               nls_problem)
from pyenksgd.transform import UpdateVariant

def _scalar_problem(loss, n_x: int = 1) -> ProblemSpec:
    return ProblemSpec(name="scalar", n_x=n_x, n_y=n_x, forward_map=lambda x: x, loss_value=loss)

def _well_conditioned_map(rng: np.random.Generator, n: int):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(rng.uniform(1.0, 10.0, n)), rng.standard_normal(n)

def test_config_validation():
    """
    Tests if invalid settings are rejected by name and the variant is coerced from strings.
    """
    assert OptimizerConfig(variant="enkf").variant is UpdateVariant.ENKF

    for settings in ({"particles": 1}, {"delta": 0.0}, {"c_ls": 1.0}, {"tau_ls": 0.0}, {"beta": -1.0},
                     {"gamma_ub": 0.0}, {"budget": 0}):
        name = next(iter(settings))

        with pytest.raises(ValueError, match=name):
            OptimizerConfig(**settings).validate()

def test_config_to_dict():
    """
    Tests if a config survives the conversion to a dictionary.
    """
    config = OptimizerConfig(particles=20, beta=1e-8, variant=UpdateVariant.ENKF, budget=500)
    data = config.to_dict()

    assert data["variant"] == "enkf"
    assert OptimizerConfig.from_dict({**data, "unknown": 1}) == config

def test_quadratic_converges():
    """
    Tests if the one-dimensional quadratic is minimized to machine precision within 50 iterations.
    """
    config = OptimizerConfig(particles=3, beta=0.0, delta=1.0, n_max=50, seed=1)
    result = enksgd_minimize(quadratic_problem(g=1.0, y_obs=1.0), np.zeros(1), config)

    assert result.iterations == 50
    assert result.terminal_phi <= 1e-16
    np.testing.assert_allclose(result.terminal_mean, [1.0], rtol=1e-7)

def test_linear_least_squares_is_monotone():
    """
    Tests if the objective never increases on the ill-conditioned linear problem.
    """
    problem = linear_ls_problem()
    config = OptimizerConfig(particles=20, beta=1e-8, delta=1.0, budget=1300, seed=2)
    result = enksgd_minimize(problem, problem.x0, config)
    phis = [problem.noiseless_objective(problem.x0)] + [record.phi_mean for record in result.trace]

    assert all(later <= earlier for earlier, later in zip(phis, phis[1:]))
    assert result.terminal_phi < phis[0]

def test_zero_deviations_never_move():
    """
    Tests if a start without deviations accepts every step with equality and keeps the mean.
    """
    config = OptimizerConfig(particles=4, sigma_0=0.0, n_max=5, seed=3)
    result = enksgd_minimize(quadratic_problem(), np.array([0.25]), config)

    np.testing.assert_array_equal(result.terminal_mean, [0.25])
    assert all(record.dt == 1.0 and record.backtracks == 0 for record in result.trace)
    assert all(record.phi_mean == result.trace[0].phi_mean for record in result.trace)

def test_evaluation_accounting():
    """
    Tests if every iteration costs K particle calls, one mean call and one call per line-search trial.
    """
    config = OptimizerConfig(particles=6, beta=1e-8, budget=400, seed=4)
    result = enksgd_minimize(nls_problem("nls_rosenbrock"), np.array([-1.2, 1.0]), config)
    previous = 0

    for record in result.trace:
        trials = record.backtracks + 1 if record.dt > 0 else config.l_max

        assert record.cumulative_evals - previous == config.particles + 1 + trials
        previous = record.cumulative_evals

    assert result.total_evals == previous

def test_budget_stops_the_run():
    """
    Tests if a run stops after the iteration in which the budget is reached.
    """
    config = OptimizerConfig(particles=8, budget=100, seed=5)
    result = enksgd_minimize(nls_problem("nls_rosenbrock"), np.array([-1.2, 1.0]), config)

    assert result.total_evals >= 100
    assert len(result.trace) == 1 or result.trace[-2].cumulative_evals < 100

def test_deterministic_replay():
    """
    Tests if two runs with the same seed produce identical traces.
    """
    config = OptimizerConfig(particles=5, beta=1e-6, n_max=15, seed=6)
    problem = nls_problem("nls_rosenbrock", sigma=1e-3)

    first = enksgd_minimize(problem, problem.x0, config)
    second = enksgd_minimize(problem, problem.x0, config)

    assert [record.phi_mean for record in first.trace] == [record.phi_mean for record in second.trace]
    np.testing.assert_array_equal(first.terminal_mean, second.terminal_mean)
    assert first.total_evals == second.total_evals

def test_non_finite_forward_values():
    """
    Tests if non-finite forward values abort the run with the iteration in which they appeared.
    """
    problem = ProblemSpec(name="broken", n_x=1, n_y=1, forward_map=lambda x: np.array([np.nan]),
                          loss_value=lambda y: float(y[0] ** 2), loss_grad=lambda y: 2 * y,
                          loss_hess=lambda y: 2 * np.eye(1))

    with pytest.raises(NonFiniteValueError) as exc_info:
        enksgd_minimize(problem, np.zeros(1), OptimizerConfig(seed=7))

    assert exc_info.value.iteration == 0

def test_starting_point_dimension():
    """
    Tests if a starting point of the wrong length is rejected.
    """
    with pytest.raises(ValueError):
        enksgd_minimize(nls_problem("nls_rosenbrock"), np.zeros(3), OptimizerConfig(seed=8))

@pytest.mark.parametrize("name", ["linear_ls", "nls_rosenbrock"])
def test_affine_invariance(name):
    """
    Tests if the mean iterates commute with an affine reparameterization of the state space.
    """
    problem = linear_ls_problem() if name == "linear_ls" else nls_problem(name)
    rng = np.random.default_rng(9)
    a, b = _well_conditioned_map(rng, problem.n_x)
    transformed = affine_reparameterization(problem, a, b)

    k = 20 if name == "linear_ls" else 8
    delta = 1.0 if name == "linear_ls" else 1e-3
    config = OptimizerConfig(particles=k, beta=0.0, delta=delta, gamma_lb=0.0, gamma_ub=np.inf, n_max=20,
                             seed=10, record_means=True)
    deviations = 1e-2 * rng.standard_normal((problem.n_x, k))

    result = enksgd_minimize(problem, problem.x0, config, initial_deviations=deviations)
    transformed_result = enksgd_minimize(transformed, transformed.x0, config,
                                         initial_deviations=np.linalg.solve(a, deviations))

    assert result.iterations == transformed_result.iterations == 20

    for record, transformed_record in zip(result.trace, transformed_result.trace):
        image = a @ transformed_record.mean + b

        assert np.linalg.norm(record.mean - image) <= 1e-8 * np.linalg.norm(record.mean)

def test_line_search_without_gradient():
    """
    Tests if a vanishing projected gradient is accepted at the first trial without moving the mean.
    """
    problem = quadratic_problem()
    mean = np.array([0.5])
    search = backtracking_line_search(problem.noiseless_objective(mean), np.zeros(2),
                                      DeviationMatrix([[-0.1, 0.1]]), np.zeros((2, 2)), problem,
                                      OptimizerConfig(), mean)

    assert search.backtracks == 0
    assert search.dt == 1.0
    np.testing.assert_array_equal(search.mean_next, mean)

def test_line_search_with_small_initial_step():
    """
    Tests if a small initial step on a convex quadratic passes the decrease test at the first trial.
    """
    problem = quadratic_problem(g=1.0, y_obs=1.0)
    mean = np.zeros(1)
    dev = DeviationMatrix([[-0.1, 0.1]])
    q = np.array([0.1, -0.1])
    h_proj = np.outer(q, q)

    search = backtracking_line_search(problem.noiseless_objective(mean), q, dev, h_proj, problem,
                                      OptimizerConfig(mu_ls=1e-3), mean)

    assert search.backtracks == 0
    assert search.dt == 1e-3
    assert 0 < search.mean_next[0] < 1
    assert search.phi_next < 0.5

def test_line_search_exhaustion():
    """
    Tests if a proposal direction that increases the objective exhausts the line search.
    """
    problem = quadratic_problem(g=1.0, y_obs=1.0)
    evaluator = problem.evaluator()
    mean = np.zeros(1)
    q = np.array([-0.1, 0.1])

    search = backtracking_line_search(0.5, q, DeviationMatrix([[-0.1, 0.1]]), np.outer(q, q), evaluator,
                                      OptimizerConfig(l_max=5), mean)

    assert search.dt == 0.0
    assert search.backtracks == 5
    assert search.phi_next == 0.5
    np.testing.assert_array_equal(search.mean_next, mean)
    np.testing.assert_array_equal(search.transform.t, np.eye(2))
    assert evaluator.evaluations == 5

def test_cfd_gradient_examples():
    """
    Tests the finite difference gradient on a quadratic, a cubic and a constant.
    """
    square = _scalar_problem(lambda y: float(y[0] ** 2))

    assert cfd_gradient(square, [1.0], h=0.5)[0] == 2.0
    np.testing.assert_allclose(cfd_gradient(square, [1.0]), [2.0], rtol=1e-8)
    np.testing.assert_allclose(cfd_gradient(_scalar_problem(lambda y: float(y[0] ** 3)), [1.0], h=0.1), [3.01],
                               rtol=1e-12)

    evaluator = _scalar_problem(lambda y: 7.0, n_x=3).evaluator()

    np.testing.assert_array_equal(cfd_gradient(evaluator, np.zeros(3)), np.zeros(3))
    assert evaluator.evaluations == 6

    with pytest.raises(ValueError):
        cfd_gradient(square, [1.0], h=0.0)

def test_cfd_gd_quadratic():
    """
    Tests if finite difference gradient descent solves the one-dimensional quadratic within 200 evaluations.
    """
    result = cfd_gd_minimize(quadratic_problem(), np.zeros(1), OptimizerConfig(budget=200, seed=11))
    converged = [record for record in result.trace if record.phi_mean <= 1e-12]

    assert result.method == "cfd-gd"
    assert converged and converged[0].cumulative_evals <= 200
    assert result.terminal_phi <= 1e-12

def test_cfd_gd_constant_objective():
    """
    Tests if a constant objective accepts every step with equality and never moves.
    """
    config = OptimizerConfig(n_max=4, seed=12)
    result = cfd_gd_minimize(_scalar_problem(lambda y: 3.0, n_x=2), np.array([1.0, -1.0]), config)

    np.testing.assert_array_equal(result.terminal_mean, [1.0, -1.0])
    assert all(record.dt == 1.0 and record.backtracks == 0 for record in result.trace)
    assert [record.cumulative_evals for record in result.trace] == [6, 12, 18, 24]

def test_run_result():
    """
    Tests the consistency checks and representations of a run result.
    """
    trace = [IterationRecord(0, 2.0, 1.0, 0, 10), IterationRecord(1, 1.0, 0.1, 1, 21)]
    result = RunResult(trace=trace, terminal_mean=[0.0, 1.0], terminal_phi=1.0, total_evals=21, seed=3)

    assert result.iterations == 2
    assert "phi_mean" in str(result)
    assert RunResult.from_dict(result.to_dict()).terminal_phi == 1.0

    with pytest.raises(ValueError):
        RunResult(trace=trace, terminal_mean=[0.0, 1.0], terminal_phi=2.0, total_evals=21)

    with pytest.raises(ValueError):
        RunResult(trace=[], terminal_mean=[0.0], terminal_phi=0.0, total_evals=0)

def test_run_result_to_pandas():
    """
    Tests if a trace converts to a data frame with one row per iteration.
    """
    pytest.importorskip("pandas")

    result = RunResult(trace=[IterationRecord(0, 2.0, 1.0, 0, 10)], terminal_mean=[0.0], terminal_phi=2.0,
                       total_evals=10)
    df = result.to_pandas()

    assert df.shape == (1, 5)
    assert df["phi_mean"][0] == 2.0
