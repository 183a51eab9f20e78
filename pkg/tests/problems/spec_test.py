"""
Tests the problem abstraction, the evaluation counting and the problem registry.
"""

import threading
import numpy as np
import pytest
from pyenksgd.problems import (ProblemSpec, RegularizerParts, NoiseModel, EvalCounter, ForwardEvaluator,
                               UnknownProblemError, apply_noise, affine_reparameterization, register_problem,
                               get_problem, available_problems)

def _toy_problem(**kwargs) -> ProblemSpec:
    return ProblemSpec(name="toy", n_x=2, n_y=2, forward_map=lambda x: 2 * x,
                       loss_value=lambda y: 0.5 * float(y @ y), loss_grad=lambda y: y,
                       loss_hess=lambda y: np.eye(2), **kwargs)

def test_noise_model():
    """
    Tests if noise levels are validated and zero noise is deterministic.
    """
    assert NoiseModel().deterministic
    assert not NoiseModel(1e-2).deterministic

    with pytest.raises(ValueError):
        NoiseModel(-1.0)

def test_apply_noise_without_noise():
    """
    Tests if zero noise returns the input unchanged without a generator.
    """
    y = np.array([1.0, 2.0])

    np.testing.assert_array_equal(apply_noise(y, NoiseModel(0.0), None), y)

    with pytest.raises(ValueError):
        apply_noise(y, NoiseModel(1.0), None)

def test_apply_noise_statistics():
    """
    Tests if the noise has the requested standard deviation and is reproducible.
    """
    y = np.zeros((100000, 13))
    noisy = apply_noise(y, NoiseModel(1e-2), np.random.default_rng(30))

    np.testing.assert_allclose(noisy.std(axis=0), np.full(13, 1e-2), rtol=0.05)
    np.testing.assert_array_equal(apply_noise(y[:3], NoiseModel(1e-2), np.random.default_rng(31)),
                                  apply_noise(y[:3], NoiseModel(1e-2), np.random.default_rng(31)))

def test_eval_counter_is_thread_safe():
    """
    Tests if concurrent increments are all counted.
    """
    counter = EvalCounter()

    def work():
        for _ in range(1000):
            counter.increment()

    threads = [threading.Thread(target=work) for _ in range(8)]

    for thread in threads:
        thread.start()

    for thread in threads:
        thread.join()

    assert counter.count == 8000

    with pytest.raises(ValueError):
        counter.increment(-1)

def test_forward_evaluator():
    """
    Tests if an evaluator counts every forward call and checks the output length.
    """
    evaluator = ForwardEvaluator(_toy_problem())

    np.testing.assert_array_equal(evaluator.forward(np.array([1.0, 2.0])), [2.0, 4.0])
    assert evaluator.phi(np.array([1.0, 0.0])) == 2.0
    assert evaluator.evaluations == 2

    broken = ForwardEvaluator(ProblemSpec(name="broken", n_x=2, n_y=3, forward_map=lambda x: x,
                                          loss_value=lambda y: 0.0))

    with pytest.raises(ValueError):
        broken.forward(np.zeros(2))

def test_objective_with_regularizers():
    """
    Tests if the objective adds the weighted regularizers and inactive regularizers are ignored.
    """
    reg_x = RegularizerParts(value=lambda x: float(np.sum(x)))
    reg_y = RegularizerParts(value=lambda y: float(np.max(y)))
    problem = _toy_problem(reg_x=reg_x, reg_y=reg_y, alpha_x=2.0, alpha_y=3.0)
    x = np.array([1.0, 2.0])

    assert problem.uses_reg_x and problem.uses_reg_y
    assert problem.noiseless_objective(x) == 10.0 + 2.0 * 3.0 + 3.0 * 4.0

    unweighted = _toy_problem(reg_x=reg_x, alpha_x=0.0)

    assert not unweighted.uses_reg_x
    assert unweighted.noiseless_objective(x) == 10.0

def test_invalid_problem():
    """
    Tests if invalid dimensions, weights and starting points are rejected.
    """
    with pytest.raises(ValueError):
        _toy_problem(alpha_x=-1.0)

    with pytest.raises(ValueError):
        _toy_problem(x0=[1.0, 2.0, 3.0])

    with pytest.raises(ValueError):
        ProblemSpec(name="empty", n_x=0, n_y=1, forward_map=lambda x: x, loss_value=lambda y: 0.0)

def test_affine_reparameterization():
    """
    Tests if the reparameterized objective, starting point and regularizer derivatives follow the affine map.
    """
    reg_x = RegularizerParts(value=lambda x: 0.5 * float(x @ x), grad=lambda x: x, hess=lambda x: np.eye(2))
    problem = _toy_problem(reg_x=reg_x, alpha_x=1.0, x0=[1.0, 1.0])
    a = np.array([[2.0, 1.0], [0.0, 1.0]])
    b = np.array([1.0, -1.0])
    transformed = affine_reparameterization(problem, a, b)
    x = np.array([0.5, -0.25])

    assert transformed.name == "toy_affine"
    assert transformed.noiseless_objective(x) == pytest.approx(problem.noiseless_objective(a @ x + b))
    np.testing.assert_allclose(a @ transformed.x0 + b, problem.x0)
    np.testing.assert_allclose(transformed.reg_x.grad(x), a.T @ (a @ x + b))
    np.testing.assert_allclose(transformed.reg_x.hess(x), a.T @ a)

    with pytest.raises(ValueError):
        affine_reparameterization(problem, np.eye(3), np.zeros(3))

def test_registry():
    """
    Tests if custom problems can be registered and constructed by name.
    """
    register_problem("test_toy", lambda sigma=0.0: _toy_problem(noise=NoiseModel(sigma)), overwrite=True)

    assert "test_toy" in available_problems()
    assert available_problems() == sorted(available_problems())
    assert get_problem("test_toy", sigma=0.5, seed=3).noise.sigma == 0.5

    with pytest.raises(ValueError):
        register_problem("test_toy", _toy_problem)

    with pytest.raises(TypeError):
        register_problem("test_not_callable", 1)

def test_unknown_problem():
    """
    Tests if unknown names raise an error listing the available problems.
    """
    with pytest.raises(UnknownProblemError) as exc_info:
        get_problem("does_not_exist")

    assert "nls_rosenbrock" in str(exc_info.value)
    assert isinstance(exc_info.value, KeyError)
