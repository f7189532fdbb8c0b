import numpy as np

from croc.autodiff import Parameter
from croc.optim import Adam


def test_zero_gradient_leaves_parameters_unchanged():
    p = Parameter("w", np.array([1.0, -2.0, 3.0]))
    p.grad = np.zeros(3)
    opt = Adam([p], learning_rate=0.01)
    opt.step()
    np.testing.assert_array_equal(p.value, [1.0, -2.0, 3.0])


def test_first_step_magnitude_is_learning_rate():
    # Bias correction makes the first update lr * g / (|g| + eps) ~= lr * sign(g).
    for g in (1.0, 3.0, -0.25):
        p = Parameter("w", np.array([5.0]))
        p.grad = np.array([g])
        opt = Adam([p], learning_rate=0.003)
        opt.step()
        delta = 5.0 - p.value[0]
        assert abs(abs(delta) - 0.003) < 1e-8
        assert np.sign(delta) == np.sign(g)


def test_quadratic_bowl_converges():
    rng = np.random.default_rng(0)
    p = Parameter("w", rng.standard_normal(5))
    opt = Adam([p], learning_rate=0.01)
    for _ in range(2000):
        p.grad = 2.0 * p.value
        opt.step()
    assert np.linalg.norm(p.value) < 1e-3


def test_step_counter_and_state_shapes():
    p = Parameter("w", np.zeros((2, 3)))
    opt = Adam([p])
    assert opt.step_count == 0
    p.grad = np.ones((2, 3))
    opt.step()
    opt.step()
    assert opt.step_count == 2
    assert opt._m[0].shape == (2, 3) and opt._v[0].shape == (2, 3)


def test_zero_grad_helper_resets():
    p = Parameter("w", np.ones(4))
    p.grad = np.full(4, 7.0)
    Adam([p]).zero_grad()
    np.testing.assert_array_equal(p.grad, np.zeros(4))
