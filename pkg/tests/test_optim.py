import numpy as np
import pytest

from sfereg.errors import UsageError
from sfereg.tensor import ops
from sfereg.tensor.optim import Adam, Parameter, adam_step
from sfereg.tensor.tensor import Gradients, Tape, Tensor


def test_first_step_moves_by_lr_times_sign(float64):
    p = Parameter("w", Tensor([1.0, -2.0, 0.5], requires_grad=True))
    grads = Gradients({p.tensor.node: np.array([0.3, -4.0, 2.0])})
    adam_step([p], grads, lr=0.1)
    # bias-corrected first step is lr * g / (|g| + eps)
    np.testing.assert_allclose(p.data, [0.9, -1.9, 0.4], atol=1e-7)
    assert p.adam_state.step == 1


def test_matches_reference_recursion(float64, rng):
    p = Parameter("w", Tensor(rng.normal(size=4), requires_grad=True))
    theta = p.data.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    b1, b2, lr, eps = 0.5, 0.99, 1e-2, 1e-8
    for t in range(1, 6):
        g = rng.normal(size=4)
        adam_step([p], Gradients({p.tensor.node: g}), lr, b1, b2, eps)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        theta = theta - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    np.testing.assert_allclose(p.data, theta, rtol=1e-12)


def test_missing_gradient_names_the_parameter():
    a = Parameter("block1.a", Tensor([1.0], requires_grad=True))
    b = Parameter("block1.b", Tensor([1.0], requires_grad=True))
    with pytest.raises(UsageError, match="block1.b"):
        adam_step([a, b], Gradients({a.tensor.node: np.array([1.0])}), lr=0.1)
    # nothing was updated
    assert a.data[0] == 1.0


def test_parameter_requires_grad():
    with pytest.raises(UsageError):
        Parameter("w", Tensor([1.0]))


def test_adam_minimizes_a_quadratic(float64):
    p = Parameter("w", Tensor([3.0, -2.0], requires_grad=True))
    opt = Adam([p], lr=0.05, beta1=0.9, beta2=0.999)
    target = Tensor([1.0, 1.0])
    for _ in range(400):
        with Tape() as tape:
            diff = ops.add(p.tensor, ops.scale(target, -1.0))
            grads = tape.backward(ops.sum(ops.mul(diff, diff)))
        opt.step(grads)
    np.testing.assert_allclose(p.data, [1.0, 1.0], atol=5e-2)


def test_zero_gradient_leaves_the_parameter(float64):
    p = Parameter("w", Tensor([1.0, -1.0], requires_grad=True))
    adam_step([p], Gradients({p.tensor.node: np.zeros(2)}), lr=0.1)
    np.testing.assert_array_equal(p.data, [1.0, -1.0])
    np.testing.assert_array_equal(p.adam_state.m, [0.0, 0.0])
    assert p.adam_state.step == 1


def test_zero_gradient_decays_the_moments(float64):
    p = Parameter("w", Tensor([1.0, -1.0], requires_grad=True))
    adam_step([p], Gradients({p.tensor.node: np.array([0.4, -0.2])}), lr=0.1)
    m, v = p.adam_state.m.copy(), p.adam_state.v.copy()
    adam_step([p], Gradients({p.tensor.node: np.zeros(2)}), lr=0.1, beta1=0.5, beta2=0.99)
    np.testing.assert_allclose(p.adam_state.m, 0.5 * m)
    np.testing.assert_allclose(p.adam_state.v, 0.99 * v)


def test_descends_a_scalar_parabola(float64):
    p = Parameter("theta", Tensor([1.0], requires_grad=True))
    opt = Adam([p], lr=0.05)
    for _ in range(100):
        with Tape() as tape:
            grads = tape.backward(ops.sum(ops.mul(p.tensor, p.tensor)))
        opt.step(grads)
    assert abs(p.data[0]) < 0.1
