import numpy as np
import pytest
from gradcheck import check_gradients, projected

from sfereg.errors import UsageError
from sfereg.tensor import ops
from sfereg.tensor.tensor import Tape, Tensor, default_dtype, no_grad, precision

SEEDS = range(20)


def leaf(rng, shape, low=None):
    data = rng.normal(size=shape)
    if low is not None:
        # keep values away from relu and |x| kinks
        data = np.sign(data) * (np.abs(data) + low)
    return Tensor(data, requires_grad=True)


@pytest.mark.parametrize("seed", SEEDS)
def test_conv3d_gradients(float64, seed):
    rng = np.random.default_rng(seed)
    stride, padding = [(1, 0), (1, 1), (2, 1)][seed % 3]
    x = leaf(rng, (1, 2, 4, 3, 4))
    w = leaf(rng, (2, 2, 2, 3, 2))
    b = leaf(rng, (2,))
    probe = rng.normal(size=ops.conv3d(x, w, b, stride, padding).shape)
    check_gradients(lambda: projected(ops.conv3d(x, w, b, stride, padding), probe), [x, w, b])


@pytest.mark.parametrize("seed", SEEDS)
def test_fully_connected_gradients(float64, seed):
    rng = np.random.default_rng(seed)
    x, w, b = leaf(rng, (3, 4)), leaf(rng, (2, 4)), leaf(rng, (2,))
    probe = rng.normal(size=(3, 2))
    check_gradients(lambda: projected(ops.fully_connected(x, w, b), probe), [x, w, b])


@pytest.mark.parametrize("seed", SEEDS)
def test_pool_and_pointwise_gradients(float64, seed):
    rng = np.random.default_rng(seed)
    x = leaf(rng, (2, 3, 2, 2, 2), low=0.05)
    probe = rng.normal(size=(2, 3))
    check_gradients(lambda: projected(ops.global_avg_pool(x), probe), [x])
    probe = rng.normal(size=x.shape)
    check_gradients(lambda: projected(ops.sigmoid(x), probe), [x])
    check_gradients(lambda: projected(ops.relu(x), probe), [x])


@pytest.mark.parametrize("seed", SEEDS)
def test_broadcast_gradients(float64, seed):
    rng = np.random.default_rng(seed)
    x = leaf(rng, (2, 3, 2, 2, 2))
    v = leaf(rng, (2, 3))
    c = leaf(rng, (3,))
    m = leaf(rng, (2, 1, 2, 2, 2))
    probe = rng.normal(size=x.shape)
    check_gradients(lambda: projected(ops.mul(v, x), probe), [x, v])
    check_gradients(lambda: projected(ops.add(x, c), probe), [x, c])
    check_gradients(lambda: projected(ops.mul(m, x), probe), [x, m])
    check_gradients(lambda: projected(ops.add(x, m), probe), [x, m])


@pytest.mark.parametrize("seed", SEEDS)
def test_plumbing_and_loss_gradients(float64, seed):
    rng = np.random.default_rng(seed)
    a, b = leaf(rng, (1, 2, 2, 2, 2)), leaf(rng, (1, 3, 2, 2, 2))
    probe = rng.normal(size=(1, 5, 2, 2, 2))
    check_gradients(lambda: projected(ops.concat_channels(a, b), probe), [a, b])
    check_gradients(lambda: ops.mean(ops.slice_channels(ops.concat_channels(a, b), 1, 4)), [a, b])
    check_gradients(lambda: ops.sum(ops.scale(ops.flatten(b), 0.3)), [b])

    pred = leaf(rng, (2, 6))
    target = Tensor(pred.data + np.sign(rng.normal(size=(2, 6))) * rng.uniform(0.1, 1.0, size=(2, 6)), requires_grad=True)
    check_gradients(lambda: ops.l1_loss(pred, target), [pred, target])


def test_shared_input_accumulates(float64):
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    with Tape() as tape:
        grads = tape.backward(ops.sum(ops.mul(x, x)))
    np.testing.assert_allclose(grads[x], [2.0, 4.0, 6.0])


def test_backward_returns_only_leaves_and_clears_tape():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        hidden = ops.scale(x, 2.0)
        grads = tape.backward(ops.sum(hidden))
        assert not tape.entries
    assert x in grads
    assert hidden not in grads
    assert len(grads) == 1


def test_backward_rejects_detached_and_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        with pytest.raises(UsageError):
            tape.backward(ops.sum(x).detach())
        with pytest.raises(UsageError):
            tape.backward(ops.scale(x, 2.0))


def test_no_grad_records_nothing():
    x = Tensor([1.0], requires_grad=True)
    with Tape() as tape, no_grad():
        out = ops.sigmoid(x)
        assert not out.requires_grad
        assert not tape.entries


def test_constants_are_not_recorded():
    with Tape() as tape:
        ops.add(Tensor([1.0]), Tensor([2.0]))
        assert not tape.entries


def test_precision_context():
    assert default_dtype() == np.float32
    with precision(np.float64):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32
    with pytest.raises(UsageError):
        with precision(np.int32):
            pass


def test_float32_ops_stay_float32(rng):
    x = Tensor(rng.normal(size=(1, 1, 3, 3, 3)))
    w = Tensor(rng.normal(size=(1, 1, 3, 3, 3)))
    assert ops.conv3d(x, w, Tensor([0.0]), padding=1).dtype == np.float32
    assert ops.scale(x, 0.5).dtype == np.float32


def small_network(x, w, b, fw, fb):
    h = ops.relu(ops.conv3d(x, w, b, 1, 1))
    gated = ops.mul(h, ops.sigmoid(h))
    return ops.fully_connected(ops.global_avg_pool(gated), fw, fb)


def network_arrays(rng):
    return [
        rng.normal(size=(2, 2, 4, 4, 4)),
        rng.normal(size=(3, 2, 3, 3, 3)),
        rng.normal(size=3),
        rng.normal(size=(2, 3)),
        rng.normal(size=2),
    ]


@pytest.mark.parametrize("seed", range(5))
def test_recording_does_not_change_forward_values(seed):
    arrays = network_arrays(np.random.default_rng(seed))

    def forward(requires_grad):
        with Tape():
            return small_network(*[Tensor(a, requires_grad=requires_grad) for a in arrays]).data

    tracked, plain = forward(True), forward(False)
    assert tracked.dtype == plain.dtype
    np.testing.assert_array_equal(tracked, plain)
    with no_grad():
        np.testing.assert_array_equal(small_network(*[Tensor(a, requires_grad=True) for a in arrays]).data, plain)


@pytest.mark.parametrize("seed", range(5))
def test_finite_inputs_give_finite_outputs_and_gradients(seed):
    arrays = network_arrays(np.random.default_rng(seed))
    tensors = [Tensor(a * 50.0, requires_grad=True) for a in arrays]
    with Tape() as tape:
        out = small_network(*tensors)
        grads = tape.backward(ops.sum(out))
    assert np.all(np.isfinite(out.data))
    for t in tensors:
        assert np.all(np.isfinite(grads[t]))


def test_gradient_of_a_scaled_sum(float64):
    x = Tensor(np.arange(4.0), requires_grad=True)
    with Tape() as tape:
        grads = tape.backward(ops.sum(ops.scale(x, 2.0)))
    np.testing.assert_array_equal(grads[x], [2.0, 2.0, 2.0, 2.0])


def test_sigmoid_slope_at_zero(float64):
    x = Tensor(np.zeros(3), requires_grad=True)
    with Tape() as tape:
        grads = tape.backward(ops.sum(ops.sigmoid(x)))
    np.testing.assert_allclose(grads[x], [0.25, 0.25, 0.25])
