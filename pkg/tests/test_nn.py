import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from goalmarl.nn import (
    AdamState,
    CheckpointError,
    DenseNet,
    backprop,
    entropy,
    flatten,
    forward,
    init_network,
    load_params,
    optimizer_step,
    param_count,
    save_params,
    softmax,
    unflatten,
)


def relu(x):
    return [max(v, 0.0) for v in x]


def hand_forward(net, x):
    """Straight-line evaluation with Python lists, independent of numpy matmul."""
    h = list(map(float, x))
    n_layers = len(net.weights)
    for k in range(n_layers):
        w = net.weights[k].tolist()
        b = net.biases[k].tolist()
        out = [b[j] + sum(h[i] * w[i][j] for i in range(len(h))) for j in range(len(b))]
        h = relu(out) if k < n_layers - 1 else out
    return h


def finite_difference(f, params, h=1e-5):
    grad = np.zeros_like(params)
    for k in range(params.size):
        old = params[k]
        params[k] = old + h
        up = f()
        params[k] = old - h
        down = f()
        params[k] = old
        grad[k] = (up - down) / (2 * h)
    return grad


def max_rel_err(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))))


# -- init / forward -------------------------------------------------------------


def test_init_deterministic():
    assert init_network(3, [4, 8, 5]) == init_network(3, [4, 8, 5])
    assert init_network(3, [4, 8, 5]) != init_network(4, [4, 8, 5])


def test_param_count():
    net = init_network(0, [4, 8, 5])
    assert net.n_params == 4 * 8 + 8 + 8 * 5 + 5 == 85 == param_count([4, 8, 5])
    assert flatten(net).size == 85


def test_init_scheme():
    net = init_network(0, [4, 8, 5])
    for w, b in zip(net.weights, net.biases):
        assert np.all(b == 0.0)
        bound = 1 / math.sqrt(w.shape[0])
        assert np.all(np.abs(w) <= bound)


@pytest.mark.parametrize("dims", [[], [3], [3, 0, 2], [-1, 2]])
def test_init_rejects(dims):
    with pytest.raises(ValueError):
        init_network(0, dims)


def test_zero_net_outputs_zero():
    net = DenseNet([3, 6, 4])
    assert np.array_equal(forward(net, [1.0, -2.0, 3.0]), np.zeros(4))


def test_identity_layer():
    net = DenseNet([3, 3])
    net.weights[0][...] = np.eye(3)
    x = np.array([0.5, -1.5, 2.0])
    assert np.array_equal(forward(net, x), x)


def test_forward_matches_hand_computation():
    rng = np.random.default_rng(1)
    for _ in range(20):
        net = init_network(rng, [4, 7, 6, 3])
        net.params += rng.normal(0, 0.1, net.n_params)  # nonzero biases too
        x = rng.normal(size=4)
        assert np.allclose(forward(net, x), hand_forward(net, x), atol=1e-12, rtol=0)


def test_forward_dimension_mismatch():
    with pytest.raises(ValueError):
        forward(init_network(0, [4, 3]), np.zeros(5))


def test_batched_forward_matches_rows():
    rng = np.random.default_rng(2)
    net = init_network(rng, [4, 8, 5])
    xs = rng.normal(size=(6, 4))
    out = net.forward(xs)
    for x, row in zip(xs, out):
        assert np.allclose(net.forward(x), row, atol=1e-14)


# -- softmax / entropy ----------------------------------------------------------


def test_softmax_uniform():
    assert np.allclose(softmax(np.zeros(5)), 0.2, atol=1e-15)
    assert np.allclose(softmax(np.full(5, 37.5)), 0.2, atol=1e-15)


def test_softmax_closed_form():
    p = softmax([1.0, 0, 0, 0, 0])
    e = math.e
    assert p[0] == pytest.approx(e / (e + 4), abs=1e-15)
    assert np.allclose(p[1:], 1 / (e + 4), atol=1e-15)


@settings(max_examples=300)
@given(arrays(np.float64, 5, elements=st.floats(-700, 700)), st.floats(-100, 100))
def test_softmax_properties(z, c):
    p = softmax(z)
    assert np.all(np.isfinite(p))
    assert abs(p.sum() - 1.0) < 1e-9
    assert np.all(p >= 0) and np.all(p <= 1)
    assert np.allclose(softmax(z + c), p, atol=1e-12, rtol=0)


def test_softmax_extreme_inputs_stay_finite():
    p = softmax([1e6, -1e6, 0, 0, 0])
    assert np.all(np.isfinite(p)) and p[0] == 1.0


def test_entropy_examples():
    assert entropy(np.full(5, 0.2)) == pytest.approx(math.log(5), abs=1e-12)
    assert entropy([1.0, 0, 0, 0, 0]) == 0.0
    assert entropy([0.5, 0.5, 0, 0, 0]) == pytest.approx(math.log(2), abs=1e-12)


@given(arrays(np.float64, 5, elements=st.floats(-0.05, 0.05)))
def test_entropy_max_at_uniform(delta):
    delta = delta - delta.mean()  # stay on the simplex
    p = np.full(5, 0.2) + delta
    if np.allclose(delta, 0):
        return
    assert entropy(p) < math.log(5)


# -- backprop -------------------------------------------------------------------


def test_backprop_zero_output_gradient():
    net = init_network(0, [4, 8, 3])
    assert np.array_equal(backprop(net, np.ones(4), np.zeros(3)), np.zeros(net.n_params))


def test_backprop_linear_closed_form():
    rng = np.random.default_rng(3)
    net = init_network(rng, [3, 2])
    x = rng.normal(size=3)
    for i in range(2):
        g = np.zeros(2)
        g[i] = 1.0
        grad = unflatten(net.layer_dims, backprop(net, x, g))
        expected = np.zeros((3, 2))
        expected[:, i] = x
        assert np.array_equal(grad.weights[0], expected)
        assert np.array_equal(grad.biases[0], g)


def test_backprop_matches_finite_differences():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        dims = [int(rng.integers(1, 6))] + [int(rng.integers(1, 8)) for _ in range(int(rng.integers(1, 3)))] + [
            int(rng.integers(1, 5))]
        net = init_network(rng, dims)
        net.params += rng.normal(0, 0.1, net.n_params)
        x = rng.normal(size=(3, dims[0]))
        g = rng.normal(size=(3, dims[-1]))
        analytic = backprop(net, x, g)
        numeric = finite_difference(lambda: float(np.sum(net.forward(x) * g)), net.params)
        worst = max(worst, max_rel_err(analytic, numeric))
    assert worst < 1e-4


# -- optimizer -------------------------------------------------------------------


def test_adam_zero_gradient_fixpoint():
    params = np.array([1.0, -2.0, 3.0])
    before = params.copy()
    optimizer_step(params, np.zeros(3), AdamState(3))
    assert np.array_equal(params, before)


def test_adam_descends():
    params = np.array([0.0])
    state = AdamState(1)
    prev = params[0]
    for _ in range(10):
        optimizer_step(params, np.array([1.0]), state)
        assert params[0] < prev
        prev = params[0]


def scalar_adam_trajectory(lr, steps=100, theta=1.0):
    """Plain-float Adam on f(t) = t**2, written out from the update equations."""
    m = v = 0.0
    out = [theta]
    for t in range(1, steps + 1):
        g = 2 * theta
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta -= lr * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        out.append(theta)
    return out


@pytest.mark.parametrize("lr", [1e-3, 2e-2])
def test_adam_quadratic_trajectory(lr):
    theta = np.array([1.0])
    state = AdamState(1, lr=lr)
    traj = [1.0]
    for _ in range(100):
        optimizer_step(theta, 2 * theta, state)
        traj.append(theta[0])
    assert np.allclose(traj, scalar_adam_trajectory(lr), atol=1e-12, rtol=0)


def test_adam_quadratic_converges():
    # Adam travels at most ~lr per step, so 100 steps need lr well above 1e-3.
    theta = np.array([1.0])
    state = AdamState(1, lr=2e-2)
    for _ in range(100):
        optimizer_step(theta, 2 * theta, state)
    assert abs(theta[0]) < 0.2
    assert scalar_adam_trajectory(1e-3)[-1] == pytest.approx(0.9017, abs=1e-4)


def test_adam_first_step_is_lr():
    theta = np.array([1.0])
    optimizer_step(theta, np.array([5.0]), AdamState(1, lr=1e-3))
    assert theta[0] == pytest.approx(1.0 - 1e-3, abs=1e-10)


def test_adam_length_mismatch():
    with pytest.raises(ValueError):
        optimizer_step(np.zeros(3), np.zeros(2), AdamState(3))


# -- flatten / checkpoints ---------------------------------------------------------


def test_flatten_roundtrip():
    net = init_network(5, [4, 8, 5])
    assert unflatten(net.layer_dims, flatten(net)) == net
    assert np.array_equal(flatten(DenseNet([4, 8, 5])), np.zeros(85))


def test_flatten_order_is_layer_major_row_major():
    net = init_network(6, [2, 3, 1])
    expected = np.concatenate([net.weights[0].ravel(), net.biases[0], net.weights[1].ravel(), net.biases[1]])
    assert np.array_equal(flatten(net), expected)


def test_unflatten_length_mismatch():
    with pytest.raises(ValueError):
        unflatten([4, 8, 5], np.zeros(84))


def test_save_load_roundtrip(tmp_path):
    net = init_network(7, [6, 64, 64, 5])
    save_params(net, tmp_path / "a.gmrl")
    loaded = load_params(tmp_path / "a.gmrl")
    assert loaded == net
    assert loaded.params.tobytes() == net.params.tobytes()


def test_checkpoint_layout(tmp_path):
    net = init_network(8, [2, 3])
    save_params(net, tmp_path / "a.gmrl")
    data = (tmp_path / "a.gmrl").read_bytes()
    assert data[:4] == b"GMRL" and data[4] == 1
    assert data[5:9] == (2).to_bytes(4, "little")
    assert data[9:13] == (2).to_bytes(4, "little") and data[13:17] == (3).to_bytes(4, "little")
    assert np.array_equal(np.frombuffer(data[17:], "<f8"), net.params)


def test_load_truncated(tmp_path):
    save_params(init_network(9, [4, 8, 5]), tmp_path / "a.gmrl")
    data = (tmp_path / "a.gmrl").read_bytes()
    for cut in (3, 8, 12, len(data) - 1):
        (tmp_path / "b.gmrl").write_bytes(data[:cut])
        with pytest.raises(CheckpointError):
            load_params(tmp_path / "b.gmrl")


def test_load_wrong_dims(tmp_path):
    save_params(init_network(9, [4, 8, 5]), tmp_path / "a.gmrl")
    with pytest.raises(CheckpointError):
        load_params(tmp_path / "a.gmrl", expected_dims=[4, 8, 6])


def test_load_bad_magic(tmp_path):
    (tmp_path / "a.gmrl").write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(CheckpointError):
        load_params(tmp_path / "a.gmrl")
