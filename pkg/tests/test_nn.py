import struct

import numpy as np
import pytest

from elbotune.nn import (
    AdamState,
    DenseNet,
    adam_step,
    backward,
    forward,
    grad_check,
    init_dense,
    load_params,
    save_params,
    zeros_dense,
)


def straight_line_forward(net, x):
    """Loop-by-loop evaluation, independent of the vectorised path."""
    h = list(map(float, x))
    n_layers = len(net.weights)
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for j in range(w.shape[1]):
            s = b[j]
            for i in range(w.shape[0]):
                s += h[i] * w[i, j]
            out.append(s)
        act = net.hidden_activation if k < n_layers - 1 else net.output_activation
        if act == "relu":
            out = [max(v, 0.0) for v in out]
        elif act == "sigmoid":
            out = [1.0 / (1.0 + np.exp(-v)) for v in out]
        elif act == "tanh":
            out = [np.tanh(v) for v in out]
        h = out
    return np.array(h)


def fd_param_grads(net, x, upstream, step=1e-5):
    grads = []
    for p in net.params():
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            lp = float(upstream @ forward(net, x))
            flat[j] = orig - step
            lm = float(upstream @ forward(net, x))
            flat[j] = orig
            gflat[j] = (lp - lm) / (2 * step)
        grads.append(g)
    return grads


@pytest.mark.parametrize("act,expected", [("identity", 0.0), ("sigmoid", 0.5), ("tanh", 0.0)])
def test_zero_net_outputs_activation_of_zero(act, expected):
    net = zeros_dense([5, 7, 3], output_activation=act)
    out = forward(net, np.random.default_rng(0).normal(size=5))
    assert np.array_equal(out, np.full(3, expected))


def test_identity_layer_passes_input_through():
    net = DenseNet([4, 4], [np.eye(4)], [np.zeros(4)])
    x = np.array([0.3, -1.2, 5.0, 0.0])
    assert np.array_equal(forward(net, x), x)


def test_forward_matches_straight_line_oracle():
    rng = np.random.default_rng(42)
    net = init_dense([4, 8, 2], rng, output_activation="tanh")
    x = rng.normal(size=4)
    np.testing.assert_allclose(forward(net, x), straight_line_forward(net, x), rtol=1e-13, atol=1e-15)


def test_forward_rejects_wrong_width():
    net = init_dense([4, 3], np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(net, np.zeros(5))


def test_batch_forward_equals_rowwise():
    rng = np.random.default_rng(1)
    net = init_dense([3, 6, 2], rng)
    xs = rng.normal(size=(5, 3))
    np.testing.assert_allclose(forward(net, xs), np.stack([forward(net, x) for x in xs]), rtol=1e-14)


def test_zero_upstream_gives_zero_gradients():
    rng = np.random.default_rng(2)
    net = init_dense([3, 5, 2], rng)
    grads, gin = backward(net, rng.normal(size=3), np.zeros(2))
    assert all(not g.any() for g in grads) and not gin.any()


def test_linear_layer_weight_gradient_is_outer_product():
    rng = np.random.default_rng(3)
    net = init_dense([3, 2], rng)
    x, up = rng.normal(size=3), rng.normal(size=2)
    grads, gin = backward(net, x, up)
    np.testing.assert_allclose(grads[0], np.outer(x, up))
    np.testing.assert_allclose(grads[1], up)
    np.testing.assert_allclose(gin, net.weights[0] @ up)


def test_backward_matches_finite_differences_6_5_3():
    rng = np.random.default_rng(4)
    net = init_dense([6, 5, 3], rng, output_activation="sigmoid")
    x, up = rng.normal(size=6), rng.normal(size=3)
    grads, _ = backward(net, x, up)
    for ga, gn in zip(grads, fd_param_grads(net, x, up)):
        rel = np.abs(ga - gn) / np.maximum(np.maximum(np.abs(ga), np.abs(gn)), 1e-8)
        assert rel.max() < 1e-4


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(5)
    net = init_dense([4, 6, 3], rng, output_activation="tanh")
    x, up = rng.normal(size=4), rng.normal(size=3)
    _, gin = backward(net, x, up)
    num = np.array([(up @ forward(net, x + e) - up @ forward(net, x - e)) / 2e-5 for e in np.eye(4) * 1e-5])
    np.testing.assert_allclose(gin, num, rtol=1e-6, atol=1e-9)


def test_adam_zero_gradient_is_noop_and_counts_steps():
    rng = np.random.default_rng(6)
    net = init_dense([3, 4, 2], rng)
    before = [p.copy() for p in net.params()]
    state = AdamState.for_net(net)
    zeros = [np.zeros_like(p) for p in net.params()]
    for k in range(25):
        adam_step(net, zeros, state)
        assert state.step_count == k + 1
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params()))


def test_adam_first_step_on_scalar():
    net = DenseNet([1, 1], [np.array([[2.0]])], [np.array([0.0])])
    state = AdamState.for_net(net, learning_rate=0.1)
    adam_step(net, [np.array([[1.0]]), np.array([0.0])], state)
    # t=1: m_hat = g, v_hat = g^2, step = lr * 1 / (1 + eps)
    assert net.weights[0][0, 0] == pytest.approx(2.0 - 0.1 / (1 + 1e-8), abs=1e-15)


def test_adam_is_deterministic():
    a = init_dense([3, 3], np.random.default_rng(7))
    b = init_dense([3, 3], np.random.default_rng(7))
    grads = [np.full_like(p, 0.3) for p in a.params()]
    sa, sb = AdamState.for_net(a), AdamState.for_net(b)
    for _ in range(3):
        adam_step(a, grads, sa)
        adam_step(b, grads, sb)
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
    assert all(np.array_equal(x, y) for x, y in zip(sa.second_moment, sb.second_moment))


def test_initialisation_bounds_and_seed_determinism():
    a = init_dense([9, 4, 2], np.random.default_rng(11))
    b = init_dense([9, 4, 2], np.random.default_rng(11))
    assert all(np.array_equal(x, y) for x, y in zip(a.params(), b.params()))
    assert np.abs(a.weights[0]).max() <= 1 / 3 and np.abs(a.weights[1]).max() <= 0.5


def test_grad_check_linear_quadratic_is_exact():
    rng = np.random.default_rng(8)
    net = init_dense([3, 2], rng)
    target = rng.normal(size=2)
    err = grad_check(net, rng.normal(size=3), lambda y: (0.5 * np.sum((y - target) ** 2), y - target))
    assert err < 1e-6


def test_grad_check_random_small_net():
    rng = np.random.default_rng(9)
    net = init_dense([5, 7, 4, 2], rng, output_activation="sigmoid")
    w = rng.normal(size=2)
    assert grad_check(net, rng.normal(size=5), lambda y: (float(w @ y), w)) < 1e-4


def test_grad_check_constant_loss():
    net = init_dense([3, 4, 2], np.random.default_rng(10))
    assert grad_check(net, np.ones(3), lambda y: (1.5, np.zeros_like(y))) == 0.0


def test_shape_chain_is_validated():
    with pytest.raises(ValueError):
        DenseNet([2, 3], [np.zeros((3, 2))], [np.zeros(3)])


def test_param_file_roundtrip_and_header(tmp_path):
    net = init_dense([3, 5, 2], np.random.default_rng(12), output_activation="tanh")
    path = tmp_path / "net.nnc"
    save_params(path, net)
    raw = path.read_bytes()
    assert raw[:4] == b"NNC1"
    assert struct.unpack_from("<4I", raw, 4) == (3, 3, 5, 2)
    first = np.frombuffer(raw, "<f8", count=1, offset=20)[0]
    assert first == net.weights[0][0, 0]
    back = load_params(path, output_activation="tanh")
    assert back.layer_sizes == [3, 5, 2]
    assert all(np.array_equal(x, y) for x, y in zip(back.params(), net.params()))
    assert len(raw) == 20 + 8 * (3 * 5 + 5 + 5 * 2 + 2)


def test_truncated_param_file_is_rejected(tmp_path):
    net = init_dense([2, 2], np.random.default_rng(0))
    path = tmp_path / "n.nnc"
    save_params(path, net)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_params(path)
