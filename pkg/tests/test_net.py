import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crossing.net import (
    GradientBundle,
    Network,
    NetworkSpec,
    backward,
    forward,
    init_network,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
)
from crossing.verification import check_gradients


def zero_network(spec: NetworkSpec) -> Network:
    dims = spec.dims
    return Network(
        spec=spec,
        weights=[np.zeros((dims[i + 1], dims[i])) for i in range(len(dims) - 1)],
        biases=[np.zeros(dims[i + 1]) for i in range(len(dims) - 1)],
    )


def forward_oracle(net: Network, x):
    """Independent straight-line reimplementation with plain Python loops."""
    a = list(x)
    last = len(net.weights) - 1
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = [
            sum(w[r][c] * a[c] for c in range(len(a))) + b[r]
            for r in range(w.shape[0])
        ]
        a = z if layer == last else [max(0.0, v) for v in z]
    return a


def test_parameter_count_for_paper_topology():
    assert NetworkSpec(input_dim=9).param_count() == 1475
    assert NetworkSpec(input_dim=8).param_count() == 1443


@given(
    input_dim=st.integers(1, 12),
    h1=st.integers(1, 16),
    h2=st.integers(1, 16),
    out=st.integers(1, 5),
)
@settings(max_examples=30, deadline=None)
def test_parameter_count_matches_actual_arrays(input_dim, h1, h2, out):
    spec = NetworkSpec(input_dim=input_dim, hidden=(h1, h2), output_dim=out)
    net = init_network(spec, np.random.default_rng(0))
    actual = sum(w.size for w in net.weights) + sum(b.size for b in net.biases)
    assert actual == spec.param_count()


def test_init_deterministic_with_seed():
    spec = NetworkSpec(input_dim=9)
    a = init_network(spec, np.random.default_rng(77))
    b = init_network(spec, np.random.default_rng(77))
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_init_biases_zero_and_weights_bounded():
    spec = NetworkSpec(input_dim=8)
    net = init_network(spec, np.random.default_rng(1))
    dims = spec.dims
    for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
        assert np.all(b == 0.0)
        bound = np.sqrt(6.0 / (dims[layer] + dims[layer + 1]))
        assert np.all(np.abs(w) <= bound)


def test_zero_network_outputs_zero():
    spec = NetworkSpec(input_dim=8)
    net = zero_network(spec)
    assert np.array_equal(forward(net, np.ones(8)), np.zeros(3))


def test_rectifier_clamps_negative_preactivation():
    spec = NetworkSpec(input_dim=1, hidden=(1,), output_dim=1)
    net = Network(
        spec=spec,
        weights=[np.array([[2.0]]), np.array([[3.0]])],
        biases=[np.array([-4.0]), np.array([0.0])],
    )
    # Hidden pre-activation is 2*1 - 4 = -2, rectified to 0.
    assert forward(net, np.array([1.0]))[0] == 0.0


def test_forward_matches_straight_line_oracle():
    rng = np.random.default_rng(9)
    for _ in range(25):
        input_dim = int(rng.integers(2, 10))
        spec = NetworkSpec(input_dim=input_dim, hidden=(5, 4), output_dim=3)
        net = init_network(spec, rng)
        x = rng.uniform(-1, 1, size=input_dim)
        assert forward(net, x) == pytest.approx(forward_oracle(net, x), abs=1e-12)


def test_forward_rejects_dimension_mismatch():
    net = init_network(NetworkSpec(input_dim=8), np.random.default_rng(0))
    with pytest.raises(ValueError):
        forward(net, np.zeros(9))


def test_backward_zero_loss_at_target():
    net = init_network(NetworkSpec(input_dim=8), np.random.default_rng(2))
    x = np.linspace(-1, 1, 8)
    target = float(forward(net, x)[1])
    loss, grads = backward(net, x, 1, target)
    assert loss == 0.0
    assert all(np.all(g == 0.0) for g in grads.weights)
    assert all(np.all(g == 0.0) for g in grads.biases)


def test_backward_quadratic_scaling():
    net = init_network(NetworkSpec(input_dim=8), np.random.default_rng(4))
    x = np.linspace(-1, 1, 8)
    q = float(forward(net, x)[0])
    loss1, _ = backward(net, x, 0, q - 1.0)
    loss2, _ = backward(net, x, 0, q - 2.0)
    assert loss2 == pytest.approx(4.0 * loss1)


def test_backward_rejects_nonfinite_target():
    net = init_network(NetworkSpec(input_dim=8), np.random.default_rng(4))
    with pytest.raises(ValueError):
        backward(net, np.zeros(8), 0, float("nan"))


def test_gradients_match_finite_differences():
    result = check_gradients(n_samples=15, seed=100)
    assert result.passed, result.detail


def test_perturbed_gradient_fails_the_check():
    def corrupt(grads: GradientBundle) -> GradientBundle:
        grads.weights[0] = grads.weights[0] + 0.5
        return grads

    result = check_gradients(n_samples=3, seed=100, perturb=corrupt)
    assert not result.passed


def test_sgd_zero_lr_or_zero_grads_leave_params():
    net = init_network(NetworkSpec(input_dim=8), np.random.default_rng(6))
    snapshot = [w.copy() for w in net.weights]
    x = np.linspace(-1, 1, 8)
    _, grads = backward(net, x, 0, 5.0)
    sgd_step(net, grads, 0.0)
    assert all(np.array_equal(w, s) for w, s in zip(net.weights, snapshot))
    zero = GradientBundle(
        weights=[np.zeros_like(w) for w in net.weights],
        biases=[np.zeros_like(b) for b in net.biases],
    )
    sgd_step(net, zero, 0.5)
    assert all(np.array_equal(w, s) for w, s in zip(net.weights, snapshot))


def test_sgd_scalar_arithmetic():
    spec = NetworkSpec(input_dim=1, hidden=(1,), output_dim=1)
    net = Network(
        spec=spec,
        weights=[np.array([[1.0]]), np.array([[1.0]])],
        biases=[np.array([0.0]), np.array([0.0])],
    )
    grads = GradientBundle(
        weights=[np.array([[2.0]]), np.array([[0.0]])],
        biases=[np.array([0.0]), np.array([0.0])],
    )
    sgd_step(net, grads, 0.1)
    assert net.weights[0][0, 0] == pytest.approx(0.8)


@pytest.mark.parametrize("lr", [1e-3, 1e-4])
def test_one_sgd_step_decreases_loss(lr):
    rng = np.random.default_rng(12)
    for _ in range(10):
        net = init_network(NetworkSpec(input_dim=9), rng)
        x = rng.uniform(-1, 1, size=9)
        action = int(rng.integers(0, 3))
        target = float(rng.uniform(-5, 5))
        loss_before, grads = backward(net, x, action, target)
        if loss_before == 0.0:
            continue
        sgd_step(net, grads, lr)
        loss_after, _ = backward(net, x, action, target)
        assert loss_after < loss_before


def test_checkpoint_round_trip(tmp_path):
    net = init_network(NetworkSpec(input_dim=9), np.random.default_rng(21))
    path = tmp_path / "net.qnet"
    save_checkpoint(net, path)
    loaded = load_checkpoint(path)
    assert loaded.spec == net.spec
    for a, b in zip(net.weights, loaded.weights):
        assert np.array_equal(a, b)
    for a, b in zip(net.biases, loaded.biases):
        assert np.array_equal(a, b)
    # Identical parameters => byte-identical files.
    save_checkpoint(loaded, tmp_path / "net2.qnet")
    assert (tmp_path / "net.qnet").read_bytes() == (tmp_path / "net2.qnet").read_bytes()


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.qnet"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ValueError):
        load_checkpoint(path)


def test_spec_rejects_bad_dims():
    with pytest.raises(ValueError):
        NetworkSpec(input_dim=0)
    with pytest.raises(ValueError):
        NetworkSpec(input_dim=8, hidden=(0,))
