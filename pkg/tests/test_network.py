import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evokan.network import (
    EdgeFunction,
    JetValue,
    Network,
    edge_eval,
    evaluate,
    init_params,
    network_forward,
    network_forward_jet,
    param_jacobian,
)
from evokan.splines import DomainError, basis_functions, make_knots


def fd_jacobian(net, p, X, h=1e-6):
    base = network_forward(net, p, X).ravel()
    J = np.empty((base.size, p.size))
    for j in range(p.size):
        q = p.copy()
        q[j] += h
        J[:, j] = (network_forward(net, q, X).ravel() - base) / h
    return J


def fd_jets(net, p, X, h=1e-4):
    grads, seconds = [], []
    f0 = network_forward(net, p, X)
    for a in range(net.dim):
        e = np.zeros(net.dim)
        e[a] = h
        fp, fm = network_forward(net, p, X + e), network_forward(net, p, X - e)
        grads.append((fp - fm) / (2 * h))
        seconds.append((fp - 2 * f0 + fm) / h**2)
    return np.stack(grads, -1), np.stack(seconds, -1)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_edge_zero():
    kv = make_knots(-1, 1, 5, 3)
    x = JetValue(np.array([0.3, -0.2]), np.ones((2, 1)), np.zeros((2, 1)))
    out = edge_eval(EdgeFunction(np.zeros(8), 0.0, 0.0), kv, x)
    assert not out.value.any() and not out.grad.any() and not out.second.any()


def test_edge_silu_slope():
    kv = make_knots(-1, 1, 5, 3)
    x = JetValue(np.array(0.0), np.array([1.0]), np.array([0.0]))
    out = edge_eval(EdgeFunction(np.zeros(8), 1.0, 0.0), kv, x)
    assert out.value == 0.0
    assert out.grad[0] == pytest.approx(0.5, abs=1e-15)


def test_edge_jets_fd():
    rng = np.random.default_rng(3)
    kv = make_knots(-1, 1, 6, 3)
    e = EdgeFunction(rng.normal(size=9), 0.7, 1.3)
    z = rng.uniform(-0.9, 0.9, 30)

    def f(v):
        return edge_eval(e, kv, JetValue(v, np.ones(v.shape + (1,)), np.zeros(v.shape + (1,))))

    out = f(z)
    h = 1e-5
    d1 = (f(z + h).value - f(z - h).value) / (2 * h)
    d2 = (f(z + h).grad[:, 0] - f(z - h).grad[:, 0]) / (2 * h)
    assert rel(out.grad[:, 0], d1) < 1e-6
    assert rel(out.second[:, 0], d2) < 1e-6


def test_edge_coefficient_count_checked():
    with pytest.raises(DomainError):
        edge_eval(EdgeFunction(np.zeros(3)), make_knots(-1, 1, 5, 3), JetValue(np.zeros(1), np.ones((1, 1)), np.zeros((1, 1))))


def test_zero_network():
    net = Network((2, 3, 1))
    p = np.zeros(net.n_params)
    X = np.random.default_rng(0).uniform(-1, 1, (10, 2))
    assert not network_forward(net, p, X).any()
    jet = network_forward_jet(net, p, X)
    assert not jet.value.any() and not jet.grad.any() and not jet.second.any()


def test_identity_fit_single_edge():
    net = Network((1, 1), embedding="identity", grid=8, order=3)
    kv = net.knots[0]
    xs = np.linspace(-1, 1, 400)
    coef = np.linalg.lstsq(basis_functions(kv, xs)[0], xs, rcond=None)[0]
    p = net.flatten([[np.concatenate([coef, [0.0, 1.0]]).reshape(1, 1, -1)]])
    test = np.linspace(-1, 1, 100)
    assert np.max(np.abs(network_forward(net, p, test)[:, 0] - test)) < 1e-4


def test_periodic_embedding():
    net = Network((2, 4, 2), grid=5)
    p = init_params(net, 5) + 0.1 * np.random.default_rng(5).normal(size=net.n_params)
    X = np.random.default_rng(1).uniform(-1, 1, (50, 2))
    shift = np.array([2.0, -2.0])
    np.testing.assert_allclose(network_forward(net, p, X), network_forward(net, p, X + shift), atol=1e-13, rtol=0)


def test_single_point_shapes():
    net = Network((2, 3, 2), grid=4)
    p = init_params(net)
    assert network_forward(net, p, [0.1, 0.2]).shape == (2,)
    assert network_forward_jet(net, p, [0.1, 0.2]).grad.shape == (2, 2)
    net1 = Network((1, 3, 1), grid=4)
    assert network_forward(net1, init_params(net1), 0.3).shape == (1,)
    assert network_forward(net1, init_params(net1), [0.3, 0.4]).shape == (2, 1)


def test_dimension_mismatch():
    net = Network((2, 3, 1), grid=4)
    with pytest.raises(DomainError):
        network_forward(net, init_params(net), np.zeros((4, 3)))
    with pytest.raises(DomainError):
        network_forward(net, np.zeros(3), np.zeros((4, 2)))


def test_linear_mlp_jets():
    net = Network((2, 3), backend="mlp", embedding="identity")
    W = np.arange(6.0).reshape(3, 2)
    p = net.flatten([[W, np.zeros(3)]])
    jet = network_forward_jet(net, p, np.array([[0.2, -0.4]]))
    np.testing.assert_array_equal(jet.grad[0], W)
    assert not jet.second.any()


def test_jet_value_is_forward_value():
    net = Network((2, 4, 4, 1), grid=6)
    p = init_params(net, 2)
    X = np.random.default_rng(2).uniform(-1, 1, (20, 2))
    np.testing.assert_array_equal(network_forward_jet(net, p, X).value, network_forward(net, p, X))
    jet, _ = evaluate(net, p, X)
    np.testing.assert_array_equal(jet.value, network_forward(net, p, X))


def test_single_edge_jacobian_column():
    net = Network((1, 1), embedding="identity", grid=6)
    rng = np.random.default_rng(0)
    p = init_params(net, 0)
    p[-1] = 1.7  # w_s
    x = rng.uniform(-1, 1, 9)
    J = param_jacobian(net, p, x)
    B = basis_functions(net.knots[0], x)[0]
    np.testing.assert_allclose(J[:, : net.n_basis], 1.7 * B, rtol=1e-14, atol=1e-15)


def test_jacobian_fd_131():
    net = Network((1, 3, 1), grid=6)
    p = init_params(net, 4) + 0.05 * np.random.default_rng(4).normal(size=net.n_params)
    X = np.linspace(-1, 1, 16, endpoint=False)
    assert rel(param_jacobian(net, p, X), fd_jacobian(net, p, X)) < 1e-5


def test_jacobian_zero_inner_layer():
    net = Network((1, 3, 1), grid=5)
    p = init_params(net, 1)
    inner = net.unflatten(p)[0][0]
    inner[...] = 0.0
    X = np.linspace(-1, 1, 12, endpoint=False)
    J = param_jacobian(net, p, X)
    assert np.all(np.isfinite(J))
    assert rel(J, fd_jacobian(net, p, X)) < 1e-5


def test_jacobian_rows_ordering():
    net = Network((2, 3, 2), grid=4)
    p = init_params(net, 0)
    X = np.random.default_rng(0).uniform(-1, 1, (5, 2))
    J = param_jacobian(net, p, X)
    J1 = param_jacobian(net, p, X[3:4])
    np.testing.assert_array_equal(J[6:8], J1)


def test_empty_collocation():
    net = Network((1, 3, 1), grid=4)
    with pytest.raises(DomainError):
        param_jacobian(net, init_params(net), np.zeros((0, 1)))


def test_full_hessian_cross_terms():
    net = Network((2, 3, 1), grid=5)
    p = init_params(net, 9)
    X = np.random.default_rng(9).uniform(-0.8, 0.8, (6, 2))
    jet = network_forward_jet(net, p, X, hessian=True)
    h = 1e-4
    e0, e1 = np.array([h, 0]), np.array([0, h])
    f = lambda Y: network_forward(net, p, Y)  # noqa: E731
    cross = (f(X + e0 + e1) - f(X + e0 - e1) - f(X - e0 + e1) + f(X - e0 - e1)) / (4 * h * h)
    assert rel(jet.hessian[..., 0, 1], cross) < 1e-5
    np.testing.assert_array_equal(jet.hessian[..., 0, 1], jet.hessian[..., 1, 0])
    np.testing.assert_allclose(np.diagonal(jet.hessian, axis1=-2, axis2=-1), network_forward_jet(net, p, X).second,
                               rtol=1e-12, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(widths=st.lists(st.integers(1, 4), min_size=2, max_size=4), backend=st.sampled_from(["kan", "mlp"]),
       seed=st.integers(0, 2**31))
def test_flatten_roundtrip(widths, backend, seed):
    net = Network(tuple(widths), backend=backend, grid=4)
    p = np.random.default_rng(seed).normal(size=net.n_params)
    q = net.flatten(net.unflatten(p))
    assert q.tobytes() == p.tobytes()


def test_kan_layers_view():
    net = Network((1, 2, 1), grid=4)
    p = init_params(net, 0)
    layers = net.kan_layers(p)
    assert [(L.n_in, L.n_out) for L in layers] == [(2, 2), (2, 1)]
    assert len(layers[0].edges) == 2 and len(layers[0].edges[0]) == 2
    assert layers[0].edges[0][0].coef.shape == (net.n_basis,)
