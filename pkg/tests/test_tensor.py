import numpy as np
import pytest

from kcmlab.errors import ContractError, ShapeError
from kcmlab.models import MlpParams, forward
from kcmlab.tensor import Tensor, log_softmax, matmul, minimum, no_grad, relu, softplus
from kcmlab.training import surrogate_loss_binary

from conftest import central_difference, max_relative_error, mlp_numpy


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(matmul(a, b).data, [[1, 2], [3, 4]])


def test_matmul_hand():
    assert matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_matmul_gradient_matches_finite_differences(rng):
    w = rng.standard_normal((3, 4))
    x = rng.standard_normal((4, 2))
    wt = Tensor(w, requires_grad=True)
    matmul(wt, Tensor(x)).sum().backward()
    # d/dW sum(W x) replicates the row sums of x
    np.testing.assert_allclose(wt.grad, np.tile(x.sum(axis=1), (3, 1)))
    numeric = central_difference(lambda: float((w @ x).sum()), [w])
    assert max_relative_error([wt.grad], numeric) <= 1e-6


def test_relu_values_and_gradient():
    x = Tensor([-1.0, 2.0, 0.0], requires_grad=True)
    y = relu(x)
    np.testing.assert_array_equal(y.data, [0, 2, 0])
    y.sum().backward()
    np.testing.assert_array_equal(x.grad, [0, 1, 0])  # subgradient 0 at 0

    x = Tensor([3.0, -3.0], requires_grad=True)
    relu(x).sum().backward()
    assert x.grad.tolist() == [1.0, 0.0]


def test_relu_all_negative():
    x = Tensor(-np.arange(1.0, 5.0), requires_grad=True)
    out = relu(x)
    assert not out.data.any()
    out.sum().backward()
    assert not x.grad.any()


def test_backward_linear_gradient():
    w = Tensor([0.5, -1.0, 2.0], requires_grad=True)
    x = Tensor([1.0, 2.0, 3.0])
    (w * x).sum().backward()
    assert w.grad.tolist() == [1.0, 2.0, 3.0]


def test_backward_through_dead_relu():
    c = Tensor(2.0, requires_grad=True)
    (relu(Tensor(-5.0)) * c).backward()
    assert c.grad == 0.0


def test_backward_errors():
    w = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError, match="scalar"):
        (w * 2.0).backward()
    with pytest.raises(ContractError, match="connected"):
        Tensor(1.0).backward()


def test_backward_accumulates_until_zeroed():
    w = Tensor([1.0, 2.0], requires_grad=True)
    (w * w).sum().backward()
    (w * w).sum().backward()
    assert w.grad.tolist() == [4.0, 8.0]
    w.zero_grad()
    (w * w).sum().backward()
    assert w.grad.tolist() == [2.0, 4.0]


def test_shared_subexpression_visited_once():
    x = Tensor(3.0, requires_grad=True)
    y = x * x
    (y + y).backward()  # d/dx 2x^2 = 4x
    assert x.grad == 12.0


def test_no_grad_records_nothing():
    w = Tensor([1.0], requires_grad=True)
    with no_grad():
        out = w * 2.0
    assert not out.requires_grad


def test_linearity_of_backward(rng):
    w = Tensor(rng.standard_normal(5), requires_grad=True)
    x = Tensor(rng.standard_normal(5))
    softplus(w * x).sum().backward()
    base = w.grad.copy()
    w.zero_grad()
    (softplus(w * x).sum() * 4.0).backward()
    np.testing.assert_array_equal(w.grad, 4.0 * base)  # power-of-two scale is exact


def _random_mlp(rng, dims):
    ws = [rng.standard_normal((o, i)) * np.sqrt(2.0 / i) for i, o in zip(dims[:-1], dims[1:])]
    bs = [rng.standard_normal(o) * 0.1 for o in dims[1:]]
    return ws, bs


def _mlp_grad_error(seed):
    rng = np.random.default_rng(seed)
    ws, bs = _random_mlp(rng, (2, 16, 16, 1))
    x = rng.standard_normal((4, 2))
    y = rng.choice([-1.0, 1.0], size=4)
    params = MlpParams.from_arrays(ws, bs)
    loss = surrogate_loss_binary(forward(params, x).reshape(-1) * Tensor(y))
    loss.backward()
    analytic = [p.grad for p in params.parameters()]
    arrays = [a for pair in zip(ws, bs) for a in pair]

    def oracle():
        z = y * mlp_numpy(ws, bs, x)[:, 0]
        return float(np.mean(np.logaddexp(0.0, -z)))

    numeric = central_difference(oracle, arrays, step=1e-5)
    return max_relative_error(analytic, numeric)


@pytest.mark.parametrize("seed", range(0, 100, 9))
def test_mlp_gradient_matches_finite_differences(seed):
    assert _mlp_grad_error(seed) <= 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_primitive_gradients(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((4, 2))
    c = rng.standard_normal((1, 2))
    t = rng.standard_normal((3, 2))

    def build(a_, b_, c_):
        h = matmul(a_, b_) + c_
        h = relu(h) * Tensor(t) + softplus(h) - minimum(h, 0.3)
        return (log_softmax(h) * Tensor(t)).mean() + (h / 3.0).sum(axis=0).mean()

    ta, tb, tc = (Tensor(v, requires_grad=True) for v in (a, b, c))
    build(ta, tb, tc).backward()

    def oracle():
        return build(Tensor(a), Tensor(b), Tensor(c)).item()

    numeric = central_difference(oracle, [a, b, c])
    assert max_relative_error([ta.grad, tb.grad, tc.grad], numeric) <= 1e-4


def test_determinism(rng):
    def run():
        r = np.random.default_rng(7)
        ws, bs = _random_mlp(r, (2, 8, 1))
        p = MlpParams.from_arrays(ws, bs)
        softplus(forward(p, r.standard_normal((5, 2)))).sum().backward()
        return [q.grad.tobytes() for q in p.parameters()]

    assert run() == run()
