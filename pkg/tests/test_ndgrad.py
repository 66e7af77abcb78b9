"""Tensor op semantics, backward rules, and the finite-difference oracle."""

import numpy as np
import pytest

from rulattack import ndgrad as ng
from rulattack.errors import DimensionError, DomainError, UsageError
from rulattack.ndgrad import Tensor, backward, finite_diff_check


def test_matmul_identity_is_exact():
    a = Tensor([[5.0, 6.0], [7.0, 8.0]])
    eye = Tensor(np.eye(2))
    assert np.array_equal(ng.matmul(eye, a).data, a.data)
    assert np.array_equal(ng.matmul(a, eye).data, a.data)


def test_matmul_hand_computed():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[5.0, 6.0], [7.0, 8.0]])
    assert np.array_equal(ng.matmul(a, b).data, [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError) as exc:
        ng.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    assert "(2, 3)" in str(exc.value)


def test_matmul_grad_matches_finite_differences():
    rng = np.random.default_rng(42)
    b = Tensor(rng.uniform(-1, 1, (3, 3)))

    def f(a):
        return ng.matmul(a, b).sum()

    ok, err = finite_diff_check(f, Tensor(rng.uniform(-1, 1, (3, 3))), tol=1e-6)
    assert ok, f"worst relative error {err}"


def test_sigmoid_and_tanh_at_zero():
    assert ng.sigmoid(Tensor(np.zeros(3))).data[0] == 0.5
    assert ng.tanh(Tensor(np.zeros(3))).data[0] == 0.0


def test_sigmoid_derivative_at_zero():
    x = Tensor(np.zeros(1), requires_grad=True)
    backward(ng.sigmoid(x).sum())
    assert x.grad[0] == pytest.approx(0.25, abs=1e-12)
    ok, _ = finite_diff_check(lambda t: ng.sigmoid(t).sum(), Tensor(np.zeros(1)))
    assert ok


def test_elementwise_shape_errors():
    a, b = Tensor(np.ones((2, 2))), Tensor(np.ones((2, 3)))
    for op in (ng.add, ng.sub, ng.mul):
        with pytest.raises(DimensionError):
            op(a, b)


def test_mse_loss_values_and_gradient():
    same = Tensor([1.0, 2.0, 3.0])
    assert ng.mse_loss(same, Tensor([1.0, 2.0, 3.0])).item() == 0.0

    pred = Tensor([2.0], requires_grad=True)
    loss = ng.mse_loss(pred, Tensor([0.0]))
    assert loss.item() == 4.0
    backward(loss)
    assert pred.grad[0] == 4.0  # 2 * (2 - 0) / 1


def test_mse_loss_empty_is_domain_error():
    with pytest.raises(DomainError):
        ng.mse_loss(Tensor(np.empty(0)), Tensor(np.empty(0)))


def test_backward_of_sum_is_ones():
    x = Tensor(np.arange(5.0), requires_grad=True)
    backward(x.sum())
    assert np.array_equal(x.grad, np.ones(5))


def test_backward_scalar_chain_analytic():
    # loss = mse(w*x, y) for scalars: d/dx = 2w(wx - y)
    w_val, x_val, y_val = 1.7, -0.4, 2.2
    x = Tensor([x_val], requires_grad=True)
    loss = ng.mse_loss(ng.mul(Tensor([w_val]), x), Tensor([y_val]))
    backward(loss)
    assert x.grad[0] == pytest.approx(2 * w_val * (w_val * x_val - y_val), rel=1e-12)


def test_backward_usage_errors():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(UsageError):
        backward(ng.add(x, x))  # non-scalar
    with pytest.raises(UsageError):
        backward(Tensor([1.0]))  # detached: no op produced it


def test_backward_is_write_once_per_pass():
    x = Tensor(np.ones(3), requires_grad=True)
    backward(x.sum())
    with pytest.raises(UsageError):
        backward(x.sum())
    x.reset_grad()
    backward(x.sum())  # fine after a reset
    assert np.array_equal(x.grad, np.ones(3))


def test_backward_linearity_over_losses():
    rng = np.random.default_rng(7)
    vals = rng.uniform(-1, 1, 4)

    def grad_of(fn):
        x = Tensor(vals, requires_grad=True)
        backward(fn(x))
        return x.grad

    g1 = grad_of(lambda x: ng.sigmoid(x).sum())
    g2 = grad_of(lambda x: ng.mul(x, x).sum())
    g12 = grad_of(lambda x: ng.add(ng.sigmoid(x).sum(), ng.mul(x, x).sum()))
    np.testing.assert_allclose(g12, g1 + g2, rtol=1e-12)


def test_ops_are_deterministic():
    rng = np.random.default_rng(3)
    a, b = rng.uniform(-1, 1, (4, 4)), rng.uniform(-1, 1, (4, 4))

    def run():
        x = Tensor(a, requires_grad=True)
        out = ng.mse_loss(ng.tanh(ng.matmul(x, Tensor(b))), Tensor(np.zeros((4, 4))))
        backward(out)
        return out.item(), x.grad.copy()

    v1, g1 = run()
    v2, g2 = run()
    assert v1 == v2
    assert np.array_equal(g1, g2)


@pytest.mark.parametrize(
    "name,fn,shape",
    [
        ("add", lambda x, c: ng.add(x, c).sum(), (3, 3)),
        ("sub", lambda x, c: ng.sub(c, x).sum(), (3, 3)),
        ("mul", lambda x, c: ng.mul(x, c).mean(), (3, 3)),
        ("scale", lambda x, c: ng.scale(x, -2.5).sum(), (3, 3)),
        ("sigmoid", lambda x, c: ng.sigmoid(x).sum(), (2, 4)),
        ("tanh", lambda x, c: ng.tanh(x).mean(), (2, 4)),
        ("add_bias", lambda x, c: ng.add_bias(c, x).sum(), (3,)),
        ("row", lambda x, c: ng.mul(ng.row(x, 1), ng.row(x, 1)).sum(), (3, 3)),
        ("cols", lambda x, c: ng.tanh(ng.cols(x, 1, 3)).sum(), (3, 4)),
        ("hstack", lambda x, c: ng.sigmoid(ng.hstack([x, c])).sum(), (3, 2)),
        ("mse", lambda x, c: ng.mse_loss(x, c), (3, 3)),
    ],
)
def test_every_op_gradient_matches_finite_differences(name, fn, shape):
    rng = np.random.default_rng(hash(name) % 2**32)
    const_shape = (3, 3) if name in ("add_bias",) else shape
    c = Tensor(rng.uniform(-1, 1, const_shape))
    ok, err = finite_diff_check(lambda t: fn(t, c), Tensor(rng.uniform(-1, 1, shape)), tol=1e-4)
    assert ok, f"{name}: worst relative error {err}"


def test_finite_diff_check_exact_for_linear():
    ok, err = finite_diff_check(lambda t: t.sum(), Tensor(np.arange(6.0).reshape(2, 3)))
    assert ok
    assert err < 1e-9


def test_finite_diff_check_flags_corrupted_backward():
    def bad_square(x):
        # wrong rule on purpose: claims d(x^2)/dx = 3x
        def bw(g):
            ng._accum(x, g * 3.0 * x.data)

        return ng._node(x.data * x.data, (x,), bw)

    ok, err = finite_diff_check(lambda t: bad_square(t).sum(), Tensor(np.ones(4) * 0.7))
    assert not ok
    assert err > 1e-2


def test_composed_graph_matches_finite_differences_tightly():
    rng = np.random.default_rng(11)
    w = Tensor(rng.uniform(-1, 1, (4, 4)))

    def f(x):
        h = ng.tanh(ng.matmul(x, w))
        return ng.mse_loss(ng.sigmoid(h), Tensor(np.full((3, 4), 0.25)))

    ok, err = finite_diff_check(f, Tensor(rng.uniform(-1, 1, (3, 4))), step=1e-5, tol=1e-5)
    assert ok, f"worst relative error {err}"


def test_tape_trace_orders_inputs_before_outputs():
    x = Tensor(np.ones(2), requires_grad=True)
    a = ng.sigmoid(x)
    b = ng.mul(a, a)
    loss = b.sum()
    tape = ng.Tape.trace(loss)
    order = {id(t): i for i, t in enumerate(tape.entries)}
    assert order[id(x)] < order[id(a)] < order[id(b)] < order[id(loss)]


def test_fanout_accumulates_once_per_use():
    # y = x*x + x has dy/dx = 2x + 1 even with x used three times
    x = Tensor([1.5], requires_grad=True)
    backward(ng.add(ng.mul(x, x), x).sum())
    assert x.grad[0] == pytest.approx(2 * 1.5 + 1, rel=1e-12)
