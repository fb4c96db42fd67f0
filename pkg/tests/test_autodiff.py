import numpy as np
import pytest

from augward import autodiff as ad
from augward.autodiff import ShapeError, Tensor, backward, gradcheck, parameter

TOL = 1e-4


def jittered(rng, *shape):
    # keep entries away from 0 so relu kinks and log floors are not crossed by h
    x = rng.normal(size=shape)
    return parameter(np.where(np.abs(x) < 0.1, 0.1 * np.sign(x) + x, x))


def scalarize(t, rng):
    w = Tensor(rng.normal(size=t.shape))
    return ad.total(ad.elementwise_mul(t, w))


PRIMITIVES = {
    "matmul": (lambda a, b: ad.matmul(a, b), [(3, 4), (4, 2)]),
    "add_broadcast": (lambda a, b: ad.add(a, b), [(3, 4), (1, 4)]),
    "scale": (lambda a: ad.scale(a, -2.5), [(2, 3)]),
    "elementwise_mul": (lambda a, b: ad.elementwise_mul(a, b), [(3, 2), (3, 2)]),
    "relu": (lambda a: ad.relu(a), [(4, 3)]),
    "row_sum": (lambda a: ad.row_sum(a), [(3, 5)]),
    "total": (lambda a: ad.total(a), [(2, 2)]),
    "mean": (lambda a: ad.mean(a), [(3, 3)]),
    "segment_sum": (lambda a: ad.segment_sum(a, [2, 0, 2, 1, 0], 3), [(5, 2)]),
    "gather_rows": (lambda a: ad.gather_rows(a, [0, 2, 0, 1]), [(3, 2)]),
    "slice_rows": (lambda a: ad.slice_rows(a, 1, 3), [(4, 2)]),
    "reshape": (lambda a: ad.reshape(a, (6,)), [(2, 3)]),
    "concat_rows": (lambda a, b: ad.concat_rows([a, b]), [(2, 3), (1, 3)]),
    "concat_cols": (lambda a, b: ad.concat_cols([a, b]), [(2, 3), (2, 1)]),
    "softmax_row": (lambda a: ad.softmax_row(a), [(3, 4)]),
    "log_softmax_row": (lambda a: ad.log_softmax_row(a), [(3, 4)]),
    "log": (lambda a: ad.log(ad.elementwise_mul(a, a)), [(2, 3)]),
    "mse_scalar": (lambda a: ad.mse_scalar(a, np.ones((3, 1))), [(3, 1)]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name, rng):
    fn, shapes = PRIMITIVES[name]
    inputs = [jittered(rng, *s) for s in shapes]
    w = np.random.default_rng(1)
    out_shape = fn(*inputs).shape
    weights = Tensor(w.normal(size=out_shape))
    assert gradcheck(lambda *xs: ad.total(ad.elementwise_mul(fn(*xs), weights)), inputs) < TOL


def test_dropout_gradient_uses_saved_mask(rng):
    x = jittered(rng, 4, 5)
    weights = Tensor(rng.normal(size=(4, 5)))
    f = lambda a: ad.total(ad.elementwise_mul(ad.dropout(a, 0.5, np.random.default_rng(7)), weights))
    assert gradcheck(f, [x]) < TOL
    assert ad.dropout(x, 0.5, rng, train=False) is x
    with pytest.raises(ValueError):
        ad.dropout(x, 1.0, rng)


def test_examples():
    a = parameter(np.arange(6.0).reshape(2, 3))
    b = parameter(np.ones((3, 1)))
    backward(ad.total(ad.matmul(a, b)))
    assert np.array_equal(a.grad, np.ones((2, 3)))
    assert np.array_equal(b.grad, [[3.0], [5.0], [7.0]])  # column sums of a
    assert np.array_equal(ad.segment_sum(Tensor([1.0, 2.0, 3.0]), [0, 0, 1], 2).data, [3.0, 3.0])
    assert np.array_equal(ad.softmax_row(Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    x = parameter([1.0, 2.0, 3.0])
    backward(ad.total(x))
    assert np.array_equal(x.grad, [1, 1, 1])
    w = parameter(1.0)
    backward(ad.mse_scalar(w * Tensor(2.0), 0.0))
    assert w.grad == 8.0


def test_linearity_of_backward(rng):
    x = jittered(rng, 3, 3)
    f = lambda t: ad.total(ad.relu(ad.matmul(t, t)))
    g = lambda t: ad.total(ad.softmax_row(t))
    grads = []
    for prog in (f, g, lambda t: ad.add(ad.scale(f(t), 2.0), ad.scale(g(t), -3.0))):
        x.zero_grad()
        backward(prog(x))
        grads.append(x.grad.copy())
    assert np.allclose(grads[2], 2 * grads[0] - 3 * grads[1], atol=1e-12, rtol=0)


def test_shared_subexpression_accumulates():
    x = parameter(3.0)
    y = x * x
    backward(y + y)
    assert x.grad == 12.0


def test_no_grad_records_nothing():
    x = parameter([1.0, 2.0])
    with ad.no_grad():
        y = ad.total(x)
    assert not y.requires_grad
    with pytest.raises(RuntimeError):
        backward(y)


def test_backward_errors():
    with pytest.raises(ShapeError):
        backward(ad.scale(parameter([1.0, 2.0]), 1.0))
    with pytest.raises(ShapeError):
        ad.matmul(parameter(np.ones((2, 3))), parameter(np.ones((2, 3))))
    with pytest.raises(ShapeError):
        ad.segment_sum(parameter(np.ones((2, 1))), [0, 5], 2)


def test_log_is_finite_at_zero():
    x = parameter([0.0, 1.0])
    y = ad.log(x)
    assert np.isfinite(y.data).all()
    backward(ad.total(y))
    assert x.grad[0] == 0.0 and x.grad[1] == 1.0


def test_log_softmax_stable_for_large_margins():
    out = ad.log_softmax_row(Tensor([[1000.0, 0.0]])).data
    assert np.isfinite(out).all() and out[0, 1] == pytest.approx(-1000.0)


def test_determinism(rng):
    def run():
        x = parameter(np.random.default_rng(3).normal(size=(5, 4)))
        backward(ad.total(ad.relu(ad.matmul(x, ad.reshape(x, (4, 5))))))
        return x.grad

    assert np.array_equal(run(), run())


def test_two_layer_mlp_gradcheck(rng):
    X = Tensor(rng.normal(size=(6, 3)))
    W1, b1, W2 = jittered(rng, 3, 8), jittered(rng, 1, 8), jittered(rng, 8, 2)
    f = lambda w1, bb, w2: ad.mean(ad.matmul(ad.relu(ad.add(ad.matmul(X, w1), bb)), w2))
    assert gradcheck(f, [W1, b1, W2]) < TOL
