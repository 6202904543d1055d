import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diverse_inpaint.tensor import (
    DimensionError,
    GraphError,
    Tensor,
    activation,
    avg_pool2d,
    concat,
    conv2d,
    grad_check,
    matmul,
    no_grad,
    read_tensor,
    sigmoid,
    tensor_from_bytes,
    tensor_to_bytes,
    upsample_nearest,
    write_tensor,
)
from oracles import conv2d_loops


def test_conv_zero_input():
    out = conv2d(Tensor(np.zeros((1, 1, 3, 3))), Tensor(np.ones((4, 1, 3, 3))), 1, 1)
    assert out.shape == (1, 4, 3, 3)
    assert np.all(out.data == 0)


def test_conv_scalar_product():
    out = conv2d(Tensor([[[[2.0]]]]), Tensor([[[[3.0]]]]), 1, 0)
    assert out.data.tolist() == [[[[6.0]]]]


@pytest.mark.parametrize("stride,padding", [(1, 1), (1, 0), (2, 1), (2, 0)])
def test_conv_matches_loop_oracle(rng, stride, padding):
    x = rng.normal(size=(2, 2, 5, 5))
    w = rng.normal(size=(3, 2, 3, 3))
    got = conv2d(Tensor(x), Tensor(w), stride, padding).data
    np.testing.assert_allclose(got, conv2d_loops(x, w, stride, padding), rtol=0, atol=1e-12)


def test_conv_output_extent(rng):
    out = conv2d(Tensor(rng.normal(size=(1, 1, 7, 9))), Tensor(rng.normal(size=(2, 1, 3, 3))), 2, 1)
    assert out.shape == (1, 2, 4, 5)


def test_conv_errors():
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(DimensionError):
        conv2d(Tensor(np.zeros((1, 1, 4, 4))), Tensor(np.zeros((1, 1, 2, 2))))


def test_conv_gradients_against_loop_oracle(rng):
    x = Tensor(rng.normal(size=(1, 2, 4, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(2, 2, 3, 3)), requires_grad=True)
    g = rng.normal(size=(1, 2, 4, 4))
    (conv2d(x, w, 1, 1) * g).sum().backward()
    # the loss is linear in w, so d loss / d w[o,c,u,v] is the oracle applied to a unit kernel
    for idx in [(0, 0, 0, 0), (1, 1, 2, 1), (0, 1, 1, 2)]:
        unit = np.zeros_like(w.data)
        unit[idx] = 1.0
        assert w.grad[idx] == pytest.approx(float((conv2d_loops(x.data, unit, 1, 1) * g).sum()), abs=1e-12)


def test_upsample_block_replication_and_grad():
    x = Tensor(np.arange(4.0).reshape(1, 1, 2, 2), requires_grad=True)
    y = upsample_nearest(x, 3)
    assert y.shape == (1, 1, 6, 6)
    assert np.all(y.data[0, 0, :3, 3:] == 1.0)
    y.sum().backward()
    assert np.all(x.grad == 9.0)
    assert upsample_nearest(x, 1).data.tolist() == x.data.tolist()
    with pytest.raises(ValueError):
        upsample_nearest(x, 0)


def test_avg_pool(rng):
    x = rng.normal(size=(1, 2, 4, 6))
    got = avg_pool2d(Tensor(x), 2).data
    np.testing.assert_allclose(got, x.reshape(1, 2, 2, 2, 3, 2).mean(axis=(3, 5)), atol=1e-15)


def test_activations_values():
    v = np.array([-2.0, -0.5, 0.5, 2.0])
    t = Tensor(v)
    assert activation(t, "relu").data.tolist() == [0, 0, 0.5, 2.0]
    assert activation(t, "leaky-relu").data.tolist() == [-0.4, -0.1, 0.5, 2.0]
    np.testing.assert_allclose(activation(t, "tanh").data, np.tanh(v), atol=1e-15)
    np.testing.assert_allclose(activation(t, "sigmoid").data, 1 / (1 + np.exp(-v)), atol=1e-15)
    with pytest.raises(ValueError):
        activation(t, "swish")


def test_sigmoid_extremes_stay_finite():
    s = sigmoid(Tensor(np.array([-1000.0, 1000.0]))).data
    assert s.tolist() == [0.0, 1.0]


def test_broadcast_gradients_sum_over_expanded_axes(rng):
    a = Tensor(rng.normal(size=(2, 3, 4, 4)), requires_grad=True)
    b = Tensor(rng.normal(size=(1, 3, 1, 1)), requires_grad=True)
    (a * b + b).sum().backward()
    np.testing.assert_allclose(b.grad, (a.data + 1).sum(axis=(0, 2, 3), keepdims=True), atol=1e-12)
    np.testing.assert_allclose(a.grad, np.broadcast_to(b.data, a.shape), atol=0)


def test_shared_subgraph_accumulates(rng):
    x = Tensor(rng.normal(size=(3,)), requires_grad=True)
    y = x * x
    (y + y * 2.0).sum().backward()
    np.testing.assert_allclose(x.grad, 6 * x.data, atol=1e-12)


def test_backward_requires_scalar():
    with pytest.raises(GraphError):
        Tensor(np.ones(3), requires_grad=True).__mul__(2.0).backward()


def test_no_grad_builds_no_graph():
    x = Tensor(np.ones(2), requires_grad=True)
    with no_grad():
        y = (x * 3.0).sum()
    assert not y.requires_grad


def test_indexing_and_concat_grads(rng):
    x = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    y = concat([x[1:3], x[[0, 0]]], axis=0)
    y.sum().backward()
    assert x.grad.tolist() == [[2.0] * 3, [1.0] * 3, [1.0] * 3, [0.0] * 3]


def test_matmul_grad_check(rng):
    a = Tensor(rng.normal(size=(3, 4)))
    b = Tensor(rng.normal(size=(4, 2)))
    rep = grad_check(lambda p, q: (matmul(p, q) ** 2).sum(), [a, b], op_name="matmul")
    assert rep.op_name == "matmul"
    assert rep.tested_point_count == 20
    assert rep.passed(1e-6)


def test_grad_check_catches_wrong_gradient(rng):
    from diverse_inpaint.tensor import _make

    def bad_square(x):
        out = _make(x.data ** 2, (x,))
        out._backward = lambda g: x._accumulate(g * 3 * x.data)
        return out.sum()

    rep = grad_check(bad_square, Tensor(rng.uniform(1, 2, size=5)))
    assert not rep.passed(1e-3)
    assert rep.max_relative_error >= 0


@pytest.mark.parametrize("shape", [(), (5,), (2, 3), (1, 2, 3, 4)])
def test_serialization_round_trip(rng, shape):
    arr = rng.normal(size=shape)
    back = tensor_from_bytes(tensor_to_bytes(arr)).data
    assert back.shape == arr.shape
    assert back.tobytes() == arr.tobytes()


def test_serialization_stream_and_magic(rng):
    buf = io.BytesIO()
    write_tensor(buf, Tensor(np.ones((2, 2))))
    write_tensor(buf, np.zeros(3))
    buf.seek(0)
    assert read_tensor(buf).shape == (2, 2)
    assert read_tensor(buf).shape == (3,)
    with pytest.raises(ValueError):
        tensor_from_bytes(b"XXXX" + b"\0" * 8)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(3, 6), st.integers(0, 1000))
def test_conv_is_linear_in_input(cin, cout, size, seed):
    r = np.random.default_rng(seed)
    w = Tensor(r.normal(size=(cout, cin, 3, 3)))
    a, b = r.normal(size=(2, 1, cin, size, size))
    lhs = conv2d(Tensor(2 * a - b), w, 1, 1).data
    rhs = 2 * conv2d(Tensor(a), w, 1, 1).data - conv2d(Tensor(b), w, 1, 1).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 1000))
def test_upsample_then_pool_is_identity(factor, seed):
    x = np.random.default_rng(seed).normal(size=(1, 2, 3, 3))
    back = avg_pool2d(upsample_nearest(Tensor(x), factor), factor).data
    np.testing.assert_allclose(back, x, atol=1e-14)
