import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from auction_forge import tensor as T
from auction_forge.gradcheck import check_op, OP_CASES
from auction_forge.optim import AdamState, adam_step


def test_softmax_uniform():
    out = T.softmax(T.Tensor([0.0, 0.0, 0.0]))
    assert np.allclose(out.data, 1 / 3)


def test_sigmoid_zero():
    assert T.sigmoid(T.Tensor(0.0)).item() == 0.5


def test_relu_definition():
    assert np.array_equal(T.relu(T.Tensor([-1.5, 2.0])).data, [0.0, 2.0])


def test_sigmoid_derivative_at_zero():
    x = T.Tensor(0.0, requires_grad=True)
    (g,) = T.backward(T.sigmoid(x), [x])
    assert g == pytest.approx(0.25)


def test_sum_gradient_is_ones():
    x = T.Tensor(np.random.default_rng(0).normal(size=(3, 4)), requires_grad=True)
    (g,) = T.backward(x.sum(), [x])
    assert np.array_equal(g, np.ones((3, 4)))


def test_unreachable_leaf_gets_zero():
    x = T.Tensor(np.ones(3), requires_grad=True)
    y = T.Tensor(np.ones((2, 2)), requires_grad=True)
    gx, gy = T.backward((x * 2).sum(), [x, y])
    assert np.array_equal(gx, 2 * np.ones(3))
    assert np.array_equal(gy, np.zeros((2, 2)))


def test_fanout_accumulates():
    x = T.Tensor(3.0, requires_grad=True, dtype=np.float64)
    y = x * x + x
    (g,) = T.backward(y, [x])
    assert g == pytest.approx(7.0)


def test_backward_rejects_non_scalar():
    x = T.Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(T.ShapeError):
        T.backward(x * 2, [x])


def test_shape_error_names_op_and_shapes():
    with pytest.raises(T.ShapeError, match=r"matmul.*\(2, 3\).*\(2, 3\)"):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))
    with pytest.raises(T.ShapeError, match="add"):
        T.add(T.Tensor(np.ones(3)), T.Tensor(np.ones(4)))


def test_embedding_out_of_range():
    table = T.Tensor(np.zeros((5, 4)))
    with pytest.raises(IndexError, match="7.*5"):
        T.take_rows(table, np.array([1, 7]))


def test_topo_order_parents_first():
    x = T.Tensor(np.ones(2), requires_grad=True)
    z = (x * 2 + x).sum()
    order = T.topo_order(z)
    pos = {id(t): k for k, t in enumerate(order)}
    for node in order:
        for p in node._parents:
            assert pos[id(p)] < pos[id(node)]
    assert len(pos) == len(order)


@pytest.mark.parametrize("kind", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(123)
    for _ in range(3):
        assert check_op(kind, rng) < 1e-4


def test_three_layer_net_gradient():
    rng = np.random.default_rng(5)
    ws = [rng.normal(size=s) for s in [(4, 6), (6, 5), (5, 1)]]
    xs = rng.normal(size=(7, 4))

    def loss_value():
        h = xs
        for k, w in enumerate(ws):
            h = h @ w
            if k < 2:
                h = 1 / (1 + np.exp(-h))
        return float(h.sum())

    leaves = [T.Tensor(w, requires_grad=True) for w in ws]
    h = T.Tensor(xs)
    for k, w in enumerate(leaves):
        h = T.matmul(h, w)
        if k < 2:
            h = T.sigmoid(h)
    grads = T.backward(h.sum(), leaves)
    for w, g in zip(ws, grads):
        num = T.numeric_grad(loss_value, w, step=1e-3)
        rel = np.abs(g - num).max() / max(np.abs(num).max(), 1e-12)
        assert rel < 1e-4


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=1, max_size=8), st.floats(-50, 50))
def test_softmax_probability_and_shift_invariance(xs, shift):
    x = np.array(xs, dtype=np.float64)
    a = T.softmax(T.Tensor(x)).data
    b = T.softmax(T.Tensor(x + shift)).data
    assert np.all(a >= 0)
    assert abs(a.sum() - 1) < 1e-6
    assert np.abs(a - b).max() < 1e-6


def test_forward_deterministic():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5, 3)).astype(np.float32)
    w = rng.normal(size=(3, 3)).astype(np.float32)
    a = T.softmax(T.linear(T.Tensor(x), T.Tensor(w)), axis=-1).data
    b = T.softmax(T.linear(T.Tensor(x), T.Tensor(w)), axis=-1).data
    assert a.tobytes() == b.tobytes()


# -- Adam -----------------------------------------------------------------

def test_adam_zero_grad_no_change():
    p = {"w": np.array([1.0, -2.0], dtype=np.float32)}
    new = adam_step(p, {"w": np.zeros(2, dtype=np.float32)}, AdamState())
    assert np.array_equal(new["w"], p["w"])


def test_adam_unit_gradient_first_step():
    p = {"w": np.array([0.5, 1.0, -1.0])}
    state = AdamState(learning_rate=0.001)
    new = adam_step(p, {"w": np.ones(3)}, state)
    assert np.allclose(p["w"] - new["w"], 0.001, atol=1e-9)
    assert state.step_count == 1


def _scalar_adam_trace(p, grads, lr=0.01, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        p = p - lr * mhat / (vhat ** 0.5 + eps)
        out.append(p)
    return out


def test_adam_two_steps_match_scalar_recurrence():
    p0 = np.array([0.3, -0.7, 2.0])
    g1 = np.array([0.5, -1.5, 0.01])
    g2 = np.array([-0.2, 0.4, 3.0])
    state = AdamState(learning_rate=0.01)
    p1 = adam_step({"w": p0}, {"w": g1}, state)
    p2 = adam_step(p1, {"w": g2}, state)
    for k in range(3):
        ref = _scalar_adam_trace(p0[k], [g1[k], g2[k]])
        assert abs(p1["w"][k] - ref[0]) < 1e-6
        assert abs(p2["w"][k] - ref[1]) < 1e-6
    assert state.step_count == 2
    assert state.first_moment["w"].shape == p0.shape


def test_adam_shape_mismatch():
    with pytest.raises(ValueError, match="shape"):
        adam_step({"w": np.zeros(3)}, {"w": np.zeros(4)}, AdamState())
