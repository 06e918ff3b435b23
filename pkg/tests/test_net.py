import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from auction_forge import env, net
from auction_forge import tensor as T
from auction_forge.gradcheck import relative_error


def make(spec_id="D", dtype=np.float64, seed=0, **kw):
    spec = env.SETTINGS[spec_id]
    cfg = net.NetConfig.for_setting(spec, **kw)
    params = net.init_params(cfg, np.random.default_rng(seed), dtype=dtype)
    return cfg, {k: T.Tensor(v) for k, v in params.items()}


def random_inputs(cfg, B, n, m, rng):
    b = rng.uniform(0, 1, size=(B, n, m))
    if cfg.context == "discrete":
        x = rng.integers(1, cfg.bidder_domain + 1, size=(B, n))
        y = rng.integers(1, cfg.item_domain + 1, size=(B, m))
    else:
        x = rng.uniform(-1, 1, size=(B, n, cfg.context_dim))
        y = rng.uniform(-1, 1, size=(B, m, cfg.context_dim))
    return b, x, y


def test_continuous_contexts_pass_through():
    cfg, params = make("G")
    x = np.array([[[0.3, -0.2] + [0.1] * 8]])
    y = np.zeros((1, 2, 10))
    e_x, f_y = net.embed_contexts(cfg, params, x, y)
    assert np.array_equal(e_x.data, x)


def test_discrete_embedding_lookup():
    cfg, params = make("A")
    e_x, f_y = net.embed_contexts(cfg, params, np.array([[3, 1, 3]]), np.array([[1]]))
    assert e_x.shape == (1, 3, 16)
    assert np.array_equal(e_x.data[0, 0], e_x.data[0, 2])
    assert params["embed.bidder"].shape == (5, 16)


def test_discrete_embedding_out_of_range():
    cfg, params = make("A")
    with pytest.raises(IndexError, match="5"):
        net.embed_contexts(cfg, params, np.array([[6, 1, 1]]), np.array([[1]]))


def test_input_layer_shapes_and_bid_channel():
    cfg, params = make("D")
    rng = np.random.default_rng(1)
    b, x, y = random_inputs(cfg, 4, 2, 5, rng)
    e_x, f_y = net.embed_contexts(cfg, params, x, y)
    I = net.input_layer(cfg, params, T.Tensor(b), e_x, f_y)
    assert I.shape == (4, 2, 5, 64)
    assert np.array_equal(I.data[..., 0], b)
    assert params["input.conv1.w"].shape == (1 + 16 + 16, 64)


def test_input_layer_bidder_permutation():
    cfg, params = make("D")
    rng = np.random.default_rng(2)
    b, x, y = random_inputs(cfg, 3, 4, 3, rng)
    perm = rng.permutation(4)

    def run(b, x):
        e_x, f_y = net.embed_contexts(cfg, params, x, y)
        return net.input_layer(cfg, params, T.Tensor(b), e_x, f_y).data

    assert np.allclose(run(b, x)[:, perm], run(b[:, perm], x[:, perm]), atol=1e-12)


def test_degenerate_single_cell_layer():
    cfg, params = make("D")
    rng = np.random.default_rng(3)
    I = T.Tensor(rng.normal(size=(2, 1, 1, 64)))
    _, alpha = net.attention(I, params["layer0.row.query"], params["layer0.row.key"],
                             params["layer0.row.value"], cfg.heads)
    assert np.array_equal(alpha.data, np.ones((2, 1, 4, 1, 1)))
    glob = I.mean(axis=(1, 2), keepdims=True)
    assert np.allclose(glob.data, I.data)
    assert net.interaction_layer(cfg, params, I, 0).shape == (2, 1, 1, 64)
    assert net.interaction_layer(cfg, params, I, cfg.layers - 1).shape == (2, 1, 1, 3)


def test_item_swap_swaps_columns():
    cfg, params = make("D")
    rng = np.random.default_rng(4)
    I = rng.normal(size=(2, 3, 4, 64))
    swapped = I[:, :, [2, 1, 0, 3]]
    F = net.interaction_layer(cfg, params, T.Tensor(I), 0).data
    Fs = net.interaction_layer(cfg, params, T.Tensor(swapped), 0).data
    assert np.allclose(F[:, :, [2, 1, 0, 3]], Fs, atol=1e-10)
    assert np.allclose(I.mean(axis=(1, 2)), swapped.mean(axis=(1, 2)))


def test_attention_rows_normalised_and_duplicates():
    cfg, params = make("D")
    rng = np.random.default_rng(5)
    tok = rng.normal(size=(6, 64))
    tok[4] = tok[1]
    out, alpha = net.attention(T.Tensor(tok), params["layer0.row.query"], params["layer0.row.key"],
                               params["layer0.row.value"], cfg.heads)
    assert np.allclose(alpha.data.sum(axis=-1), 1, atol=1e-6)
    assert out.shape == (6, 64)
    assert np.allclose(out.data[1], out.data[4], atol=1e-12)


def test_output_layer_softmax_columns():
    rng = np.random.default_rng(6)
    out = net.output_layer(T.Tensor(rng.normal(size=(5, 3, 4, 3)) * 4), T.Tensor(rng.uniform(size=(5, 3, 4))))
    assert np.allclose(out.h.data.sum(axis=1), 1, atol=1e-6)


def test_zero_bids_zero_payments():
    cfg, params = make("G")
    rng = np.random.default_rng(7)
    _, x, y = random_inputs(cfg, 8, 2, 5, rng)
    out = net.forward(cfg, params, np.zeros((8, 2, 5)), x, y)
    assert np.all(out.p.data == 0)


def test_output_layer_feasible_on_random_inputs():
    rng = np.random.default_rng(8)
    F = rng.normal(size=(1000, 4, 3, 3)) * 3
    b = rng.uniform(size=(1000, 4, 3))
    out = net.output_layer(T.Tensor(F), T.Tensor(b))
    tot = out.g.data.sum(axis=1)
    assert np.all(tot > 0) and np.all(tot < 1)
    assert np.all(out.p.data >= 0)
    assert np.all(out.p.data <= (out.g.data * b).sum(axis=2))


@pytest.mark.parametrize("n,m", [(1, 1), (2, 5), (3, 1), (5, 10), (7, 3)])
def test_forward_shapes_any_size(n, m):
    cfg, params = make("D", dtype=np.float32)
    b, x, y = random_inputs(cfg, 2, n, m, np.random.default_rng(n * 10 + m))
    out = net.forward(cfg, params, b.astype(np.float32), x, y)
    assert out.g.shape == (2, n, m) and out.p.shape == (2, n)


def test_single_profile_forward():
    cfg, params = make("D", dtype=np.float32)
    b, x, y = random_inputs(cfg, 1, 2, 5, np.random.default_rng(0))
    out = net.forward(cfg, params, b[0].astype(np.float32), x[0], y[0])
    assert out.g.shape == (1, 2, 5)


def permuted_pair(cfg, params, n, m, rng):
    b, x, y = random_inputs(cfg, 2, n, m, rng)
    pn, pm = rng.permutation(n), rng.permutation(m)
    base = net.forward(cfg, params, b, x, y)
    perm = net.forward(cfg, params, b[:, pn][:, :, pm], x[:, pn], y[:, pm])
    dg = np.abs(perm.g.data - base.g.data[:, pn][:, :, pm]).max()
    dp = np.abs(perm.p.data - base.p.data[:, pn]).max()
    return max(dg, dp)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 5), m=st.integers(1, 6),
       sid=st.sampled_from(["D", "G"]))
def test_permutation_equivariance(seed, n, m, sid):
    rng = np.random.default_rng(seed)
    cfg, params = make(sid, dtype=np.float32, seed=seed)
    assert permuted_pair(cfg, params, n, m, rng) < 1e-4


def test_payment_gradient_wrt_bids():
    cfg, params = make("D", dtype=np.float64)
    rng = np.random.default_rng(9)
    b, x, y = random_inputs(cfg, 1, 2, 3, rng)
    bt = T.Tensor(b, requires_grad=True)
    (g,) = T.backward(net.forward(cfg, params, bt, x, y).p[:, 0].sum(), [bt])
    num = T.numeric_grad(lambda: float(net.forward(cfg, params, b, x, y).p.data[0, 0]), b, step=1e-3)
    assert relative_error(g, num) < 1e-3


def test_parameter_count_scale_free():
    a = net.MechanismNet(net.NetConfig.for_setting(env.SETTINGS["D"].resized(2, 5)))
    b = net.MechanismNet(net.NetConfig.for_setting(env.SETTINGS["D"].resized(7, 10)))
    assert a.num_parameters() == b.num_parameters()


def test_layer_output_dims():
    shapes = net.param_shapes(net.NetConfig(bidder_domain=5, item_domain=1, layers=3))
    assert shapes["layer2.conv4.w"] == (64, 3)
    assert shapes["layer0.conv4.w"] == (64, 64) and shapes["layer1.conv4.w"] == (64, 64)
    assert shapes["layer0.conv3.w"] == (192, 64)


def test_config_rejects_d_ne_dh():
    with pytest.raises(ValueError):
        net.NetConfig(d=32, d_h=64)


def test_checkpoint_roundtrip(tmp_path):
    mech = net.MechanismNet(net.NetConfig.for_setting(env.SETTINGS["A"]), seed=3)
    mech.save(tmp_path / "m.ckpt", extra={"epoch": 2})
    back = net.MechanismNet.load(tmp_path / "m.ckpt")
    assert back.cfg == mech.cfg
    for k in mech.params:
        assert back.params[k].tobytes() == mech.params[k].tobytes()
    _, meta = net.load_checkpoint(tmp_path / "m.ckpt")
    assert meta["epoch"] == 2


def test_forward_pure():
    cfg, params = make("G", dtype=np.float32)
    b, x, y = random_inputs(cfg, 3, 2, 5, np.random.default_rng(1))
    b = b.astype(np.float32)
    o1 = net.forward(cfg, params, b, x, y)
    o2 = net.forward(cfg, params, b, x, y)
    assert o1.g.data.tobytes() == o2.g.data.tobytes()
    assert o1.p.data.tobytes() == o2.p.data.tobytes()
