import math

import numpy as np
import pytest

from tsmoco import diffcore as dc
from tsmoco.encoder import encode, init_encoder
from tsmoco.recon import ReconParams, gru_cell, init_recon, reconstruct_future


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


def scalar_gru(x, h, p):
    """Loop-level GRU step on plain lists."""
    C, D = p["gru.wz"].shape
    def pre(g, inp, hid):
        return [sum(inp[i] * p[f"gru.w{g}"][i, j] for i in range(C))
                + sum(hid[k] * p[f"gru.u{g}"][k, j] for k in range(D)) + p[f"gru.b{g}"][j]
                for j in range(D)]
    z = [sig(v) for v in pre("z", x, h)]
    r = [sig(v) for v in pre("r", x, h)]
    rh = [r[k] * h[k] for k in range(D)]
    cand = [math.tanh(v) for v in pre("h", x, rh)]
    return [(1 - z[j]) * h[j] + z[j] * cand[j] for j in range(D)]


def scalar_out(h, p):
    D, C = p["out.weight"].shape
    return [sum(h[k] * p["out.weight"][k, c] for k in range(D)) + p["out.bias"][c] for c in range(C)]


@pytest.fixture
def head():
    rng = np.random.default_rng(0)
    p = init_recon(2, 5, rng)
    for name in ("gru.bz", "gru.br", "gru.bh", "out.bias"):
        p[name].data = rng.normal(scale=0.3, size=p[name].shape)
    return p


def test_cell_matches_scalar_oracle(head):
    rng = np.random.default_rng(1)
    x, h = rng.normal(size=2), rng.normal(size=5)
    state = head.state_dict()
    got = gru_cell(x, dc.constant(h), head).data
    np.testing.assert_allclose(got, scalar_gru(list(x), list(h), state), atol=1e-14)


def test_cell_batched_matches_rows(head):
    rng = np.random.default_rng(2)
    x, h = rng.normal(size=(4, 2)), rng.normal(size=(4, 5))
    batched = gru_cell(x, dc.constant(h), head).data
    for b in range(4):
        np.testing.assert_allclose(batched[b], gru_cell(x[b], dc.constant(h[b]), head).data, atol=1e-15)


def test_k1_is_one_step(head):
    rng = np.random.default_rng(3)
    c, last, fut = rng.normal(size=5), rng.normal(size=2), rng.normal(size=(1, 2))
    out = reconstruct_future(dc.constant(c), fut, last, head).data
    h1 = gru_cell(last, dc.constant(c), head).data
    expected = h1 @ head["out.weight"].data + head["out.bias"].data
    np.testing.assert_allclose(out, expected[None], atol=1e-15)


def test_k3_unrolled_oracle(head):
    rng = np.random.default_rng(4)
    c, last, fut = rng.normal(size=5), rng.normal(size=2), rng.normal(size=(3, 2))
    state = head.state_dict()
    h = list(c)
    expected = []
    for inp in (last, fut[0], fut[1]):
        h = scalar_gru(list(inp), h, state)
        expected.append(scalar_out(h, state))
    out = reconstruct_future(dc.constant(c), fut, last, head).data
    assert out.shape == (3, 2)
    np.testing.assert_allclose(out, expected, atol=1e-13)


def test_all_zero_params_give_zero():
    p = ReconParams.from_state_dict({k: np.zeros_like(v) for k, v in init_recon(3, 4).state_dict().items()})
    out = reconstruct_future(dc.constant(np.ones(4)), np.ones((5, 3)), np.ones(3), p)
    np.testing.assert_array_equal(out.data, np.zeros((5, 3)))


def test_teacher_forcing_causality(head):
    """Prediction j only sees ground truth up to step j-1."""
    rng = np.random.default_rng(5)
    c, last, fut = rng.normal(size=5), rng.normal(size=2), rng.normal(size=(4, 2))
    base = reconstruct_future(dc.constant(c), fut, last, head).data
    bumped = fut.copy()
    bumped[2] += 10.0
    out = reconstruct_future(dc.constant(c), bumped, last, head).data
    np.testing.assert_array_equal(out[:3], base[:3])
    assert np.abs(out[3] - base[3]).max() > 1e-6
    # the final true step never feeds the recurrence
    bumped = fut.copy()
    bumped[3] += 10.0
    np.testing.assert_array_equal(reconstruct_future(dc.constant(c), bumped, last, head).data, base)


def test_bounded_hidden_for_large_inputs(head):
    out = reconstruct_future(dc.constant(np.full(5, 1e6)), np.full((6, 2), 1e6), np.full(2, -1e6), head)
    assert np.all(np.isfinite(out.data))


def test_batch_shape(head):
    out = reconstruct_future(dc.constant(np.zeros((3, 5))), np.zeros((3, 7, 2)), np.zeros((3, 2)), head)
    assert out.shape == (3, 7, 2)


def test_rejects_empty_future(head):
    with pytest.raises(ValueError):
        reconstruct_future(dc.constant(np.zeros(5)), np.zeros((0, 2)), np.zeros(2), head)


def test_gradients_reach_head_and_encoder():
    rng = np.random.default_rng(6)
    enc = init_encoder(2, d_model=4, d_ff=8, n_heads=2, depth=1, rng=rng)
    head = init_recon(2, 4, rng)
    x = rng.normal(size=(2, 8, 2))
    pred = reconstruct_future(encode(x[:, :6], enc), x[:, 6:], x[:, 5], head)
    diff = pred - dc.constant(x[:, 6:])
    dc.backward(dc.mean(diff * diff))
    for p in head.parameters() + enc.parameters():
        assert p.grad is not None
    assert np.abs(enc["cls"].grad).max() > 0
    assert np.abs(head["gru.uz"].grad).max() > 0
    err = dc.check_gradients(
        lambda: dc.mean((lambda d: d * d)(
            reconstruct_future(encode(x[:, :6], enc), x[:, 6:], x[:, 5], head) - dc.constant(x[:, 6:]))),
        head.parameters() + enc.parameters())
    assert err < 1e-6
