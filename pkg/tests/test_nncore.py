import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdforecast.errors import (BatchTooSmall, EmptyMask, InvalidRate,
                               ShapeMismatch)
from pdforecast.nncore import (LSTM, AdamState, Attention, BatchNorm, Dropout,
                               Linear, adam_step, load_checkpoint, mse_loss,
                               save_checkpoint, sigmoid, grad_check)


# ---------------------------------------------------------------------------
# Layer basics


def test_linear_forward_matches_matmul(rng):
    layer = Linear(3, 2, rng)
    x = rng.normal(size=(5, 3))
    np.testing.assert_allclose(layer.forward(x),
                               x @ layer.params["W"].T + layer.params["b"],
                               atol=0)


def test_linear_shape_check(rng):
    layer = Linear(3, 2, rng)
    with pytest.raises(ShapeMismatch):
        layer.forward(np.zeros((5, 4)))


def test_param_counts():
    rng = np.random.default_rng(0)
    assert Linear(32, 16, rng).param_count() == 32 * 16 + 16 == 528
    assert BatchNorm(32).param_count() == 64
    assert Attention(128, rng).param_count() == 128 * 128 + 128 + 128 + 1 == 16641
    # dirs * (4h(in+h) + 8h) with two bias vectors per direction
    assert LSTM(415, 64, True, rng).param_count() \
        == 2 * (4 * 64 * (415 + 64) + 8 * 64) == 246272


def test_batchnorm_training_statistics(rng):
    bn = BatchNorm(3)
    x = rng.normal(2.0, 5.0, size=(64, 3))
    out = bn.forward(x, training=True)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(out.std(axis=0), 1.0, atol=1e-3)
    # running stats move toward the batch stats with momentum 0.1
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=0), atol=1e-12)


def test_batchnorm_eval_uses_running_stats(rng):
    bn = BatchNorm(2)
    x = rng.normal(size=(32, 2))
    bn.forward(x, training=True)
    single = bn.forward(x[:1], training=False)     # batch of 1 is fine in eval
    expected = (x[:1] - bn.running_mean) / np.sqrt(bn.running_var + bn.eps)
    np.testing.assert_allclose(single, expected, atol=1e-12)
    with pytest.raises(BatchTooSmall):
        bn.forward(x[:1], training=True)


def test_dropout_inverted_scaling(rng):
    drop = Dropout(0.5)
    x = np.ones((200, 50))
    out = drop.forward(x, training=True, rng=rng)
    kept = out != 0.0
    assert np.allclose(out[kept], 2.0)             # scaled by 1/keep
    assert abs(kept.mean() - 0.5) < 0.05
    assert (drop.forward(x, training=False) == x).all()
    with pytest.raises(InvalidRate):
        Dropout(1.0)


def test_lstm_zero_weights_give_zero_output(rng):
    lstm = LSTM(3, 4, False, rng)
    for k in lstm.params:
        lstm.params[k][:] = 0.0
    out = lstm.forward(rng.normal(size=(2, 5, 3)))
    assert (out == 0.0).all()


def test_lstm_bidirectional_concat(rng):
    lstm = LSTM(3, 4, True, rng)
    out = lstm.forward(rng.normal(size=(2, 5, 3)))
    assert out.shape == (2, 5, 8)


def test_attention_single_timestep_is_identity(rng):
    att = Attention(6, rng)
    h = rng.normal(size=(3, 1, 6))
    np.testing.assert_allclose(att.forward(h), h[:, 0], atol=1e-12)


def test_attention_weights_sum_to_one(rng):
    att = Attention(5, rng)
    att.forward(rng.normal(size=(4, 7, 5)))
    np.testing.assert_allclose(att._alpha.sum(axis=1), 1.0, atol=1e-12)
    assert (att._alpha >= 0).all()


def test_sigmoid_stable_at_extremes():
    out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-12)


# ---------------------------------------------------------------------------
# Loss


def test_mse_loss_masked():
    pred = np.array([[1.0, 2.0], [3.0, 4.0]])
    target = np.array([[0.0, 2.0], [3.0, 0.0]])
    mask = np.array([[True, True], [True, False]])
    loss, grad = mse_loss(pred, target, mask)
    assert loss == pytest.approx(1.0 / 3.0)
    assert grad[1, 1] == 0.0
    assert grad[0, 0] == pytest.approx(2.0 / 3.0)
    with pytest.raises(EmptyMask):
        mse_loss(pred, target, np.zeros_like(mask))


# ---------------------------------------------------------------------------
# Adam


def test_adam_first_step_oracle():
    # with g constant, the first bias-corrected step moves by ~lr
    params = {"w": np.array([1.0])}
    grads = {"w": np.array([2.0])}
    state = AdamState(lr=0.001)
    adam_step(params, grads, state)
    assert params["w"][0] == pytest.approx(1.0 - 0.001, abs=1e-6)


def test_adam_decoupled_weight_decay():
    params = {"w": np.array([1.0])}
    grads = {"w": np.array([0.0])}
    state = AdamState(lr=0.5, weight_decay=0.001)
    adam_step(params, grads, state)
    # zero gradient: only the decay term fires
    assert params["w"][0] == pytest.approx(1.0 - 0.5 * 0.001 * 1.0, abs=1e-12)


def test_adam_converges_on_quadratic():
    params = {"w": np.array([5.0])}
    state = AdamState(lr=0.1)
    for _ in range(500):
        grads = {"w": 2.0 * params["w"]}
        adam_step(params, grads, state)
    assert abs(params["w"][0]) < 1e-3


# ---------------------------------------------------------------------------
# Gradient checker sanity


def test_grad_check_catches_a_wrong_gradient(rng):
    layer = Linear(3, 2, rng)

    class Broken:
        params = layer.params

        def loss(self, x, y, mask=None):
            return mse_loss(layer.forward(x), y, mask)[0]

        def loss_and_grad(self, x, y, mask=None):
            layer.zero_grad()
            loss, dout = mse_loss(layer.forward(x), y, mask)
            layer.backward(dout)
            bad = {k: v * 2.0 for k, v in layer.grads.items()}
            return loss, bad

    report = grad_check(Broken(), rng.normal(size=(4, 3)),
                        rng.normal(size=(4, 2)))
    assert not report.passed


# ---------------------------------------------------------------------------
# Checkpoints


def test_checkpoint_round_trip(tmp_path, rng):
    params = {"a.W": rng.normal(size=(3, 4)), "b": rng.normal(size=(5,)),
              "scalar": np.array(2.5)}
    path = tmp_path / "ck.bin"
    save_checkpoint(params, path)
    back = load_checkpoint(path)
    assert back.keys() == params.keys()
    for k in params:
        np.testing.assert_array_equal(back[k], params[k])
    with pytest.raises(ValueError):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"not a checkpoint")
        load_checkpoint(bad)


# ---------------------------------------------------------------------------
# Properties


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_dropout_zero_rate_is_identity(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 6))
    assert (Dropout(0.0).forward(x, training=True, rng=rng) == x).all()


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=25, deadline=None)
def test_attention_output_in_convex_hull_bounds(seed):
    rng = np.random.default_rng(seed)
    att = Attention(3, rng)
    h = rng.normal(size=(2, 5, 3))
    ctx = att.forward(h)
    assert (ctx <= h.max(axis=1) + 1e-12).all()
    assert (ctx >= h.min(axis=1) - 1e-12).all()
