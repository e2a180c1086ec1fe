import numpy as np
import pytest

from dynsurrogate import network as net_mod
from dynsurrogate.errors import DivergenceFailureError, InvalidArgumentError
from dynsurrogate.rng import stream


def _tiny_net(input_dim=3, hidden=4, output=2, rate=0.2, sigma2=0.0, seed=0):
    return net_mod.init_network(
        input_dim, hidden, output,
        net_mod.DropoutSpec(rate=rate, scaled=True),
        seed=seed, sigma2=sigma2,
    )


def test_forward_shapes():
    net = _tiny_net()
    x = np.random.default_rng(0).normal(size=(3, 12))  # (channels, T)
    mask = np.ones(net.hidden_dim)
    y = net_mod.network_forward(net, x, mask)
    assert y.shape == (2, 12)


def test_forget_bias_initialized_to_one():
    net = _tiny_net()
    h = net.hidden_dim
    assert np.all(net.lstm.bias[:h] == 1.0)
    assert np.all(net.lstm.bias[h:] == 0.0)


def test_lstm_batch_matches_single_sequence():
    net = _tiny_net()
    rng = np.random.default_rng(1)
    xs = rng.normal(size=(5, 10, 3))  # (B, T, D)
    batch, _ = net_mod.lstm_forward_batch(net.lstm, xs)
    for b in range(5):
        single, _ = net_mod.lstm_forward(net.lstm, xs[b].T)
        assert np.max(np.abs(batch[b] - single.T)) < 1e-12


def _finite_difference_check(sigma2, tol):
    rng = np.random.default_rng(7)
    net = _tiny_net(sigma2=sigma2, seed=3)
    x = rng.normal(size=(2, 12, 3))
    y = rng.normal(size=(2, 12, 2))
    masks = np.stack(
        [net_mod.sample_dropout_mask(net.dropout, net.hidden_dim, stream(9, 0)) for _ in range(2)]
    )
    _, grads = net_mod.backward(net, x, y, masks, n_train=2)
    params = net_mod.parameters(net)
    h = 1e-6
    for name, p in params.items():
        g = grads[name].ravel()
        fd = np.empty_like(g)
        flat = p.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            pred, _, _, _ = net_mod._forward_masked_batch(net, x, masks)
            lp = net_mod.loss(pred, y, net=net, n_train=2)
            flat[i] = orig - h
            pred, _, _, _ = net_mod._forward_masked_batch(net, x, masks)
            lm = net_mod.loss(pred, y, net=net, n_train=2)
            flat[i] = orig
            fd[i] = (lp - lm) / (2.0 * h)
        # norm-wise agreement at the analytic-gradient scale; per-entry
        # deviations are bounded by central-difference roundoff
        assert np.linalg.norm(g - fd) / np.linalg.norm(g) < tol, name
        denom = np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-3 * np.max(np.abs(g)))
        assert np.max(np.abs(g - fd) / denom) < 1e-4, name


def test_gradient_matches_finite_differences():
    _finite_difference_check(sigma2=0.0, tol=1e-6)


def test_gradient_with_weight_decay():
    _finite_difference_check(sigma2=0.5, tol=1e-6)


def test_dropout_rate_zero_is_deterministic():
    net = _tiny_net(rate=0.0)
    x = np.random.default_rng(2).normal(size=(3, 16))
    ens = net_mod.mc_predict(net, x, 16, stream(5, 0))
    # all realizations are bitwise identical, so the spread is exactly zero
    assert np.max(ens.max(axis=0) - ens.min(axis=0)) == 0.0


def test_scaled_dropout_preserves_expectation():
    spec = net_mod.DropoutSpec(rate=0.3, scaled=True)
    rng = stream(11, 0)
    masks = np.stack([net_mod.sample_dropout_mask(spec, 2000, rng) for _ in range(50)])
    assert np.isclose((masks * spec.keep_scale).mean(), 1.0, atol=0.01)
    unscaled = net_mod.DropoutSpec(rate=0.3, scaled=False)
    assert unscaled.keep_scale == 1.0


def test_loss_regularization_term():
    net = _tiny_net(sigma2=0.0)
    target = np.ones((2, 5, 2))
    base = net_mod.loss(np.zeros_like(target), target, net=net, n_train=4)
    # sigma2 = 0 disables the decay term: loss is exactly 0.5*sum sq / B
    assert np.isclose(base, 0.5 * np.sum(target**2) / 2.0)

    net2 = _tiny_net(sigma2=0.5)
    reg = net_mod.weight_decay_term(net2, n_train=4)
    # decay factor sigma2*(1-p_j)/(2*n_train); dropout applies to the dense
    # weights only, the recurrent matrices keep p_j = 0
    p = net2.dropout.rate
    expect = 0.5 / (2.0 * 4.0) * (
        (1.0 - p) * np.sum(net2.dense.weight**2)
        + np.sum(net2.lstm.w_in**2)
        + np.sum(net2.lstm.w_rec**2)
    )
    assert np.isclose(reg, expect, rtol=1e-12)


def test_adam_single_step_reference():
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.array([0.1, -0.4])}
    state = net_mod.AdamState(lr=0.01)
    net_mod.adam_step(params, grads, state)
    # first bias-corrected step: m-hat = g, sqrt(v-hat) = |g|, so each
    # coordinate moves by lr * g / (|g| + eps)
    expect = np.array([1.0, -2.0]) - 0.01 * np.array([0.1, -0.4]) / (
        np.array([0.1, 0.4]) + 1e-8
    )
    assert np.allclose(params["w"], expect, rtol=1e-14)


def _toy_dataset(n=8, t=10, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 2, t))
    y = 0.5 * x[:, :1, :] + 0.1  # linear map, easily learnable
    return x, y


def test_training_reduces_loss():
    x, y = _toy_dataset(12)
    net = _tiny_net(input_dim=2, hidden=8, output=1, rate=0.1)
    cfg = net_mod.TrainConfig(epochs=60, batch_size=4, lr=0.01, patience=60, seed=1)
    result = net_mod.train(net, x[:10], y[:10], x[10:], y[10:], cfg)
    first = result.history[0][1]
    assert result.best_val_loss < result.history[0][2]
    assert result.history[-1][1] < first


def test_training_determinism():
    x, y = _toy_dataset(10)
    outs = []
    for _ in range(2):
        net = _tiny_net(input_dim=2, hidden=6, output=1, rate=0.2, seed=4)
        cfg = net_mod.TrainConfig(epochs=10, batch_size=5, lr=0.005, patience=10, seed=4)
        res = net_mod.train(net, x[:8], y[:8], x[8:], y[8:], cfg)
        outs.append((res.history, net_mod.parameters(net)))
    assert outs[0][0] == outs[1][0]
    for k in outs[0][1]:
        assert np.array_equal(outs[0][1][k], outs[1][1][k])


def test_early_stopping_restores_best_parameters():
    x, y = _toy_dataset(10)
    net = _tiny_net(input_dim=2, hidden=6, output=1, rate=0.2, seed=2)
    cfg = net_mod.TrainConfig(epochs=200, batch_size=5, lr=0.02, patience=8, seed=2)
    res = net_mod.train(net, x[:8], y[:8], x[8:], y[8:], cfg)
    val_losses = [v for _, _, v in res.history]
    assert res.best_val_loss == min(val_losses)
    assert len(res.history) <= res.best_epoch + cfg.patience + 1


def test_divergence_raises():
    x, y = _toy_dataset(6)
    net = _tiny_net(input_dim=2, hidden=4, output=1, rate=0.0, seed=0)
    net.dense.weight[:] = 1e300  # force an overflow in the first loss
    cfg = net_mod.TrainConfig(epochs=3, batch_size=3, lr=0.01, patience=3, seed=0)
    with pytest.raises(DivergenceFailureError):
        net_mod.train(net, x[:4], y[:4], x[4:], y[4:], cfg)


def test_confidence_interval_nearest_rank():
    ens = np.arange(1.0, 101.0).reshape(100, 1, 1)
    lo, hi = net_mod.confidence_interval(ens, 0.95)
    # nearest-rank: lower = ceil(0.025*100) = 3rd, upper = ceil(0.975*100) = 98th
    assert lo[0, 0] == 3.0 and hi[0, 0] == 98.0
    with pytest.raises(InvalidArgumentError):
        net_mod.confidence_interval(ens, 1.5)


def test_mc_predict_shapes_and_spread():
    net = _tiny_net(rate=0.4)
    x = np.random.default_rng(6).normal(size=(3, 20))
    ens = net_mod.mc_predict(net, x, 32, stream(8, 0))
    assert ens.shape == (32, 2, 20)
    assert ens.std(axis=0).max() > 0.0


def test_deterministic_network_shares_parameters():
    net = _tiny_net(rate=0.3)
    det = net_mod.deterministic_network(net)
    assert det.dropout.rate == 0.0
    assert det.lstm.w_in is net.lstm.w_in
