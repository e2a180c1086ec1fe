"""Variational LSTM metamodel.

A single LSTM layer followed by a fully connected output layer whose weight
rows are Bernoulli-masked (Monte Carlo dropout).  Forward pass, exact
backpropagation through time, Adam updates, mini-batch training with
validation-based early stopping, and mask-resampled ensemble inference are
all implemented in float64 numpy.

Gate order in the fused LSTM tensors is (forget, input, output, state), each
block ``hidden`` wide.  Batched arrays are laid out (batch, time, channel);
the public single-sequence API uses (channel, time) to match the rest of the
pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DivergenceFailureError, InvalidArgumentError
from .rng import stream


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class LstmLayerParams:
    """Fused LSTM weights: w_in (D, 4H), w_rec (H, 4H), bias (4H,)."""

    w_in: np.ndarray
    w_rec: np.ndarray
    bias: np.ndarray

    @property
    def hidden_dim(self) -> int:
        return self.w_rec.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_in.shape[0]


@dataclass
class DenseLayerParams:
    weight: np.ndarray  # (H, output_dim)
    bias: np.ndarray  # (output_dim,)


@dataclass(frozen=True)
class DropoutSpec:
    """Row masking of the dense weight matrix, held fixed per sequence.

    ``scaled`` applies inverted-dropout 1/(1-rate) scaling to surviving rows,
    so the layer expectation is unbiased and rate -> 0 degenerates to the
    deterministic network; set False for strict unscaled masking.
    """

    rate: float = 0.2
    scaled: bool = True

    def __post_init__(self):
        if not 0.0 <= self.rate < 1.0:
            raise InvalidArgumentError("dropout rate must lie in [0, 1)")

    @property
    def keep_scale(self) -> float:
        return 1.0 / (1.0 - self.rate) if self.scaled else 1.0


@dataclass
class VLstmNetwork:
    lstm: LstmLayerParams
    dense: DenseLayerParams
    dropout: DropoutSpec
    sigma2: float = 0.0  # observation-noise variance in the ELBO loss
    metadata: dict = field(default_factory=dict)

    @property
    def input_dim(self) -> int:
        return self.lstm.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.lstm.hidden_dim

    @property
    def output_dim(self) -> int:
        return self.dense.weight.shape[1]


def init_network(
    input_dim: int,
    hidden_dim: int,
    output_dim: int,
    dropout: DropoutSpec,
    seed: int,
    sigma2: float = 0.0,
) -> VLstmNetwork:
    """Uniform +-1/sqrt(fan_in) weights; forget-gate bias 1, others 0."""
    rng = stream(seed, 5)

    def uniform(fan_in, shape):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    h = hidden_dim
    lstm = LstmLayerParams(
        w_in=uniform(input_dim, (input_dim, 4 * h)),
        w_rec=uniform(h, (h, 4 * h)),
        bias=np.concatenate([np.ones(h), np.zeros(3 * h)]),
    )
    dense = DenseLayerParams(
        weight=uniform(h, (h, output_dim)),
        bias=np.zeros(output_dim),
    )
    return VLstmNetwork(lstm=lstm, dense=dense, dropout=dropout, sigma2=sigma2)


def parameters(net: VLstmNetwork) -> dict:
    return {
        "lstm_w_in": net.lstm.w_in,
        "lstm_w_rec": net.lstm.w_rec,
        "lstm_bias": net.lstm.bias,
        "dense_weight": net.dense.weight,
        "dense_bias": net.dense.bias,
    }


def set_parameters(net: VLstmNetwork, params: dict) -> None:
    net.lstm.w_in = params["lstm_w_in"]
    net.lstm.w_rec = params["lstm_w_rec"]
    net.lstm.bias = params["lstm_bias"]
    net.dense.weight = params["dense_weight"]
    net.dense.bias = params["dense_bias"]


def copy_parameters(params: dict) -> dict:
    return {k: v.copy() for k, v in params.items()}


# --- forward -------------------------------------------------------------------


def lstm_forward_batch(lstm: LstmLayerParams, x: np.ndarray, want_cache: bool = False):
    """Run the gate recurrence over a (B, T, D) batch from zero initial state.

    Returns (y_seq (B, T, H), cache) where cache holds per-step gate values
    needed by the backward pass.
    """
    b_sz, n_t, _ = x.shape
    h = lstm.hidden_dim
    xw = x @ lstm.w_in + lstm.bias  # (B, T, 4H)
    y = np.zeros((b_sz, h))
    s = np.zeros((b_sz, h))
    y_seq = np.empty((b_sz, n_t, h))
    cache = None
    if want_cache:
        cache = {
            "gf": np.empty((n_t, b_sz, h)),
            "gi": np.empty((n_t, b_sz, h)),
            "go": np.empty((n_t, b_sz, h)),
            "ds": np.empty((n_t, b_sz, h)),
            "tanh_s": np.empty((n_t, b_sz, h)),
            "s": np.empty((n_t, b_sz, h)),
            "x": x,
        }
    for t in range(n_t):
        z = xw[:, t, :] + y @ lstm.w_rec
        gf = _sigmoid(z[:, :h])
        gi = _sigmoid(z[:, h : 2 * h])
        go = _sigmoid(z[:, 2 * h : 3 * h])
        ds = np.tanh(z[:, 3 * h :])
        s_prev = s
        s = gf * s_prev + gi * ds
        tanh_s = np.tanh(s)
        y = go * tanh_s
        y_seq[:, t, :] = y
        if want_cache:
            cache["gf"][t] = gf
            cache["gi"][t] = gi
            cache["go"][t] = go
            cache["ds"][t] = ds
            cache["tanh_s"][t] = tanh_s
            cache["s"][t] = s
    return y_seq, cache


def lstm_forward(params: LstmLayerParams, x: np.ndarray, initial=None):
    """Single-sequence recurrence; x is (input_dim, n_tau).

    Returns (y (hidden, n_tau), s (hidden, n_tau)).  Nonzero initial states
    are not used by the pipeline but supported for completeness.
    """
    x = np.asarray(x, dtype=float)
    if initial is None:
        y_seq, cache = lstm_forward_batch(params, x.T[None], want_cache=True)
        return y_seq[0].T, cache["s"][:, 0, :].T
    y0, s0 = initial
    h = params.hidden_dim
    y = np.asarray(y0, dtype=float).reshape(h)
    s = np.asarray(s0, dtype=float).reshape(h)
    n_t = x.shape[1]
    y_out = np.empty((h, n_t))
    s_out = np.empty((h, n_t))
    for t in range(n_t):
        z = x[:, t] @ params.w_in + y @ params.w_rec + params.bias
        gf = _sigmoid(z[:h])
        gi = _sigmoid(z[h : 2 * h])
        go = _sigmoid(z[2 * h : 3 * h])
        ds = np.tanh(z[3 * h :])
        s = gf * s + gi * ds
        y = go * np.tanh(s)
        y_out[:, t] = y
        s_out[:, t] = s
    return y_out, s_out


def sample_dropout_mask(spec: DropoutSpec, n_rows: int, rng: np.random.Generator):
    """Independent Bernoulli(1 - rate) survival indicator per row."""
    return (rng.random(n_rows) >= spec.rate).astype(float)


def dense_forward_masked(
    dense: DenseLayerParams, mask: np.ndarray, y: np.ndarray, spec: DropoutSpec
) -> np.ndarray:
    """Masked affine map per time step; y is (hidden, n_tau)."""
    y = np.asarray(y, dtype=float)
    mask = np.asarray(mask, dtype=float)
    if mask.shape != (dense.weight.shape[0],):
        raise InvalidArgumentError("mask length must equal the hidden dimension")
    ym = y * (mask * spec.keep_scale)[:, None]
    return dense.weight.T @ ym + dense.bias[:, None]


def network_forward(net: VLstmNetwork, x_aug: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Deterministic forward pass for one (input, mask) pair; (C, T) layout."""
    y, _ = lstm_forward(net.lstm, x_aug)
    return dense_forward_masked(net.dense, mask, y, net.dropout)


def _forward_masked_batch(net: VLstmNetwork, x: np.ndarray, masks: np.ndarray, want_cache=False):
    """(B, T, D) inputs with per-sequence masks (B, H) -> (B, T, O)."""
    y_seq, cache = lstm_forward_batch(net.lstm, x, want_cache=want_cache)
    ym = y_seq * (masks * net.dropout.keep_scale)[:, None, :]
    pred = ym @ net.dense.weight + net.dense.bias
    return pred, y_seq, ym, cache


# --- loss and gradients ----------------------------------------------------------


def weight_decay_term(net: VLstmNetwork, n_train: int) -> float:
    """sum_j sigma^2*(1-p_j)/(2*n_t)*||w_j||^2 over the weight matrices.

    Only the dense matrix carries dropout; the LSTM matrices enter with
    p_j = 0.  Vanishes identically when sigma2 = 0.
    """
    if net.sigma2 == 0.0:
        return 0.0
    p = net.dropout.rate
    sq = (
        (1.0 - p) * float(np.sum(net.dense.weight**2))
        + float(np.sum(net.lstm.w_in**2))
        + float(np.sum(net.lstm.w_rec**2))
    )
    return net.sigma2 / (2.0 * n_train) * sq


def loss(pred: np.ndarray, target: np.ndarray, net: VLstmNetwork = None, n_train: int = 1) -> float:
    """Masked mean-squared sequence loss plus the optional decay term.

    ``pred`` and ``target`` are (B, T, O) batches (or a single (T, O)); the
    data term is 1/(2B) * sum_i ||target_i - pred_i||_2^2.
    """
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise InvalidArgumentError("pred and target shapes differ")
    if pred.ndim == 2:
        pred = pred[None]
        target = target[None]
    batch = pred.shape[0]
    value = 0.5 / batch * float(np.sum((target - pred) ** 2))
    if net is not None and net.sigma2 > 0.0:
        value += weight_decay_term(net, n_train)
    return value


def backward(
    net: VLstmNetwork,
    x: np.ndarray,
    target: np.ndarray,
    masks: np.ndarray,
    n_train: int = 1,
):
    """Loss value and exact full-sequence BPTT gradients for one mini-batch.

    ``x`` is (B, T, D), ``target`` (B, T, O), ``masks`` (B, H); each
    sequence's mask is held fixed through its forward and backward pass.
    """
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    masks = np.asarray(masks, dtype=float)
    b_sz, n_t, _ = x.shape
    h = net.hidden_dim
    pred, y_seq, ym, cache = _forward_masked_batch(net, x, masks, want_cache=True)
    value = loss(pred, target, net=net, n_train=n_train)

    dpred = (pred - target) / b_sz  # (B, T, O)
    grads = {
        "dense_weight": np.einsum("bth,bto->ho", ym, dpred),
        "dense_bias": dpred.sum(axis=(0, 1)),
        "lstm_w_in": np.zeros_like(net.lstm.w_in),
        "lstm_w_rec": np.zeros_like(net.lstm.w_rec),
        "lstm_bias": np.zeros_like(net.lstm.bias),
    }
    scale = (masks * net.dropout.keep_scale)[:, None, :]
    dy_seq = (dpred @ net.dense.weight.T) * scale  # (B, T, H)

    ds_next = np.zeros((b_sz, h))
    dy_next = np.zeros((b_sz, h))
    for t in range(n_t - 1, -1, -1):
        gf = cache["gf"][t]
        gi = cache["gi"][t]
        go = cache["go"][t]
        dstate = cache["ds"][t]
        tanh_s = cache["tanh_s"][t]
        s_prev = cache["s"][t - 1] if t > 0 else np.zeros((b_sz, h))
        y_prev = y_seq[:, t - 1, :] if t > 0 else np.zeros((b_sz, h))

        dy = dy_seq[:, t, :] + dy_next
        ds_tot = ds_next + dy * go * (1.0 - tanh_s * tanh_s)
        dgo = dy * tanh_s
        dgf = ds_tot * s_prev
        dgi = ds_tot * dstate
        ddstate = ds_tot * gi
        ds_next = ds_tot * gf

        dz = np.concatenate(
            [
                dgf * gf * (1.0 - gf),
                dgi * gi * (1.0 - gi),
                dgo * go * (1.0 - go),
                ddstate * (1.0 - dstate * dstate),
            ],
            axis=1,
        )  # (B, 4H)
        grads["lstm_w_in"] += x[:, t, :].T @ dz
        grads["lstm_w_rec"] += y_prev.T @ dz
        grads["lstm_bias"] += dz.sum(axis=0)
        dy_next = dz @ net.lstm.w_rec.T

    if net.sigma2 > 0.0:
        fac = net.sigma2 / n_train
        grads["dense_weight"] += fac * (1.0 - net.dropout.rate) * net.dense.weight
        grads["lstm_w_in"] += fac * net.lstm.w_in
        grads["lstm_w_rec"] += fac * net.lstm.w_rec
    return value, grads


# --- Adam ------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 0.002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState):
    """Bias-corrected Adam update; mutates params and state in place."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[name] -= state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
    return params, state


# --- training ----------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 50
    lr: float = 0.002
    patience: int = 100
    seed: int = 0
    log_masks: bool = False


@dataclass
class TrainResult:
    history: list  # (epoch, train_loss, val_loss) tuples
    best_epoch: int
    best_val_loss: float
    mask_log: list


def train(
    net: VLstmNetwork,
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray,
    val_y: np.ndarray,
    config: TrainConfig,
) -> TrainResult:
    """Seeded mini-batch Adam training with best-validation snapshotting.

    Data layout is (N, channels, T).  A fresh dropout mask is drawn per
    sequence per visit (training and validation alike), and the
    best-validation parameters are restored into ``net`` before returning.
    """
    x_all = np.ascontiguousarray(np.swapaxes(np.asarray(train_x, float), 1, 2))
    y_all = np.ascontiguousarray(np.swapaxes(np.asarray(train_y, float), 1, 2))
    has_val = val_x is not None and len(val_x) > 0
    if has_val:
        xv = np.ascontiguousarray(np.swapaxes(np.asarray(val_x, float), 1, 2))
        yv = np.ascontiguousarray(np.swapaxes(np.asarray(val_y, float), 1, 2))
    n = x_all.shape[0]
    n_train = n
    rng = stream(config.seed, 6)
    params = parameters(net)
    state = AdamState(lr=config.lr)
    history = []
    mask_log = []
    best_val = math.inf
    best_epoch = -1
    best_params = copy_parameters(params)
    since_best = 0
    h = net.hidden_dim

    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            masks = np.stack([sample_dropout_mask(net.dropout, h, rng) for _ in idx])
            if config.log_masks:
                mask_log.append((epoch, idx.copy(), masks.copy()))
            value, grads = backward(net, x_all[idx], y_all[idx], masks, n_train=n_train)
            if not math.isfinite(value):
                raise DivergenceFailureError(
                    f"non-finite training loss at epoch {epoch}, batch start {start}",
                    epoch=epoch,
                    batch=start // config.batch_size,
                )
            adam_step(params, grads, state)
            batch_losses.append(value)
        train_loss = float(np.mean(batch_losses))

        if has_val:
            val_masks = np.stack(
                [sample_dropout_mask(net.dropout, h, rng) for _ in range(len(xv))]
            )
            val_pred, _, _, _ = _forward_masked_batch(net, xv, val_masks)
            val_loss = loss(val_pred, yv, net=net, n_train=n_train)
        else:
            val_loss = train_loss
        if not math.isfinite(val_loss):
            raise DivergenceFailureError(
                f"non-finite validation loss at epoch {epoch}", epoch=epoch
            )
        history.append((epoch, train_loss, val_loss))

        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_params = copy_parameters(params)
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                break

    set_parameters(net, best_params)
    return TrainResult(
        history=history, best_epoch=best_epoch, best_val_loss=best_val, mask_log=mask_log
    )


# --- inference -----------------------------------------------------------------------


def mc_predict(
    net: VLstmNetwork, x_aug: np.ndarray, n_real: int, rng: np.random.Generator
) -> np.ndarray:
    """Mask-resampled ensemble forecast: (n_real, output_dim, n_tau)."""
    if n_real < 1:
        raise InvalidArgumentError("n_real must be >= 1")
    x_aug = np.asarray(x_aug, dtype=float)
    masks = np.stack(
        [sample_dropout_mask(net.dropout, net.hidden_dim, rng) for _ in range(n_real)]
    )
    x_batch = np.repeat(x_aug.T[None], n_real, axis=0)  # (n_real, T, D)
    pred, _, _, _ = _forward_masked_batch(net, x_batch, masks)
    return np.swapaxes(pred, 1, 2)


def confidence_interval(ensemble: np.ndarray, level: float):
    """Pointwise nearest-rank empirical quantile band over axis 0."""
    ensemble = np.asarray(ensemble, dtype=float)
    n_real = ensemble.shape[0]
    if not 0.0 < level < 1.0:
        raise InvalidArgumentError("level must lie in (0, 1)")
    if n_real < 2:
        raise InvalidArgumentError("need at least two realizations")
    ordered = np.sort(ensemble, axis=0)
    lo_rank = max(math.ceil(0.5 * (1.0 - level) * n_real), 1)
    hi_rank = max(math.ceil(0.5 * (1.0 + level) * n_real), 1)
    return ordered[lo_rank - 1], ordered[hi_rank - 1]


def deterministic_network(net: VLstmNetwork) -> VLstmNetwork:
    """The dropout-free twin sharing the same parameters."""
    return replace(net, dropout=DropoutSpec(rate=0.0, scaled=net.dropout.scaled))
