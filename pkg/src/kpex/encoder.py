"""Token encoder: trainable embeddings, a single-layer BiLSTM, and a dense
projection onto the three label scores, with an exact analytic backward pass.

Everything runs in float64. Gate blocks inside the stacked LSTM weight
matrices are ordered (input, forget, cell, output). The padding embedding
row (index 0) is kept at zero and receives no gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import PAD_INDEX
from .errors import NumericError

NUM_LABELS = 3


@dataclass(frozen=True)
class EncoderDims:
    vocab_size: int
    embed_dim: int = 64
    hidden_dim: int = 64
    num_labels: int = NUM_LABELS


@dataclass
class LstmWeights:
    Wx: np.ndarray  # (4h, embed_dim)
    Wh: np.ndarray  # (4h, h)
    b: np.ndarray  # (4h,)

    def copy(self) -> "LstmWeights":
        return LstmWeights(self.Wx.copy(), self.Wh.copy(), self.b.copy())


@dataclass
class EncoderParams:
    embed: np.ndarray  # (V, embed_dim), row PAD_INDEX frozen at zero
    fwd: LstmWeights
    bwd: LstmWeights
    proj_W: np.ndarray  # (num_labels, 2h)
    proj_b: np.ndarray  # (num_labels,)

    @property
    def dims(self) -> EncoderDims:
        return EncoderDims(
            vocab_size=self.embed.shape[0],
            embed_dim=self.embed.shape[1],
            hidden_dim=self.fwd.Wh.shape[1],
            num_labels=self.proj_W.shape[0],
        )

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            self.embed.copy(), self.fwd.copy(), self.bwd.copy(),
            self.proj_W.copy(), self.proj_b.copy(),
        )


def encoder_tensors(params: EncoderParams) -> dict:
    """Canonical name -> array view of every encoder tensor."""
    return {
        "embed": params.embed,
        "lstm_fwd.Wx": params.fwd.Wx,
        "lstm_fwd.Wh": params.fwd.Wh,
        "lstm_fwd.b": params.fwd.b,
        "lstm_bwd.Wx": params.bwd.Wx,
        "lstm_bwd.Wh": params.bwd.Wh,
        "lstm_bwd.b": params.bwd.b,
        "proj.W": params.proj_W,
        "proj.b": params.proj_b,
    }


def _xavier(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    # fan counts taken from the full matrix shape (rows = outputs)
    bound = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, shape)


def init_params(dims: EncoderDims, seed) -> EncoderParams:
    """Initialize encoder parameters.

    Embeddings come from Uniform(-0.1, 0.1) with the PAD row zeroed; LSTM
    and projection weights are Xavier-uniform; all biases are zero except
    the LSTM forget-gate block, which starts at 1.0. ``seed`` may be an int
    or a ``numpy.random.Generator``; identical seeds give identical bytes.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    h, d_e = dims.hidden_dim, dims.embed_dim

    embed = rng.uniform(-0.1, 0.1, (dims.vocab_size, d_e))
    embed[PAD_INDEX] = 0.0

    def lstm() -> LstmWeights:
        Wx = _xavier(rng, (4 * h, d_e))
        Wh = _xavier(rng, (4 * h, h))
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0  # forget gate
        return LstmWeights(Wx, Wh, b)

    fwd = lstm()
    bwd = lstm()
    proj_W = _xavier(rng, (dims.num_labels, 2 * h))
    proj_b = np.zeros(dims.num_labels)
    return EncoderParams(embed, fwd, bwd, proj_W, proj_b)


@dataclass
class _DirectionCache:
    order: np.ndarray  # document positions in processing order
    i: np.ndarray  # (n, h) gate activations, indexed by document position
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray
    tc: np.ndarray  # tanh(c)
    h: np.ndarray


@dataclass
class ForwardCache:
    """Every intermediate needed to rerun the backward pass exactly."""

    token_ids: np.ndarray
    x: np.ndarray  # (n, embed_dim)
    fwd: _DirectionCache
    bwd: _DirectionCache
    hidden: np.ndarray  # (n, 2h) concatenated fwd/bwd states
    emissions: np.ndarray  # (n, num_labels)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _run_direction(w: LstmWeights, x: np.ndarray, reverse: bool) -> _DirectionCache:
    n = x.shape[0]
    h = w.Wh.shape[1]
    xw = x @ w.Wx.T  # (n, 4h)
    cache = _DirectionCache(
        order=np.arange(n)[::-1] if reverse else np.arange(n),
        i=np.empty((n, h)), f=np.empty((n, h)), g=np.empty((n, h)),
        o=np.empty((n, h)), c=np.empty((n, h)), tc=np.empty((n, h)),
        h=np.empty((n, h)),
    )
    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    for t in cache.order:
        z = xw[t] + w.Wh @ h_prev + w.b
        gi = _sigmoid(z[:h])
        gf = _sigmoid(z[h : 2 * h])
        gg = np.tanh(z[2 * h : 3 * h])
        go = _sigmoid(z[3 * h :])
        c = gf * c_prev + gi * gg
        tc = np.tanh(c)
        ht = go * tc
        cache.i[t], cache.f[t], cache.g[t], cache.o[t] = gi, gf, gg, go
        cache.c[t], cache.tc[t], cache.h[t] = c, tc, ht
        h_prev, c_prev = ht, c
    return cache


def encode_forward(params: EncoderParams, token_ids) -> tuple[np.ndarray, ForwardCache]:
    """Compute per-token emission scores.

    Both LSTM directions start from zero states; emission row t is
    ``proj_W @ concat(h_fwd[t], h_bwd[t]) + proj_b``.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("token_ids must be a non-empty 1-d sequence")
    if ids.min() < 0 or ids.max() >= params.embed.shape[0]:
        raise ValueError(
            f"token id out of range [0, {params.embed.shape[0]}): "
            f"{int(ids.min())}..{int(ids.max())}"
        )
    x = params.embed[ids]
    fwd = _run_direction(params.fwd, x, reverse=False)
    bwd = _run_direction(params.bwd, x, reverse=True)
    hidden = np.concatenate([fwd.h, bwd.h], axis=1)
    emissions = hidden @ params.proj_W.T + params.proj_b
    return emissions, ForwardCache(ids, x, fwd, bwd, hidden, emissions)


def _direction_backward(
    w: LstmWeights, x: np.ndarray, cache: _DirectionCache, d_h: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    n, h = d_h.shape
    dWx = np.zeros_like(w.Wx)
    dWh = np.zeros_like(w.Wh)
    db = np.zeros_like(w.b)
    dx = np.zeros_like(x)

    order = cache.order
    dh_carry = np.zeros(h)
    dc_carry = np.zeros(h)
    for step in range(n - 1, -1, -1):
        t = order[step]
        prev = order[step - 1] if step > 0 else None
        h_prev = cache.h[prev] if prev is not None else np.zeros(h)
        c_prev = cache.c[prev] if prev is not None else np.zeros(h)

        dh = d_h[t] + dh_carry
        do = dh * cache.tc[t]
        dc = dc_carry + dh * cache.o[t] * (1.0 - cache.tc[t] ** 2)
        di = dc * cache.g[t]
        dg = dc * cache.i[t]
        df = dc * c_prev
        dc_carry = dc * cache.f[t]

        dz = np.concatenate([
            di * cache.i[t] * (1.0 - cache.i[t]),
            df * cache.f[t] * (1.0 - cache.f[t]),
            dg * (1.0 - cache.g[t] ** 2),
            do * cache.o[t] * (1.0 - cache.o[t]),
        ])
        dWx += np.outer(dz, x[t])
        dWh += np.outer(dz, h_prev)
        db += dz
        dx[t] += w.Wx.T @ dz
        dh_carry = w.Wh.T @ dz
    return dWx, dWh, db, dx


def encode_backward(
    params: EncoderParams, cache: ForwardCache, d_emissions: np.ndarray
) -> dict:
    """Exact gradients of a scalar loss w.r.t. every encoder tensor.

    ``d_emissions`` is the loss gradient at the emission matrix produced by
    the matching :func:`encode_forward` call. Embedding gradients accumulate
    over repeated token occurrences; the PAD row gradient is forced to zero.
    """
    d_emissions = np.asarray(d_emissions, dtype=np.float64)
    if d_emissions.shape != cache.emissions.shape:
        raise ValueError(
            f"d_emissions shape {d_emissions.shape} does not match "
            f"emissions shape {cache.emissions.shape}"
        )
    h = params.fwd.Wh.shape[1]

    d_proj_W = d_emissions.T @ cache.hidden
    d_proj_b = d_emissions.sum(axis=0)
    d_hidden = d_emissions @ params.proj_W

    dWx_f, dWh_f, db_f, dx_f = _direction_backward(
        params.fwd, cache.x, cache.fwd, d_hidden[:, :h]
    )
    dWx_b, dWh_b, db_b, dx_b = _direction_backward(
        params.bwd, cache.x, cache.bwd, d_hidden[:, h:]
    )

    d_embed = np.zeros_like(params.embed)
    np.add.at(d_embed, cache.token_ids, dx_f + dx_b)
    d_embed[PAD_INDEX] = 0.0

    return {
        "embed": d_embed,
        "lstm_fwd.Wx": dWx_f, "lstm_fwd.Wh": dWh_f, "lstm_fwd.b": db_f,
        "lstm_bwd.Wx": dWx_b, "lstm_bwd.Wh": dWh_b, "lstm_bwd.b": db_b,
        "proj.W": d_proj_W, "proj.b": d_proj_b,
    }


# ---------------------------------------------------------------------------
# Adam with two learning-rate groups
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    """Adam moments plus the two-group learning rates.

    The ``embed`` tensor belongs to the lower group; every other tensor
    (LSTM, projection, CRF scores) uses ``lr_upper``.
    """

    lr_lower: float
    lr_upper: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, opt: OptimizerState):
    """One bias-corrected Adam update, in place, over named tensors."""
    if set(params) != set(grads):
        raise ValueError(
            f"parameter/gradient name mismatch: {sorted(set(params) ^ set(grads))}"
        )
    opt.step += 1
    t = opt.step
    for name in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for tensor '{name}' at step {t}")
        if name not in opt.m:
            opt.m[name] = np.zeros_like(params[name])
            opt.v[name] = np.zeros_like(params[name])
        m, v = opt.m[name], opt.v[name]
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        m_hat = m / (1.0 - opt.beta1**t)
        v_hat = v / (1.0 - opt.beta2**t)
        lr = opt.lr_lower if name == "embed" else opt.lr_upper
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + opt.eps)
    return params, opt
