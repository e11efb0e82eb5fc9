"""Question BiGRU and the hierarchical convolutional self-attention video encoder.

Sequence tensors are laid out ``(..., n, d)``: a single sample is ``n x d``
and a batch of equal-length samples is ``B x n x d``. Every function here
works on either.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensor as T
from .config import HCSAConfig
from .errors import InputError
from .params import ModelParams
from .tensor import Tensor


@dataclass
class QuestionEncoding:
    contexts: Tensor  # (..., m, 2*d_q), row i = [forward_i ; backward_i]
    global_: Tensor  # (..., 1, 2*d_q) = [forward_m ; backward_1]


@dataclass
class EncoderOutput:
    layers: list[Tensor]

    @property
    def lengths(self) -> list[int]:
        return [t.shape[-2] for t in self.layers]


@dataclass
class AttentionTrace:
    """Softmax weight vectors collected during a forward pass, for inspection."""

    alpha: list[np.ndarray] = field(default_factory=list)
    d_rows: list[np.ndarray] = field(default_factory=list)
    beta: list[np.ndarray] = field(default_factory=list)


def layer_lengths(n: int, segment_size: int, num_layers: int) -> list[int]:
    out = []
    for _ in range(num_layers):
        n = -(-n // segment_size)
        out.append(n)
    return out


def bias(b: Tensor, shape: Sequence[int]) -> Tensor:
    """Replicate a 1 x m bias row to ``shape`` (last axis m)."""
    shape = tuple(shape)
    if b.shape != (1, shape[-1]):
        raise InputError(f"bias of shape {b.shape} does not fit {shape}")
    if len(shape) > 2:
        b = T.reshape(b, (1,) * (len(shape) - 1) + (shape[-1],))
    return b if b.shape == shape else T.expand(b, shape)


def affine(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    y = x @ W
    return y + bias(b, y.shape)


def gru_cell(x_proj: Tensor, h: Tensor, Wh: Tensor, bh: Tensor) -> Tensor:
    """One GRU step given the precomputed input projection ``x @ Wx + bx``.

    Gate layout along the last axis: [reset | update | candidate].
    """
    width = h.shape[-1]
    h_proj = affine(h, Wh, bh)
    gates = T.sigmoid(T.slice_(x_proj, -1, 0, 2 * width) + T.slice_(h_proj, -1, 0, 2 * width))
    reset = T.slice_(gates, -1, 0, width)
    update = T.slice_(gates, -1, width, 2 * width)
    cand = T.tanh(
        T.slice_(x_proj, -1, 2 * width, 3 * width) + reset * T.slice_(h_proj, -1, 2 * width, 3 * width)
    )
    return cand + update * (h - cand)


def _run_gru(x_proj: Tensor, p: Mapping[str, Tensor], reverse: bool) -> list[Tensor]:
    m = x_proj.shape[-2]
    width = p["Wh"].shape[0]
    h = Tensor(np.zeros(x_proj.shape[:-2] + (1, width)))
    states: list[Tensor] = [None] * m  # type: ignore[list-item]
    order = range(m - 1, -1, -1) if reverse else range(m)
    for i in order:
        h = gru_cell(T.slice_(x_proj, -2, i, i + 1), h, p["Wh"], p["bh"])
        states[i] = h
    return states


def encode_question(params: ModelParams, tokens) -> QuestionEncoding:
    """BiGRU over a token list (m,) or a batch of equal-length token rows (B, m)."""
    cfg = params.cfg
    ids = np.asarray(tokens, dtype=np.int64)
    m = ids.shape[-1] if ids.ndim else 0
    if ids.ndim not in (1, 2) or m == 0:
        raise InputError("question must contain at least one token")
    if m > cfg.max_question_len:
        raise InputError(f"question length {m} exceeds max_question_len={cfg.max_question_len}")
    if ids.min() < 0 or ids.max() >= cfg.question_vocab_size:
        raise InputError(f"question token id out of range [0, {cfg.question_vocab_size})")

    emb = T.take_rows(params["question.embed"], ids)
    fwd, bwd = params.group("question.fwd"), params.group("question.bwd")
    hf = _run_gru(affine(emb, fwd["Wx"], fwd["bx"]), fwd, reverse=False)
    hb = _run_gru(affine(emb, bwd["Wx"], bwd["bx"]), bwd, reverse=True)
    contexts = T.concat([T.concat(hf, axis=-2), T.concat(hb, axis=-2)], axis=-1)
    global_ = T.concat([hf[-1], hb[0]], axis=-1)
    return QuestionEncoding(contexts, global_)


def position_encoding(n: int, d: int) -> np.ndarray:
    """Sinusoidal table: even columns sin(pos / 10000^(2i/d)), odd columns cos."""
    if d % 2:
        raise InputError(f"position encoding width must be even, got {d}")
    pos = np.arange(n, dtype=np.float64)[:, None]
    rates = np.power(10000.0, -np.arange(0, d, 2, dtype=np.float64) / d)
    pe = np.empty((n, d))
    pe[:, 0::2] = np.sin(pos * rates)
    pe[:, 1::2] = np.cos(pos * rates)
    return pe


def conv_glu_unit(seq: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Width-k convolution, GLU gate and residual; sequence length is preserved.

    ``W`` is (k*d) x (2d): row block j multiplies the element at offset j - k//2.
    """
    n, d = seq.shape[-2:]
    k = W.shape[0] // d
    half = k // 2
    padded = T.pad(seq, half, half, axis=-2)
    windows = T.concat([T.slice_(padded, -2, j, j + n) for j in range(k)], axis=-1)
    y = affine(windows, W, b)
    gate_in, gate = T.slice_(y, -1, 0, d), T.slice_(y, -1, d, 2 * d)
    return gate_in * T.sigmoid(gate) + seq


def segment_uniform_weights(n: int, size: int) -> np.ndarray:
    """(n, 1) column of 1/len(segment) for each element."""
    w = np.empty((n, 1))
    for start in range(0, n, size):
        stop = min(start + size, n)
        w[start:stop] = 1.0 / (stop - start)
    return w


def attentive_segmentation(
    seq: Tensor,
    question_global: Tensor,
    p: Mapping[str, Tensor] | None,
    segment_size: int,
    trace: AttentionTrace | None = None,
) -> Tensor:
    """Collapse consecutive ``segment_size`` blocks to one question-weighted vector each.

    ``p=None`` uses uniform within-segment weights (mean pooling).
    """
    n, d = seq.shape[-2:]
    if n == 0:
        raise InputError("cannot segment an empty sequence")
    col_shape = seq.shape[:-1] + (1,)
    if p is None:
        weights = Tensor(np.broadcast_to(segment_uniform_weights(n, segment_size), col_shape))
    else:
        query = affine(question_global, p["W_q"], p["b"])
        keys = seq @ p["W_elem"]
        scores = T.tanh(keys + T.expand(query, keys.shape)) @ p["w"]
        weights = T.segment_softmax(scores, segment_size, axis=-2)
    if trace is not None:
        flat = weights.data[..., 0].reshape(-1, n)
        for row in flat:
            trace.alpha.extend(row[i : i + segment_size].copy() for i in range(0, n, segment_size))
    return T.segment_sum(T.expand(weights, seq.shape) * seq, segment_size, axis=-2)


def _pairwise_scores(left: Tensor, right: Tensor, w: Tensor) -> Tensor:
    """S[..., i, j] = w . tanh(left[..., i, :] + right[..., j, :])."""
    *batch, n, a = left.shape
    m = right.shape[-2]
    batch = tuple(batch)
    grid_shape = batch + (n, m, a)
    grid = T.expand(T.reshape(left, batch + (n, 1, a)), grid_shape) + T.expand(
        T.reshape(right, batch + (1, m, a)), grid_shape
    )
    return T.reshape(T.tanh(grid) @ w, batch + (n, m))


def question_aware_self_attention(
    seq: Tensor,
    question_contexts: Tensor,
    p: Mapping[str, Tensor],
    plain: bool = False,
    trace: AttentionTrace | None = None,
) -> Tensor:
    """h_i = s_i + sum_j softmax_j(D_ij) s_j, where D = M M^T and M scores elements against words.

    With ``plain=True`` D is scored directly between element pairs instead.
    """
    if question_contexts.shape[-2] < 1:
        raise InputError("question must contain at least one word")
    left = seq @ p["W_elem"]
    if plain:
        right = affine(seq, p["W_other"], p["b"])
        affinity = _pairwise_scores(left, right, p["w"])
    else:
        right = affine(question_contexts, p["W_q"], p["b"])
        match = _pairwise_scores(left, right, p["w"])
        affinity = match @ T.transpose(match)
    attn = T.softmax(affinity, axis=-1)
    if trace is not None:
        trace.d_rows.extend(row.copy() for row in attn.data.reshape(-1, attn.shape[-1]))
    return seq + attn @ seq


def encode_video(
    params: ModelParams,
    features: np.ndarray,
    question: QuestionEncoding,
    trace: AttentionTrace | None = None,
) -> EncoderOutput:
    """Project, add position encoding, then run the stacked layers; returns every layer's output."""
    cfg: HCSAConfig = params.cfg
    features = np.asarray(features, dtype=np.float64)
    if features.ndim not in (2, 3) or features.shape[-1] != cfg.d_video:
        raise InputError(f"video features must be (..., n, {cfg.d_video}), got {features.shape}")
    n = features.shape[-2]
    if n == 0:
        raise InputError("video must contain at least one feature vector")
    if n > cfg.max_video_len:
        raise InputError(f"video length {n} exceeds max_video_len={cfg.max_video_len}; downsample first")

    if cfg.encoder == "mean_pool":
        pooled = Tensor(features.mean(axis=-2, keepdims=True))
        return EncoderOutput([affine(pooled, params["video.proj.W"], params["video.proj.b"])])

    h = affine(Tensor(features), params["video.proj.W"], params["video.proj.b"])
    h = h + Tensor(np.broadcast_to(position_encoding(n, cfg.d_model), h.shape))
    layers = []
    for layer in range(1, cfg.num_layers + 1):
        pre = f"layer{layer}"
        h = conv_glu_unit(h, params[f"{pre}.conv1.W"], params[f"{pre}.conv1.b"])
        h = conv_glu_unit(h, params[f"{pre}.conv2.W"], params[f"{pre}.conv2.b"])
        asu = None if cfg.asu_mean_pool else params.group(f"{pre}.asu")
        h = attentive_segmentation(h, question.global_, asu, cfg.segment_size, trace)
        if not cfg.without_qsu:
            h = question_aware_self_attention(
                h, question.contexts, params.group(f"{pre}.qsu"), cfg.qsu_plain_self_attention, trace
            )
        layers.append(h)
    return EncoderOutput(layers)
