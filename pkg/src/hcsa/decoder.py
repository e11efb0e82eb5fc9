"""GRU answer generator with multi-scale attention over the top encoder layers.

Shapes follow the encoder: a single sample uses ``1 x d`` state rows and a
batch uses ``B x 1 x d``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import tensor as T
from .encoder import AttentionTrace, EncoderOutput, QuestionEncoding, affine, gru_cell
from .errors import ConfigError, InputError
from .params import BOS, EOS, ModelParams, decoder_layer_ids
from .tensor import Tensor


@dataclass
class DecoderState:
    hidden: Tensor  # (..., 1, d)
    step: int = 0


@dataclass
class AnswerDistribution:
    logits: Tensor  # (..., 1, T)

    @property
    def probabilities(self) -> np.ndarray:
        z = self.logits.data - self.logits.data.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return (e / e.sum(axis=-1, keepdims=True))[..., 0, :]


def initial_state(params: ModelParams, batch_shape: tuple[int, ...] = ()) -> DecoderState:
    return DecoderState(Tensor(np.zeros(batch_shape + (1, params.cfg.d_model))), 0)


def layer_attention(
    layer: Tensor,
    hidden: Tensor,
    question_global: Tensor,
    p: Mapping[str, Tensor],
    keys: Tensor | None = None,
    trace: AttentionTrace | None = None,
) -> Tensor:
    """Attention-pooled summary (..., 1, d) of one encoder layer.

    ``keys`` may carry a cached ``layer @ W_elem``; it does not change across steps.
    """
    if layer.shape[-2] == 0:
        raise InputError("cannot attend over an empty layer")
    if keys is None:
        keys = layer @ p["W_elem"]
    query = affine(hidden, p["W_hidden"], p["b"]) + question_global @ p["W_q"]
    scores = T.tanh(keys + T.expand(query, keys.shape)) @ p["w"]
    weights = T.softmax(scores, axis=-2)
    if trace is not None:
        trace.beta.extend(row.copy() for row in weights.data[..., 0].reshape(-1, layer.shape[-2]))
    return T.transpose(weights) @ layer


class StepCache:
    """Step-invariant pieces of the decoder computation for one encoded input."""

    def __init__(self, params: ModelParams, enc: EncoderOutput):
        self.layer_ids = decoder_layer_ids(params.cfg)
        if not 1 <= len(self.layer_ids) <= len(enc.layers):
            raise ConfigError(
                f"decoder needs top {len(self.layer_ids)} layers, encoder produced {len(enc.layers)}"
            )
        offset = len(enc.layers) - max(self.layer_ids)
        self.attn = {l: params.group(f"decoder.att{l}") for l in self.layer_ids}
        self.layers = {l: enc.layers[l - 1 + offset] for l in self.layer_ids}
        self.keys = {l: self.layers[l] @ self.attn[l]["W_elem"] for l in self.layer_ids}
        self.gru = params.group("decoder.gru")


def multiscale_context(
    params: ModelParams,
    enc: EncoderOutput,
    hidden: Tensor,
    question_global: Tensor,
    cache: StepCache | None = None,
    trace: AttentionTrace | None = None,
) -> Tensor:
    """Mean of the per-layer attention summaries over the top decoder layers."""
    cache = cache or StepCache(params, enc)
    summaries = [
        layer_attention(cache.layers[l], hidden, question_global, cache.attn[l], cache.keys[l], trace)
        for l in cache.layer_ids
    ]
    if len(summaries) == 1:
        return summaries[0]
    total = summaries[0]
    for s in summaries[1:]:
        total = total + s
    return total * (1.0 / len(summaries))


def decode_step(
    params: ModelParams,
    prev_token,
    state: DecoderState,
    enc: EncoderOutput,
    question: QuestionEncoding,
    cache: StepCache | None = None,
    trace: AttentionTrace | None = None,
) -> tuple[AnswerDistribution, DecoderState]:
    """One GRU step; ``prev_token`` is an int, or an int array matching the batch shape."""
    cfg = params.cfg
    tokens = np.asarray(prev_token, dtype=np.int64)
    if tokens.size == 0 or tokens.min() < 0 or tokens.max() >= cfg.answer_vocab_size:
        raise InputError(f"token id outside answer vocabulary of size {cfg.answer_vocab_size}")
    cache = cache or StepCache(params, enc)
    video = multiscale_context(params, enc, state.hidden, question.global_, cache, trace)
    word = T.take_rows(params["answer.embed"], tokens.reshape(tokens.shape + (1,)))
    x = T.concat([word, question.global_, video], axis=-1)
    gru = cache.gru
    hidden = gru_cell(affine(x, gru["Wx"], gru["bx"]), state.hidden, gru["Wh"], gru["bh"])
    logits = affine(hidden, params["decoder.out.W"], params["decoder.out.b"])
    return AnswerDistribution(logits), DecoderState(hidden, state.step + 1)


def teacher_forced_logits(
    params: ModelParams,
    targets,
    enc: EncoderOutput,
    question: QuestionEncoding,
    trace: AttentionTrace | None = None,
) -> list[AnswerDistribution]:
    """One distribution per target position, each conditioned on BOS + the preceding targets.

    ``targets`` is (r,) for one sample or (B, r) for a batch.
    """
    targets = np.asarray(targets, dtype=np.int64)
    r = targets.shape[-1] if targets.ndim else 0
    if r == 0:
        raise InputError("answer must contain at least one token")
    batch_shape = targets.shape[:-1]
    cache = StepCache(params, enc)
    state = initial_state(params, batch_shape)
    prev = np.full(batch_shape, BOS, dtype=np.int64)
    out = []
    for t in range(r):
        dist, state = decode_step(params, prev, state, enc, question, cache, trace)
        out.append(dist)
        prev = targets[..., t]
    return out


def generate(params: ModelParams, enc: EncoderOutput, question: QuestionEncoding, max_len: int):
    """Greedy decoding from BOS until EOS or ``max_len`` tokens; EOS is not returned.

    Ties in the argmax go to the lowest token id. Returns a token list, or a
    list of token lists when the input is batched.
    """
    if max_len < 1:
        raise InputError("max_len must be >= 1")
    batch_shape = enc.layers[-1].shape[:-2]
    if len(batch_shape) > 1:
        raise InputError("generate supports at most one batch axis")
    size = batch_shape[0] if batch_shape else 1
    with T.no_grad():
        cache = StepCache(params, enc)
        state = initial_state(params, batch_shape)
        prev = np.full(batch_shape, BOS, dtype=np.int64)
        outputs: list[list[int]] = [[] for _ in range(size)]
        done = np.zeros(size, dtype=bool)
        for _ in range(max_len):
            dist, state = decode_step(params, prev, state, enc, question, cache)
            prev = np.argmax(dist.logits.data[..., 0, :], axis=-1)
            flat = np.atleast_1d(prev)
            for i in range(size):
                if done[i]:
                    continue
                if flat[i] == EOS:
                    done[i] = True
                else:
                    outputs[i].append(int(flat[i]))
            if done.all():
                break
    return outputs if batch_shape else outputs[0]
