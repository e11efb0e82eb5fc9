"""Learnable parameter inventory and initialisation."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from .config import HCSAConfig
from .tensor import Tensor

# Reserved answer-vocabulary ids.
BOS, EOS, PAD, UNK = 0, 1, 2, 3


def parameter_shapes(cfg: HCSAConfig) -> "OrderedDict[str, tuple[int, ...]]":
    """Name -> shape for every learnable tensor, in a fixed order.

    Weight matrices are stored input-major (``x @ W``), so a kernel described
    as ``2d x kd`` is held here as ``kd x 2d``.
    """
    d, a, dq, dw = cfg.d_model, cfg.d_attn, cfg.d_question, cfg.d_word
    q2 = 2 * dq
    shapes: OrderedDict[str, tuple[int, ...]] = OrderedDict()

    shapes["question.embed"] = (cfg.question_vocab_size, dw)
    for direction in ("fwd", "bwd"):
        shapes[f"question.{direction}.Wx"] = (dw, 3 * dq)
        shapes[f"question.{direction}.Wh"] = (dq, 3 * dq)
        shapes[f"question.{direction}.bx"] = (1, 3 * dq)
        shapes[f"question.{direction}.bh"] = (1, 3 * dq)

    shapes["video.proj.W"] = (cfg.d_video, d)
    shapes["video.proj.b"] = (1, d)

    if cfg.encoder == "hcsa":
        for layer in range(1, cfg.num_layers + 1):
            pre = f"layer{layer}"
            for unit in (1, 2):
                shapes[f"{pre}.conv{unit}.W"] = (cfg.kernel_width * d, 2 * d)
                shapes[f"{pre}.conv{unit}.b"] = (1, 2 * d)
            if not cfg.asu_mean_pool:
                shapes[f"{pre}.asu.W_elem"] = (d, a)
                shapes[f"{pre}.asu.W_q"] = (q2, a)
                shapes[f"{pre}.asu.b"] = (1, a)
                shapes[f"{pre}.asu.w"] = (a, 1)
            if not cfg.without_qsu:
                shapes[f"{pre}.qsu.W_elem"] = (d, a)
                if cfg.qsu_plain_self_attention:
                    shapes[f"{pre}.qsu.W_other"] = (d, a)
                else:
                    shapes[f"{pre}.qsu.W_q"] = (q2, a)
                shapes[f"{pre}.qsu.b"] = (1, a)
                shapes[f"{pre}.qsu.w"] = (a, 1)

    shapes["answer.embed"] = (cfg.answer_vocab_size, dw)
    shapes["decoder.gru.Wx"] = (dw + q2 + d, 3 * d)
    shapes["decoder.gru.Wh"] = (d, 3 * d)
    shapes["decoder.gru.bx"] = (1, 3 * d)
    shapes["decoder.gru.bh"] = (1, 3 * d)
    for layer in decoder_layer_ids(cfg):
        pre = f"decoder.att{layer}"
        shapes[f"{pre}.W_elem"] = (d, a)
        shapes[f"{pre}.W_hidden"] = (d, a)
        shapes[f"{pre}.W_q"] = (q2, a)
        shapes[f"{pre}.b"] = (1, a)
        shapes[f"{pre}.w"] = (a, 1)
    shapes["decoder.out.W"] = (d, cfg.answer_vocab_size)
    shapes["decoder.out.b"] = (1, cfg.answer_vocab_size)
    return shapes


def decoder_layer_ids(cfg: HCSAConfig) -> list[int]:
    """1-based encoder layer indices the decoder attends over."""
    top = 1 if cfg.encoder == "mean_pool" else cfg.num_layers
    k = cfg.decoder_layers
    return list(range(top - k + 1, top + 1))


def _is_bias(name: str, shape: tuple[int, ...]) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return leaf.startswith("b") and shape[0] == 1


class ModelParams:
    """Named learnable tensors plus the hyperparameters they were built for."""

    def __init__(self, cfg: HCSAConfig, tensors: "OrderedDict[str, Tensor] | None" = None):
        self.cfg = cfg
        self.tensors: OrderedDict[str, Tensor] = tensors if tensors is not None else OrderedDict()

    @classmethod
    def initialize(cls, cfg: HCSAConfig, seed: int | None = None) -> "ModelParams":
        """Uniform(+-sqrt(1/fan_in)) weights, zero biases.

        Embedding tables use their row width as fan-in.
        """
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        tensors: OrderedDict[str, Tensor] = OrderedDict()
        for name, shape in parameter_shapes(cfg).items():
            if _is_bias(name, shape):
                data = np.zeros(shape)
            else:
                fan_in = shape[1] if name.endswith("embed") else shape[0]
                bound = np.sqrt(1.0 / fan_in)
                data = rng.uniform(-bound, bound, size=shape)
            tensors[name] = Tensor(data, requires_grad=True, name=name)
        return cls(cfg, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def group(self, prefix: str) -> dict[str, Tensor]:
        """Tensors under ``prefix.`` keyed by the remaining suffix."""
        cut = len(prefix) + 1
        return {k[cut:]: v for k, v in self.tensors.items() if k.startswith(prefix + ".")}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def count(self) -> int:
        return int(sum(t.data.size for t in self.tensors.values()))

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, v.data.copy()) for k, v in self.tensors.items())

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, t in self.tensors.items():
            t.data[...] = state[name]
