"""End-to-end encoder-decoder wrapper."""

from __future__ import annotations

from collections import defaultdict
from typing import Sequence

import numpy as np

from .config import HCSAConfig
from .data import Sample, downsample
from .decoder import AnswerDistribution, generate, teacher_forced_logits
from .encoder import AttentionTrace, EncoderOutput, QuestionEncoding, encode_question, encode_video
from .params import EOS, ModelParams


class HCSA:
    def __init__(self, cfg: HCSAConfig, params: ModelParams | None = None):
        self.cfg = cfg
        self.params = params if params is not None else ModelParams.initialize(cfg)

    def encode(
        self, features: np.ndarray, question, trace: AttentionTrace | None = None
    ) -> tuple[QuestionEncoding, EncoderOutput]:
        q = encode_question(self.params, question)
        enc = encode_video(self.params, self._fit_length(features), q, trace)
        return q, enc

    def _fit_length(self, features: np.ndarray) -> np.ndarray:
        if features.shape[-2] <= self.cfg.max_video_len:
            return features
        if features.ndim == 2:
            return downsample(features, self.cfg.max_video_len)
        return np.stack([downsample(f, self.cfg.max_video_len) for f in features])

    def forward(self, sample: Sample, trace: AttentionTrace | None = None) -> list[AnswerDistribution]:
        """Teacher-forced distributions for ``sample.answer`` followed by EOS."""
        q, enc = self.encode(sample.features, sample.question, trace)
        return teacher_forced_logits(self.params, training_targets(sample), enc, q, trace)

    def forward_group(self, samples: Sequence[Sample], trace: AttentionTrace | None = None):
        """Batched teacher-forced logits for samples sharing video, question and answer lengths.

        Returns a list over answer positions of (B, 1, T) logits.
        """
        feats = np.stack([self._fit_length(s.features) for s in samples])
        q, enc = self.encode(feats, np.array([s.question for s in samples]), trace)
        targets = np.array([training_targets(s) for s in samples])
        return teacher_forced_logits(self.params, targets, enc, q, trace), targets

    def answer(self, features: np.ndarray, question: Sequence[int], max_len: int | None = None) -> list[int]:
        q, enc = self.encode(features, question)
        return generate(self.params, enc, q, max_len or self.cfg.max_answer_len)

    def answer_batch(self, samples: Sequence[Sample], max_len: int | None = None) -> list[list[int]]:
        """Greedy answers for many samples, batching those with matching shapes."""
        out: list[list[int]] = [None] * len(samples)  # type: ignore[list-item]
        for idx in shape_groups(samples, with_answer=False):
            group = [samples[i] for i in idx]
            feats = np.stack([self._fit_length(s.features) for s in group])
            q, enc = self.encode(feats, np.array([s.question for s in group]))
            for i, ans in zip(idx, generate(self.params, enc, q, max_len or self.cfg.max_answer_len)):
                out[i] = ans
        return out

    def num_parameters(self) -> int:
        return self.params.count()


def training_targets(sample: Sample) -> list[int]:
    return list(sample.answer) + [EOS]


def shape_groups(samples: Sequence[Sample], with_answer: bool = True) -> list[list[int]]:
    """Indices of samples grouped by (video length, question length[, answer length]), in first-seen order."""
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, s in enumerate(samples):
        key = (s.features.shape[0], len(s.question)) + ((len(s.answer),) if with_answer else ())
        groups[key].append(i)
    return list(groups.values())


def count_params(model) -> int:
    """Total element count over all learnable tensors of ``model``."""
    if isinstance(model, HCSA):
        return model.params.count()
    if isinstance(model, ModelParams):
        return model.count()
    return int(sum(t.data.size for t in model.parameters()))
