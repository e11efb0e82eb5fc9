"""Synthetic ordered-event task, dataset serialisation and feature-file I/O.

Each sample is a noisy feature sequence with several prototype "events"
planted in temporal order. The question names one event and asks what
happens after it; the answer is the event type that follows. Because every
event type appears exactly once when ``events_per_sequence`` equals the
number of event types, the unordered mean of the features carries no
information about the answer.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .config import SyntheticTaskConfig
from .errors import ConfigError, CorruptFileError, ShapeMismatchError, VersionMismatchError

FEATURE_MAGIC = b"HCSF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIII")
MANIFEST_NAME = "manifest.jsonl"
REFERENCES_NAME = "references.jsonl"
QUESTION_TYPES = ("object", "number", "color", "location", "action")

EVENT_NAMES = (
    "jump", "run", "swim", "climb", "throw", "catch", "kick", "dance",
    "sing", "cook", "paint", "write", "read", "drive", "ride", "fall",
    "sit", "stand", "wave", "clap", "push", "pull", "lift", "drop",
    "open", "close", "cut", "pour", "wash", "sweep", "dig", "skate",
)
_QUESTION_WORDS = ("what", "happens", "occurs", "comes", "after", "before", "next", "the",
                   "event", "which", "?")


class Vocab:
    def __init__(self, tokens: Sequence[str], unk: str):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate vocabulary entries")
        self.unk_id = self.index[unk]

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, words: Iterable[str]) -> list[int]:
        return [self.index.get(w, self.unk_id) for w in words]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] if 0 <= i < len(self.tokens) else self.tokens[self.unk_id] for i in ids]


QUESTION_VOCAB = Vocab(("<pad>", "<unk>") + _QUESTION_WORDS + EVENT_NAMES, unk="<unk>")
# Ids 0-3 are reserved: BOS, EOS, PAD, UNK.
ANSWER_VOCAB = Vocab(("<bos>", "<eos>", "<pad>", "<unk>") + EVENT_NAMES, unk="<unk>")


@dataclass
class Sample:
    id: str
    features: np.ndarray  # n x d_v, float64 holding float32-representable values
    question: list[int]
    answer: list[int]
    type_tag: str = "synthetic"

    def __post_init__(self) -> None:
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError(f"sample {self.id}: features must be a non-empty 2-D array")
        if not self.question or not self.answer:
            raise ValueError(f"sample {self.id}: question and answer must be non-empty")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.id == other.id
            and self.question == other.question
            and self.answer == other.answer
            and self.type_tag == other.type_tag
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
        )


# -- synthetic generation ---------------------------------------------------------

def event_prototypes(cfg: SyntheticTaskConfig) -> np.ndarray:
    if cfg.num_event_types > len(EVENT_NAMES):
        raise ConfigError(f"at most {len(EVENT_NAMES)} event types are supported")
    rng = np.random.default_rng([cfg.seed, 0])
    return rng.standard_normal((cfg.num_event_types, cfg.d_video))


def _place_events(rng: np.random.Generator, cfg: SyntheticTaskConfig, count: int) -> list[tuple[int, int]]:
    spans = rng.integers(cfg.min_span, cfg.max_span + 1, size=count)
    gaps = rng.integers(0, cfg.max_gap + 1, size=count - 1)
    while spans.sum() + gaps.sum() > cfg.seq_len:
        gaps[np.argmax(gaps)] -= 1
    start = int(rng.integers(0, cfg.seq_len - spans.sum() - gaps.sum() + 1))
    out = []
    for i, span in enumerate(spans):
        out.append((start, start + int(span)))
        start += int(span) + (int(gaps[i]) if i < count - 1 else 0)
    return out


def make_sample(cfg: SyntheticTaskConfig, prototypes: np.ndarray, index: int) -> Sample:
    rng = np.random.default_rng([cfg.seed, 1, index])
    order = rng.permutation(cfg.num_event_types)[: cfg.events_per_sequence]
    feats = cfg.noise * rng.standard_normal((cfg.seq_len, cfg.d_video))
    for event, (lo, hi) in zip(order, _place_events(rng, cfg, len(order))):
        feats[lo:hi] += prototypes[event]
    pos = int(rng.integers(0, len(order) - 1))
    asked, follows = EVENT_NAMES[order[pos]], EVENT_NAMES[order[pos + 1]]
    return Sample(
        id=f"s{index:06d}",
        features=feats.astype(np.float32).astype(np.float64),
        question=QUESTION_VOCAB.encode(["what", "happens", "after", asked, "?"]),
        answer=ANSWER_VOCAB.encode([follows]),
    )


def generate_synthetic_dataset(cfg: SyntheticTaskConfig, count: int, offset: int = 0) -> list[Sample]:
    """``count`` samples with indices ``offset .. offset+count-1``.

    Each sample draws from its own (seed, index) stream, so disjoint index
    ranges give disjoint held-out sets over the same event prototypes.
    """
    cfg.validate()
    if count < 0:
        raise ConfigError("count must be >= 0")
    protos = event_prototypes(cfg)
    return [make_sample(cfg, protos, i) for i in range(offset, offset + count)]


# -- downsampling -----------------------------------------------------------------

def downsample(features: np.ndarray, max_len: int) -> np.ndarray:
    """Uniformly strided rows floor(i * n / max_len) when n exceeds max_len."""
    n = features.shape[0]
    if n <= max_len:
        return features
    idx = (np.arange(max_len, dtype=np.int64) * n) // max_len
    return features[idx]


# -- feature files ----------------------------------------------------------------

def write_features(path: str | Path, features: np.ndarray) -> None:
    n, d = features.shape
    body = np.ascontiguousarray(features, dtype="<f4").tobytes()
    Path(path).write_bytes(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, n, d) + body)


def read_features(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptFileError(f"{path}: file too short for a feature header")
    magic, version, n, d = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise CorruptFileError(f"{path}: bad magic {magic!r}")
    if version != FEATURE_VERSION:
        raise VersionMismatchError(f"{path}: feature format version {version}, expected {FEATURE_VERSION}")
    expected = n * d * 4
    body = len(raw) - _HEADER.size
    if body < expected:
        raise CorruptFileError(f"{path}: truncated, {body} of {expected} payload bytes present")
    if body > expected:
        raise ShapeMismatchError(f"{path}: {body} payload bytes but header declares {n}x{d}")
    data = np.frombuffer(raw, dtype="<f4", count=n * d, offset=_HEADER.size)
    return data.reshape(n, d).astype(np.float64)


# -- datasets ---------------------------------------------------------------------

_MANIFEST_KEYS = ("id", "features_file", "question", "answer", "type")


def save_dataset(samples: Sequence[Sample], directory: str | Path) -> Path:
    root = Path(directory)
    (root / "features").mkdir(parents=True, exist_ok=True)
    with open(root / MANIFEST_NAME, "w") as fh:
        for s in samples:
            rel = f"features/{s.id}.hcsf"
            write_features(root / rel, s.features)
            record = {
                "id": s.id,
                "features_file": rel,
                "question": QUESTION_VOCAB.decode(s.question),
                "answer": ANSWER_VOCAB.decode(s.answer),
                "type": s.type_tag,
            }
            fh.write(json.dumps(record) + "\n")
    return root


def load_dataset(directory: str | Path) -> list[Sample]:
    root = Path(directory)
    manifest = root / MANIFEST_NAME
    samples: list[Sample] = []
    width = None
    with open(manifest) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptFileError(f"{manifest}:{lineno}: malformed JSON ({exc})") from None
            missing = [k for k in _MANIFEST_KEYS if k not in record and k != "type"]
            if missing:
                raise CorruptFileError(f"{manifest}:{lineno}: missing keys {missing}")
            extra = sorted(set(record) - set(_MANIFEST_KEYS))
            if extra:
                warnings.warn(f"{manifest}:{lineno}: ignoring unknown fields {extra}", stacklevel=2)
            feats = read_features(root / record["features_file"])
            if width is not None and feats.shape[1] != width:
                raise ShapeMismatchError(
                    f"{record['features_file']}: feature width {feats.shape[1]}, dataset uses {width}"
                )
            width = feats.shape[1]
            samples.append(
                Sample(
                    id=str(record["id"]),
                    features=feats,
                    question=QUESTION_VOCAB.encode(record["question"]),
                    answer=ANSWER_VOCAB.encode(record["answer"]),
                    type_tag=record.get("type") or "synthetic",
                )
            )
    return samples


def write_references(samples: Sequence[Sample], path: str | Path) -> None:
    with open(path, "w") as fh:
        for s in samples:
            answer = " ".join(ANSWER_VOCAB.decode(s.answer))
            fh.write(json.dumps({"id": s.id, "answer": answer, "type": s.type_tag}) + "\n")
