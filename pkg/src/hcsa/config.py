"""Model hyperparameters and run configuration."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError


@dataclass
class HCSAConfig:
    """Architecture hyperparameters.

    Defaults are the full-scale values (3 layers, segment size 4, top-2
    decoder layers, kernel width 5, width 256, 512-wide BiGRU question
    states, 10k vocabularies).
    """

    num_layers: int = 3
    segment_size: int = 4
    top_k: int = 2
    kernel_width: int = 5
    d_model: int = 256
    d_video: int = 500
    d_question: int = 256
    d_word: int = 300
    d_attn: int = 256
    question_vocab_size: int = 10000
    answer_vocab_size: int = 10000
    max_video_len: int = 512
    max_question_len: int = 64
    max_answer_len: int = 8
    learning_rate: float = 0.001
    seed: int = 0
    encoder: str = "hcsa"
    asu_mean_pool: bool = False
    qsu_plain_self_attention: bool = False
    without_qsu: bool = False
    top_layer_only: bool = False

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        for name in ("num_layers", "segment_size", "kernel_width", "d_model", "d_video",
                     "d_question", "d_word", "d_attn", "question_vocab_size",
                     "answer_vocab_size", "max_video_len", "max_question_len", "max_answer_len"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.kernel_width % 2 == 0:
            raise ConfigError(f"kernel_width must be odd, got {self.kernel_width}")
        if not 1 <= self.top_k <= self.num_layers:
            raise ConfigError(f"top_k must lie in [1, num_layers={self.num_layers}], got {self.top_k}")
        if self.d_model % 2:
            raise ConfigError(f"d_model must be even for the position encoding, got {self.d_model}")
        if self.answer_vocab_size < 5:
            raise ConfigError("answer_vocab_size must leave room for the 4 reserved ids")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.encoder not in ("hcsa", "mean_pool"):
            raise ConfigError(f"encoder must be 'hcsa' or 'mean_pool', got {self.encoder!r}")

    @property
    def decoder_layers(self) -> int:
        """Number of top encoder layers the decoder attends over."""
        if self.encoder == "mean_pool" or self.top_layer_only:
            return 1
        return self.top_k

    @classmethod
    def micro(cls, **overrides) -> "HCSAConfig":
        """Tiny configuration used for finite-difference checks."""
        base = dict(num_layers=2, segment_size=2, top_k=2, kernel_width=3, d_model=8, d_video=8,
                    d_question=4, d_word=8, d_attn=8, question_vocab_size=20,
                    answer_vocab_size=20, max_video_len=16)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def desk(cls, **overrides) -> "HCSAConfig":
        """CPU-friendly configuration for the synthetic task."""
        base = dict(d_model=64, d_video=32, d_question=32, d_word=32, d_attn=64,
                    question_vocab_size=64, answer_vocab_size=64, max_video_len=512)
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class SyntheticTaskConfig:
    seq_len: int = 64
    d_video: int = 32
    num_event_types: int = 5
    events_per_sequence: int = 5
    noise: float = 0.5
    min_span: int = 4
    max_span: int = 8
    max_gap: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.num_event_types < 2:
            raise ConfigError("num_event_types must be >= 2")
        if not 2 <= self.events_per_sequence <= self.num_event_types:
            raise ConfigError("events_per_sequence must lie in [2, num_event_types]")
        if not 1 <= self.min_span <= self.max_span:
            raise ConfigError("need 1 <= min_span <= max_span")
        if self.max_gap < 0:
            raise ConfigError("max_gap must be >= 0")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if self.d_video < 1:
            raise ConfigError("d_video must be >= 1")
        if self.seq_len < self.events_per_sequence * self.max_span:
            raise ConfigError(
                f"seq_len={self.seq_len} cannot hold {self.events_per_sequence} events of up to "
                f"{self.max_span} steps without overlap"
            )


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    max_steps: int | None = None
    clip_norm: float | None = 5.0
    log_every: int = 50

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1 when set")


@dataclass
class BenchConfig:
    lengths: list[int] = field(default_factory=lambda: [128, 256, 512])
    reps: int = 10
    warmup: int = 3
    d_model: int = 64

    def __post_init__(self) -> None:
        if self.reps < 5:
            raise ConfigError("bench reps must be >= 5")
        if not self.lengths or min(self.lengths) < 1:
            raise ConfigError("bench lengths must be positive")


@dataclass
class PathsConfig:
    data_dir: str = "data"
    train_dir: str | None = None
    out_dir: str = "runs/default"


@dataclass
class RunConfig:
    model: HCSAConfig = field(default_factory=HCSAConfig.desk)
    data: SyntheticTaskConfig = field(default_factory=SyntheticTaskConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    num_samples: int = 200
    eval_fraction: float = 0.2

    _SECTIONS = {"model": HCSAConfig, "data": SyntheticTaskConfig, "train": TrainConfig,
                 "bench": BenchConfig, "paths": PathsConfig}

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        top = {f.name for f in fields(cls)}
        kwargs: dict[str, Any] = {}
        for key, value in raw.items():
            if key not in top:
                raise ConfigError(f"unknown config key {key!r}")
            section = cls._SECTIONS.get(key)
            if section is None:
                kwargs[key] = value
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            allowed = {f.name for f in fields(section)}
            for sub in value:
                if sub not in allowed:
                    raise ConfigError(f"unknown config key '{key}.{sub}'")
            base = HCSAConfig.desk().to_dict() if section is HCSAConfig else {}
            base.update(value)
            try:
                kwargs[key] = section(**base)
            except TypeError as exc:
                raise ConfigError(f"bad value in section {key!r}: {exc}") from None
        cfg = cls(**kwargs)
        if not 0.0 <= cfg.eval_fraction < 1.0:
            raise ConfigError("eval_fraction must lie in [0, 1)")
        if cfg.num_samples < 1:
            raise ConfigError("num_samples must be >= 1")
        if cfg.data.d_video != cfg.model.d_video:
            raise ConfigError(
                f"data.d_video={cfg.data.d_video} does not match model.d_video={cfg.model.d_video}"
            )
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc})") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": dataclasses.asdict(self.model),
            "data": dataclasses.asdict(self.data),
            "train": dataclasses.asdict(self.train),
            "bench": dataclasses.asdict(self.bench),
            "paths": dataclasses.asdict(self.paths),
            "num_samples": self.num_samples,
            "eval_fraction": self.eval_fraction,
        }
