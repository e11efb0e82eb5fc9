"""Wallclock comparison of the hierarchical convolutional encoder against a stacked-GRU encoder."""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import tensor as T
from .config import BenchConfig, HCSAConfig
from .encoder import _run_gru, affine, encode_question, encode_video
from .errors import ConfigError, InputError
from .model import count_params
from .params import ModelParams
from .tensor import Tensor

__all__ = [
    "BenchResult",
    "RecurrentBaseline",
    "bench_model_config",
    "count_params",
    "doubling_ratio",
    "encoder_param_count",
    "run_bench",
    "separated",
    "summary_table",
    "write_csv",
]

CSV_COLUMNS = ("encoder", "length", "mode", "mean_ms", "stddev_ms", "params")
PARAM_TOLERANCE = 0.25


@dataclass
class BenchResult:
    encoder: str
    length: int
    mode: str  # "forward" or "forward+backward"
    mean_ms: float  # trimmed mean: min and max dropped
    stddev_ms: float
    params: int
    reps: int

    def row(self) -> dict:
        return {"encoder": self.encoder, "length": self.length, "mode": self.mode,
                "mean_ms": f"{self.mean_ms:.4f}", "stddev_ms": f"{self.stddev_ms:.4f}",
                "params": self.params}


def _gru_layer_shapes(d_in: int, width: int) -> list[tuple[str, tuple[int, int]]]:
    return [("Wx", (d_in, 3 * width)), ("Wh", (width, 3 * width)),
            ("bx", (1, 3 * width)), ("bh", (1, 3 * width))]


def _gru_stack_count(d_in: int, width: int, layers: int) -> int:
    first = 3 * width * (d_in + width + 2)
    rest = 3 * width * (2 * width + 2)
    return first + rest * (layers - 1)


class RecurrentBaseline:
    """Stacked unidirectional GRU over the raw feature sequence, hidden width ``width``."""

    def __init__(self, d_in: int, width: int, num_layers: int, seed: int = 0):
        if num_layers < 1:
            raise ConfigError("recurrent baseline needs at least one layer")
        rng = np.random.default_rng([seed, 7])
        self.width = width
        self.num_layers = num_layers
        self.tensors: OrderedDict[str, Tensor] = OrderedDict()
        for layer in range(num_layers):
            for leaf, shape in _gru_layer_shapes(d_in if layer == 0 else width, width):
                name = f"gru{layer}.{leaf}"
                if leaf.startswith("b"):
                    data = np.zeros(shape)
                else:
                    bound = math.sqrt(1.0 / shape[0])
                    data = rng.uniform(-bound, bound, size=shape)
                self.tensors[name] = Tensor(data, requires_grad=True, name=name)

    @classmethod
    def matched(cls, d_in: int, width: int, target_params: int, seed: int = 0) -> "RecurrentBaseline":
        """Choose the layer count whose parameter total is closest to ``target_params``."""
        best = min(range(1, 257), key=lambda n: abs(_gru_stack_count(d_in, width, n) - target_params))
        got = _gru_stack_count(d_in, width, best)
        if abs(got - target_params) > PARAM_TOLERANCE * target_params:
            raise ConfigError(
                f"no GRU depth at width {width} lands within 25% of {target_params} parameters"
            )
        return cls(d_in, width, best, seed)

    def parameters(self) -> list[Tensor]:
        return list(self.tensors.values())

    def forward(self, features: np.ndarray) -> Tensor:
        h = Tensor(np.asarray(features, dtype=np.float64))
        for layer in range(self.num_layers):
            p = {k.split(".", 1)[1]: v for k, v in self.tensors.items() if k.startswith(f"gru{layer}.")}
            states = _run_gru(affine(h, p["Wx"], p["bx"]), p, reverse=False)
            h = T.concat(states, axis=-2)
        return h


def bench_model_config(bench: BenchConfig, base: HCSAConfig | None = None) -> HCSAConfig:
    """Encoder config at the bench width, long enough for the largest benchmarked length."""
    base = base or HCSAConfig.desk()
    d = bench.d_model
    return HCSAConfig(**{**base.to_dict(), "d_model": d, "d_attn": d,
                         "max_video_len": max(max(bench.lengths), base.max_video_len)})


def encoder_param_count(params: ModelParams) -> int:
    """Parameters of the video encoder alone (projection plus hierarchical layers)."""
    return int(sum(t.data.size for name, t in params.items()
                   if name.startswith("video.") or name.startswith("layer")))


def _trimmed(times: Sequence[float]) -> tuple[float, float]:
    kept = sorted(times)[1:-1] if len(times) > 2 else list(times)
    mean = statistics.fmean(kept)
    std = statistics.stdev(kept) if len(kept) > 1 else 0.0
    return mean, std


def _time(fn: Callable[[], None], warmup: int, reps: int) -> list[float]:
    for _ in range(warmup):
        fn()
    out = []
    for _ in range(reps):
        start = time.perf_counter()
        fn()
        out.append((time.perf_counter() - start) * 1000.0)
    return out


def run_bench(
    lengths: Sequence[int] | None = None,
    cfg: HCSAConfig | None = None,
    reps: int | None = None,
    bench: BenchConfig | None = None,
    encoders: Sequence[str] = ("hcsa", "gru"),
    modes: Sequence[str] = ("forward", "forward+backward"),
) -> list[BenchResult]:
    """Time both encoders on random features at each length.

    Only network execution is timed: the question encoding and the input
    features are prepared beforehand.
    """
    bench = bench or BenchConfig()
    lengths = list(lengths or bench.lengths)
    reps = reps or bench.reps
    if not lengths or min(lengths) < 1:
        raise InputError("bench lengths must be >= 1")
    if reps < 5:
        raise InputError("bench needs at least 5 measured repetitions")
    cfg = cfg or bench_model_config(BenchConfig(lengths=lengths, reps=reps, warmup=bench.warmup,
                                                d_model=bench.d_model))
    if max(lengths) > cfg.max_video_len:
        raise InputError(f"length {max(lengths)} exceeds max_video_len={cfg.max_video_len}")

    params = ModelParams.initialize(cfg)
    hcsa_params = encoder_param_count(params)
    baseline = RecurrentBaseline.matched(cfg.d_video, cfg.d_model, hcsa_params, cfg.seed)
    gru_params = count_params(baseline)
    rng = np.random.default_rng([cfg.seed, 9])
    with T.no_grad():
        question = encode_question(params, [0, 1, 2, 3])

    def hcsa_forward(x):
        return encode_video(params, x, question).layers[-1]

    results = []
    with threadpool_limits(1):
        for n in lengths:
            x = rng.standard_normal((n, cfg.d_video))
            for name in encoders:
                forward = hcsa_forward if name == "hcsa" else baseline.forward
                weights = params.parameters() if name == "hcsa" else baseline.parameters()
                count = hcsa_params if name == "hcsa" else gru_params
                for mode in modes:
                    if mode == "forward":
                        def step(forward=forward, x=x):
                            with T.no_grad():
                                forward(x)
                    elif mode == "forward+backward":
                        def step(forward=forward, x=x, weights=weights):
                            for w in weights:
                                w.zero_grad()
                            T.backward(T.sum_(forward(x)))
                    else:
                        raise InputError(f"unknown bench mode {mode!r}")
                    times = _time(step, bench.warmup, reps)
                    mean, std = _trimmed(times)
                    results.append(BenchResult(name, n, mode, mean, std, count, reps))
    return results


def separated(a: BenchResult, b: BenchResult, k: float = 2.0) -> bool:
    """True when the trimmed means differ by more than ``k`` pooled standard deviations."""
    pooled = math.sqrt((a.stddev_ms ** 2 + b.stddev_ms ** 2) / 2.0)
    return abs(a.mean_ms - b.mean_ms) > k * pooled


def doubling_ratio(results: Sequence[BenchResult], encoder: str = "hcsa", mode: str = "forward") -> float:
    """t(2n) / t(n) for the largest benchmarked pair of lengths differing by a factor of two."""
    times = {r.length: r.mean_ms for r in results if r.encoder == encoder and r.mode == mode}
    pairs = [n for n in times if 2 * n in times]
    if not pairs:
        raise InputError("need two lengths n and 2n to measure the doubling ratio")
    n = max(pairs)
    return times[2 * n] / times[n]


def write_csv(results: Sequence[BenchResult], path: str | Path | None = None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in results:
        writer.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def summary_table(results: Sequence[BenchResult]) -> str:
    lines = [f"{'encoder':<8} {'length':>6} {'mode':<17} {'mean ms':>10} {'stddev':>9} {'params':>9}"]
    for r in results:
        lines.append(f"{r.encoder:<8} {r.length:>6} {r.mode:<17} {r.mean_ms:>10.2f} "
                     f"{r.stddev_ms:>9.2f} {r.params:>9}")
    return "\n".join(lines)
