"""Maximum-likelihood training with Adam, and finite-difference gradient checks."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import tensor as T
from .checkpoint import save_checkpoint
from .config import HCSAConfig, SyntheticTaskConfig, TrainConfig
from .data import Sample, generate_synthetic_dataset
from .decoder import AnswerDistribution
from .errors import InputError
from .model import HCSA, shape_groups
from .params import PAD, ModelParams
from .tensor import Tensor

log = logging.getLogger(__name__)


# -- loss ---------------------------------------------------------------------------

def _as_matrix(logits) -> Tensor:
    if isinstance(logits, Tensor):
        return logits
    rows = [d.logits if isinstance(d, AnswerDistribution) else d for d in logits]
    return rows[0] if len(rows) == 1 else T.concat(rows, axis=-2)


def sequence_nll(logits, targets) -> Tensor:
    """-sum_t log softmax(logits_t)[target_t], skipping PAD targets.

    ``logits`` is (r, T) or (B, r, T) (or a list of per-position rows);
    ``targets`` is (r,) or (B, r). Batched input returns the summed NLL.
    """
    mat = _as_matrix(logits)
    targets = np.asarray(targets, dtype=np.int64)
    vocab = mat.shape[-1]
    if mat.shape[:-1] != targets.shape:
        raise InputError(f"logits {mat.shape} do not align with targets {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise InputError(f"target id outside vocabulary of size {vocab}")
    onehot = np.zeros(mat.shape)
    np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
    onehot[targets == PAD] = 0.0
    return -T.sum_(T.log_softmax(mat, axis=-1) * Tensor(onehot))


def mle_loss(logit_sequences: Sequence, target_sequences: Sequence[Sequence[int]]) -> Tensor:
    """Batch mean of per-sequence negative log-likelihoods."""
    if len(logit_sequences) != len(target_sequences):
        raise InputError(f"{len(logit_sequences)} logit sequences for {len(target_sequences)} targets")
    if not logit_sequences:
        raise InputError("empty batch")
    total = sequence_nll(logit_sequences[0], target_sequences[0])
    for logits, targets in zip(logit_sequences[1:], target_sequences[1:]):
        total = total + sequence_nll(logits, targets)
    return total * (1.0 / len(logit_sequences))


def batch_loss(model: HCSA, batch: Sequence[Sample]) -> Tensor:
    """Mean MLE loss over ``batch``; equal-shape samples share one batched forward pass."""
    if not batch:
        raise InputError("empty batch")
    total = None
    for idx in shape_groups(batch):
        logits, targets = model.forward_group([batch[i] for i in idx])
        nll = sequence_nll(logits, targets)
        total = nll if total is None else total + nll
    return total * (1.0 / len(batch))


# -- optimiser ----------------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """In-place bias-corrected Adam update of every array in ``params``."""
    missing = [k for k in params if k not in grads or grads[k] is None]
    if missing:
        raise InputError(f"no gradient for {missing[:3]}{'...' if len(missing) > 3 else ''}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        g = grads[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def clip_grad_norm(params: ModelParams, max_norm: float) -> float:
    total = float(np.sqrt(sum(float((t.grad * t.grad).sum()) for t in params.parameters())))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for t in params.parameters():
            t.grad *= scale
    return total


# -- training loop --------------------------------------------------------------------

@dataclass
class TrainReport:
    seed: int
    step_losses: list[float] = field(default_factory=list)
    epoch_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.step_losses)

    def to_dict(self) -> dict:
        return asdict(self)


def train(
    samples: Sequence[Sample],
    cfg: HCSAConfig,
    train_cfg: TrainConfig | None = None,
    checkpoint_path: str | Path | None = None,
    run_config: dict | None = None,
    on_epoch: Callable[[int, HCSA, TrainReport], bool | None] | None = None,
) -> tuple[HCSA, TrainReport]:
    """Teacher-forced MLE training; deterministic given ``cfg.seed``.

    When ``checkpoint_path`` is set the model is written there after every epoch.
    ``on_epoch`` may return True to stop training early.
    """
    if not samples:
        raise InputError("cannot train on an empty dataset")
    train_cfg = train_cfg or TrainConfig()
    model = HCSA(cfg)
    params = model.params
    state = AdamState(lr=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 2])
    report = TrainReport(seed=cfg.seed)
    arrays = {k: t.data for k, t in params.items()}

    with threadpool_limits(1):
        for epoch in range(train_cfg.epochs):
            started = time.perf_counter()
            order = rng.permutation(len(samples))
            epoch_losses = []
            for lo in range(0, len(order), train_cfg.batch_size):
                batch = [samples[i] for i in order[lo : lo + train_cfg.batch_size]]
                params.zero_grad()
                loss = batch_loss(model, batch)
                T.backward(loss)
                if train_cfg.clip_norm is not None:
                    clip_grad_norm(params, train_cfg.clip_norm)
                adam_step(arrays, {k: t.grad for k, t in params.items()}, state)
                value = loss.item()
                report.step_losses.append(value)
                epoch_losses.append(value)
                if train_cfg.log_every and report.steps % train_cfg.log_every == 0:
                    log.info("step %d loss %.4f", report.steps, value)
                if train_cfg.max_steps is not None and report.steps >= train_cfg.max_steps:
                    break
            report.epoch_losses.append(float(np.mean(epoch_losses)))
            report.epoch_seconds.append(time.perf_counter() - started)
            log.info("epoch %d mean loss %.4f (%.1fs)", epoch + 1, report.epoch_losses[-1],
                     report.epoch_seconds[-1])
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, params, run_config, report.steps)
            if on_epoch is not None and on_epoch(epoch, model, report):
                break
            if train_cfg.max_steps is not None and report.steps >= train_cfg.max_steps:
                break
    return model, report


def exact_match_accuracy(model: HCSA, samples: Sequence[Sample]) -> float:
    with threadpool_limits(1):
        predictions = model.answer_batch(samples)
    return sum(p == list(s.answer) for p, s in zip(predictions, samples)) / len(samples)


# -- gradient checking ------------------------------------------------------------------

def gradient_check(
    cfg: HCSAConfig,
    sample: Sample,
    eps: float = 1e-5,
    params: ModelParams | None = None,
    floor: float = 1e-5,
) -> float:
    """Worst relative error between backprop and central differences of the MLE loss.

    Relative error is |a - n| / max(|a|, |n|, floor) per parameter entry.
    """
    model = HCSA(cfg, params)
    with threadpool_limits(1):
        return T.check_gradients(lambda: batch_loss(model, [sample]), model.params.parameters(), eps, floor)


def finite_difference_sweep(
    cfg: HCSAConfig, sample: Sample, name: str, index: int, eps_values: Sequence[float]
) -> tuple[float, list[float]]:
    """Analytic gradient of one parameter entry and its central-difference estimates per eps."""
    model = HCSA(cfg)
    p = model.params[name]
    p.zero_grad()
    T.backward(batch_loss(model, [sample]))
    analytic = float(p.grad.reshape(-1)[index])
    flat = p.data.reshape(-1)
    estimates = []
    for eps in eps_values:
        orig = flat[index]
        with T.no_grad():
            flat[index] = orig + eps
            up = batch_loss(model, [sample]).item()
            flat[index] = orig - eps
            down = batch_loss(model, [sample]).item()
        flat[index] = orig
        estimates.append((up - down) / (2 * eps))
    return analytic, estimates


def gradcheck_sample(cfg: HCSAConfig, seed: int = 0) -> Sample:
    """A short synthetic sample whose token ids fit the (possibly tiny) vocabularies of ``cfg``."""
    task = SyntheticTaskConfig(seq_len=16, d_video=cfg.d_video, num_event_types=3, events_per_sequence=3,
                               min_span=2, max_span=4, max_gap=1, seed=seed)
    s = generate_synthetic_dataset(task, 1)[0]
    s.question = [i % cfg.question_vocab_size for i in s.question]
    s.answer = [4 + (a - 4) % (cfg.answer_vocab_size - 4) for a in s.answer]
    return s
