"""Acceptance criteria 1-10, each reported as one PASS/FAIL line.

Criteria 6 and 7 train 13 desk-scale models (about 35 minutes on one CPU core).
"""

import json
import statistics
import time

import numpy as np
import pytest

from hcsa import HCSAConfig, ModelParams, SyntheticTaskConfig, TrainConfig
from hcsa.bench import run_bench, separated
from hcsa.cli import main
from hcsa.data import generate_synthetic_dataset
from hcsa.decoder import layer_attention, teacher_forced_logits
from hcsa.encoder import (
    AttentionTrace,
    attentive_segmentation,
    conv_glu_unit,
    encode_question,
    encode_video,
)
from hcsa.encoder import question_aware_self_attention as qsu
from hcsa.metrics import SimilarityOracle, bleu1, corpus_bleu1, wups
from hcsa.training import exact_match_accuracy, gradcheck_sample, gradient_check, train
from hcsa.tensor import Tensor

import oracles
from conftest import ACCEPTANCE_LINES

TRAIN_SAMPLES = 4000
TRAIN_STEPS = 3000
HELD_OUT = 2000
HELD_OUT_OFFSET = 1_000_000
SEEDS = (0, 1, 2)
VARIANTS = {
    "full": {},
    "ASU(MP)": {"asu_mean_pool": True},
    "QSU(SA)": {"qsu_plain_self_attention": True},
    "top-layer-only": {"top_layer_only": True},
}


def record(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


# -- shared trained models -----------------------------------------------------------

_task_cache: dict = {}


def _task():
    if not _task_cache:
        cfg = SyntheticTaskConfig()
        _task_cache["train"] = generate_synthetic_dataset(cfg, TRAIN_SAMPLES)
        _task_cache["test"] = generate_synthetic_dataset(cfg, HELD_OUT, offset=HELD_OUT_OFFSET)
    return _task_cache["train"], _task_cache["test"]


_accuracy_cache: dict = {}


def held_out_accuracy(seed: int, **overrides) -> float:
    key = (seed, tuple(sorted(overrides.items())))
    if key not in _accuracy_cache:
        train_set, test_set = _task()
        cfg = HCSAConfig.desk(seed=seed, **overrides)
        model, _ = train(train_set, cfg, TrainConfig(epochs=1000, max_steps=TRAIN_STEPS))
        _accuracy_cache[key] = exact_match_accuracy(model, test_set)
    return _accuracy_cache[key]


# -- 1 ---------------------------------------------------------------------------------

def test_criterion_1_gradient_fidelity():
    cfg = HCSAConfig.micro()
    sample = gradcheck_sample(cfg)
    assert sample.features.shape == (16, 8)
    start = time.process_time()
    err = gradient_check(cfg, sample)
    cpu = time.process_time() - start
    n = ModelParams.initialize(cfg).count()
    record(1, "gradient fidelity", err < 1e-4 and cpu < 60,
           f"max rel err {err:.2e} over {n} params, {cpu:.1f}s CPU")


# -- 2 ---------------------------------------------------------------------------------

def test_criterion_2_structural_law():
    rng = np.random.default_rng(2)
    failures = 0
    for _ in range(100):
        n, H = int(rng.integers(1, 513)), int(rng.choice([2, 3, 4]))
        cfg = HCSAConfig.micro(segment_size=H, num_layers=3, max_video_len=512, d_model=4, d_attn=4,
                               d_question=2, d_word=4, kernel_width=3)
        params = ModelParams.initialize(cfg, seed=int(rng.integers(1 << 30)))
        q = encode_question(params, [1, 2])
        lengths = encode_video(params, rng.standard_normal((n, cfg.d_video)), q).lengths
        prev = n
        for got in lengths:
            failures += got != -(-prev // H)
            prev = got
    record(2, "layer lengths n_l = ceil(n_(l-1)/H)", failures == 0, f"100 draws, {failures} mismatches")


# -- 3 ---------------------------------------------------------------------------------

def test_criterion_3_attention_normalisation():
    rng = np.random.default_rng(3)
    worst, vectors = 0.0, 0
    for i in range(1000):
        cfg = HCSAConfig.micro(segment_size=int(rng.integers(2, 5)), seed=i)
        params = ModelParams.initialize(cfg)
        scale = float(rng.choice([0.1, 1.0, 5.0]))
        for t in params.parameters():
            t.data *= scale
        n, m, r = int(rng.integers(1, 17)), int(rng.integers(1, 6)), int(rng.integers(1, 4))
        feats = rng.standard_normal((n, 8))
        question = rng.integers(0, 20, m).tolist()
        targets = rng.integers(4, 20, r).tolist()
        trace = AttentionTrace()
        q = encode_question(params, question)
        enc = encode_video(params, feats, q, trace)
        teacher_forced_logits(params, targets, enc, q, trace)
        for vec in trace.alpha + trace.d_rows + trace.beta:
            worst = max(worst, abs(float(vec.sum()) - 1.0))
            vectors += 1
    record(3, "attention weights sum to 1", worst <= 1e-9,
           f"1000 passes, {vectors} vectors, worst deviation {worst:.1e}")


# -- 4 ---------------------------------------------------------------------------------

def test_criterion_4_oracle_equivalence():
    rng = np.random.default_rng(4)
    worst = {"conv_glu_unit": 0.0, "attentive_segmentation": 0.0,
             "question_aware_self_attention": 0.0, "layer_attention": 0.0}
    for i in range(50):
        cfg = HCSAConfig.micro(seed=i)
        params = ModelParams.initialize(cfg)
        for t in params.parameters():
            t.data[...] = rng.standard_normal(t.shape) * 0.5
        n, m = int(rng.integers(1, 17)), int(rng.integers(1, 6))
        seq = rng.standard_normal((n, 8))
        q = encode_question(params, rng.integers(0, 20, m))
        raw = lambda group: {k: v.data for k, v in params.group(group).items()}

        got = conv_glu_unit(Tensor(seq), params["layer1.conv1.W"], params["layer1.conv1.b"]).data
        want = oracles.conv_glu(seq, params["layer1.conv1.W"].data, params["layer1.conv1.b"].data)
        worst["conv_glu_unit"] = max(worst["conv_glu_unit"], np.abs(got - want).max())

        got = attentive_segmentation(Tensor(seq), q.global_, params.group("layer1.asu"), 2).data
        want, _ = oracles.segmentation(seq, q.global_.data, raw("layer1.asu"), 2)
        worst["attentive_segmentation"] = max(worst["attentive_segmentation"], np.abs(got - want).max())

        got = qsu(Tensor(seq), q.contexts, params.group("layer1.qsu")).data
        want, _ = oracles.question_self_attention(seq, q.contexts.data, raw("layer1.qsu"))
        worst["question_aware_self_attention"] = max(worst["question_aware_self_attention"],
                                                    np.abs(got - want).max())

        hidden = rng.standard_normal((1, 8))
        got = layer_attention(Tensor(seq), Tensor(hidden), q.global_, params.group("decoder.att2")).data
        want, _ = oracles.layer_attention(seq, hidden, q.global_.data, raw("decoder.att2"))
        worst["layer_attention"] = max(worst["layer_attention"], np.abs(got - want).max())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    record(4, "units match nested-loop references", max(worst.values()) <= 1e-10, f"50 instances: {detail}")


# -- 5 ---------------------------------------------------------------------------------

def test_criterion_5_overfit():
    samples = generate_synthetic_dataset(SyntheticTaskConfig(), 32)
    cfg = HCSAConfig.desk()
    state = {}

    def check(epoch, model, report):
        if report.epoch_losses[-1] < 0.1:
            acc = exact_match_accuracy(model, samples)
            state.update(loss=report.epoch_losses[-1], acc=acc, steps=report.steps)
            return acc >= 0.95
        return False

    start = time.process_time()
    _, report = train(samples, cfg, TrainConfig(epochs=10_000, max_steps=2000), on_epoch=check)
    cpu = time.process_time() - start
    ok = bool(state) and state["loss"] < 0.1 and state["acc"] >= 0.95 and cpu < 300
    detail = (f"loss {state['loss']:.3f}, accuracy {state['acc']:.2f} after {state['steps']} steps, {cpu:.0f}s CPU"
              if state else f"loss {report.epoch_losses[-1]:.3f} after {report.steps} steps")
    record(5, "overfit 32 samples", ok, detail)


# -- 6 ---------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_6_task_separation():
    full = held_out_accuracy(0)
    baseline = held_out_accuracy(0, encoder="mean_pool")
    ok = full >= 0.20 + 0.10 and full >= baseline + 0.10
    record(6, "task separation on 2000 held-out samples", ok,
           f"HCSA {full:.3f}, mean-pool {baseline:.3f}, chance 0.200")


# -- 7 ---------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_7_ablation_ordering():
    medians = {name: statistics.median(held_out_accuracy(s, **ov) for s in SEEDS)
               for name, ov in VARIANTS.items()}
    full = medians.pop("full")
    ok = all(full >= acc - 0.01 for acc in medians.values())
    detail = f"full {full:.3f}; " + ", ".join(f"{k} {v:.3f}" for k, v in medians.items())
    record(7, "ablation ordering (median of 3 seeds)", ok, detail)


# -- 8 ---------------------------------------------------------------------------------

def test_criterion_8_metric_goldens():
    tax = SimilarityOracle.from_taxonomy_file()
    checks = {
        "WUPS@0.9 dog/cat": (round(wups(["dog"], ["cat"], 0.9, tax), 4), 0.0667),
        "WUPS@0.0 dog/cat": (wups(["dog"], ["cat"], 0.0, tax), 2 / 3),
        "BLEU-1 red blue/red": (bleu1("red blue", "red"), 0.5),
        "BLEU-1 red/red blue": (bleu1("red", "red blue"), float(np.exp(-1))),
    }
    corpus = ["red", "dog", "big red ball"]
    identity = [corpus_bleu1(corpus, corpus), wups(corpus, corpus, 0.0, tax), wups(corpus, corpus, 0.9, tax)]
    ok = all(abs(got - want) < 1e-12 for got, want in checks.values()) and identity == [1.0, 1.0, 1.0]
    detail = ", ".join(f"{k}={got:.4f}" for k, (got, _) in checks.items()) + f", identity {identity}"
    record(8, "metric goldens", ok, detail)


# -- 9 ---------------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_9_efficiency_direction():
    results = run_bench([512], reps=10, modes=("forward+backward",))
    hcsa = next(r for r in results if r.encoder == "hcsa")
    gru = next(r for r in results if r.encoder == "gru")
    ok = hcsa.mean_ms < gru.mean_ms and separated(hcsa, gru)
    record(9, "conv encoder faster than matched GRU at n=512", ok,
           f"HCSA {hcsa.mean_ms:.1f}+-{hcsa.stddev_ms:.1f} ms ({hcsa.params} params), "
           f"GRU {gru.mean_ms:.1f}+-{gru.stddev_ms:.1f} ms ({gru.params} params)")


# -- 10 --------------------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({
        "num_samples": 64, "eval_fraction": 0.25, "train": {"epochs": 2, "batch_size": 8},
        "paths": {"data_dir": str(tmp_path / "data"), "out_dir": str(tmp_path / "unused")},
    }))
    assert main(["gen-data", "--config", str(config)]) == 0
    runs = []
    for name in ("a", "b"):
        assert main(["train", "--config", str(config), "--out", str(tmp_path / name)]) == 0
        report = json.loads((tmp_path / name / "train_report.json").read_text())
        runs.append((report["step_losses"], (tmp_path / name / "model.hcsm").read_bytes()))
    (la, ca), (lb, cb) = runs
    same_losses = [float(x).hex() for x in la] == [float(x).hex() for x in lb]
    record(10, "bitwise-identical training runs", same_losses and ca == cb,
           f"{len(la)} steps, losses equal: {same_losses}, checkpoints equal: {ca == cb} ({len(ca)} bytes)")
