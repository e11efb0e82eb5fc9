import math

import numpy as np
import pytest

from hcsa import HCSAConfig, ModelParams, SyntheticTaskConfig, TrainConfig
from hcsa.data import generate_synthetic_dataset
from hcsa.errors import InputError
from hcsa.model import HCSA
from hcsa.params import PAD
from hcsa.tensor import Tensor
from hcsa.training import (
    AdamState,
    adam_step,
    batch_loss,
    clip_grad_norm,
    finite_difference_sweep,
    gradcheck_sample,
    gradient_check,
    mle_loss,
    sequence_nll,
    train,
)


def test_uniform_logits_loss():
    loss = mle_loss([Tensor(np.zeros((2, 10)))], [[4, 5]])
    assert loss.item() == pytest.approx(2 * math.log(10), abs=1e-12)


def test_confident_logits_loss_vanishes():
    logits = np.full((2, 10), -50.0)
    logits[0, 4] = logits[1, 5] = 50.0
    assert mle_loss([Tensor(logits)], [[4, 5]]).item() < 1e-12


def test_loss_by_hand(rng):
    logits = rng.standard_normal((3, 5))
    targets = [1, 4, 0]
    want = 0.0
    for row, t in zip(logits, targets):
        want -= row[t] - math.log(sum(math.exp(x) for x in row))
    assert sequence_nll(Tensor(logits), targets).item() == pytest.approx(want, abs=1e-12)


def test_loss_is_batch_mean_and_masks_pad(rng):
    a, b = rng.standard_normal((2, 6)), rng.standard_normal((3, 6))
    la = sequence_nll(Tensor(a), [1, 2]).item()
    lb = sequence_nll(Tensor(b[:2]), [3, 4]).item()
    total = mle_loss([Tensor(a), Tensor(b)], [[1, 2], [3, 4, PAD]]).item()
    assert total == pytest.approx((la + lb) / 2, abs=1e-12)


def test_batched_nll_equals_sum_of_rows(rng):
    x = rng.standard_normal((3, 2, 7))
    t = np.array([[1, 2], [3, 4], [5, 6]])
    want = sum(sequence_nll(Tensor(x[i]), t[i]).item() for i in range(3))
    assert sequence_nll(Tensor(x), t).item() == pytest.approx(want, abs=1e-12)


def test_loss_rejects_misaligned():
    with pytest.raises(InputError):
        mle_loss([Tensor(np.zeros((2, 5)))], [[1, 2, 3]])
    with pytest.raises(InputError):
        mle_loss([Tensor(np.zeros((1, 5)))], [[7]])
    with pytest.raises(InputError):
        mle_loss([Tensor(np.zeros((1, 5)))], [])


def test_adam_zero_gradient_is_identity():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    assert p["w"].tolist() == [1.0, -2.0]


def test_adam_first_step_closed_form():
    g = np.array([0.3, -2.0, 1e-9])
    p = {"w": np.zeros(3)}
    adam_step(p, {"w": g}, AdamState(lr=0.01))
    np.testing.assert_allclose(p["w"], -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_reduces_quadratic():
    p = {"x": np.array([3.0])}
    state = AdamState(lr=0.1)
    losses = []
    for _ in range(2):
        losses.append(float(p["x"][0] ** 2))
        adam_step(p, {"x": 2 * p["x"]}, state)
    losses.append(float(p["x"][0] ** 2))
    assert losses[0] > losses[1] > losses[2]
    assert state.step == 2


def test_adam_missing_gradient():
    with pytest.raises(InputError):
        adam_step({"w": np.zeros(1)}, {}, AdamState())


def test_clip_grad_norm(micro_params):
    for t in micro_params.parameters():
        t.grad = np.ones_like(t.data)
    norm = clip_grad_norm(micro_params, 5.0)
    assert norm == pytest.approx(math.sqrt(micro_params.count()))
    clipped = math.sqrt(sum(float((t.grad ** 2).sum()) for t in micro_params.parameters()))
    assert clipped == pytest.approx(5.0)


def _micro_samples(count):
    return [gradcheck_sample(HCSAConfig.micro(), seed) for seed in range(count)]


def test_training_is_deterministic():
    cfg = HCSAConfig.micro()
    samples = _micro_samples(6)
    _, r1 = train(samples, cfg, TrainConfig(epochs=2, batch_size=3))
    _, r2 = train(samples, cfg, TrainConfig(epochs=2, batch_size=3))
    assert r1.step_losses == r2.step_losses and r1.steps == 4
    assert all(math.isfinite(x) for x in r1.step_losses)


def test_training_rejects_empty_dataset():
    with pytest.raises(InputError):
        train([], HCSAConfig.micro())


def test_initial_loss_near_uniform():
    cfg = HCSAConfig.desk()
    samples = generate_synthetic_dataset(SyntheticTaskConfig(), 16)
    loss = batch_loss(HCSA(cfg), samples).item()
    mean_len = np.mean([len(s.answer) + 1 for s in samples])
    assert abs(loss - mean_len * math.log(cfg.answer_vocab_size)) < 0.2 * mean_len * math.log(cfg.answer_vocab_size)


def test_batched_loss_matches_per_sample_loss():
    cfg = HCSAConfig.desk()
    model = HCSA(cfg)
    samples = generate_synthetic_dataset(SyntheticTaskConfig(), 4)
    per_sample = mle_loss([model.forward(s) for s in samples],
                          [list(s.answer) + [1] for s in samples]).item()
    assert batch_loss(model, samples).item() == pytest.approx(per_sample, abs=1e-10)


@pytest.mark.slow
def test_micro_gradient_check():
    cfg = HCSAConfig.micro()
    assert gradient_check(cfg, gradcheck_sample(cfg)) < 1e-4


@pytest.mark.slow
def test_zeroed_model_gradient_check():
    cfg = HCSAConfig.micro()
    params = ModelParams.initialize(cfg)
    for t in params.parameters():
        t.data[...] = 0.0
    assert gradient_check(cfg, gradcheck_sample(cfg), params=params) < 1e-4


def test_epsilon_sweep_is_stable():
    cfg = HCSAConfig.micro()
    sample = gradcheck_sample(cfg)
    analytic, estimates = finite_difference_sweep(cfg, sample, "layer1.conv1.W", 5, [1e-4, 1e-5, 1e-6])
    errors = [abs(e - analytic) / max(abs(analytic), 1e-8) for e in estimates]
    assert max(errors) < 1e-4


def test_epsilon_sweep_is_v_shaped():
    # truncation error grows at large eps, rounding error at tiny eps
    cfg = HCSAConfig.micro()
    sample = gradcheck_sample(cfg)
    analytic, estimates = finite_difference_sweep(cfg, sample, "layer1.conv1.W", 5, [1e-1, 1e-5, 1e-11])
    errors = [abs(e - analytic) for e in estimates]
    assert errors[1] < errors[0] and errors[1] < errors[2]
