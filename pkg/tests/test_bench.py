import csv
import io

import numpy as np
import pytest

from hcsa import HCSAConfig, ModelParams
from hcsa.bench import (
    CSV_COLUMNS,
    BenchResult,
    RecurrentBaseline,
    _trimmed,
    count_params,
    doubling_ratio,
    encoder_param_count,
    run_bench,
    separated,
    summary_table,
    write_csv,
)
from hcsa.errors import InputError
from hcsa.tensor import Tensor


class _Linear:
    def __init__(self):
        self.W = Tensor(np.zeros((256, 256)), requires_grad=True)
        self.b = Tensor(np.zeros((1, 256)), requires_grad=True)

    def parameters(self):
        return [self.W, self.b]


def test_count_params_single_layer():
    assert count_params(_Linear()) == 65_792


def test_paper_scale_count_is_reported(capsys):
    n = count_params(ModelParams.initialize(HCSAConfig(seed=0)))
    print(f"full-scale parameter count: {n:,} (published figure: 6.37M)")
    assert n > 1_000_000


def test_without_qsu_has_fewer_params():
    full = count_params(ModelParams.initialize(HCSAConfig.desk()))
    assert count_params(ModelParams.initialize(HCSAConfig.desk(without_qsu=True))) < full


def test_recurrent_baseline_matches_params():
    params = ModelParams.initialize(HCSAConfig.desk())
    target = encoder_param_count(params)
    gru = RecurrentBaseline.matched(32, 64, target)
    assert abs(count_params(gru) - target) <= 0.25 * target
    out = gru.forward(np.ones((5, 32)))
    assert out.shape == (5, 64)


def test_trimmed_mean_drops_extremes():
    mean, std = _trimmed([100.0, 1.0, 2.0, 3.0, 0.0])
    assert mean == 2.0 and std == 1.0


def test_separation_rule():
    a = BenchResult("a", 1, "forward", 10.0, 1.0, 1, 10)
    assert separated(a, BenchResult("b", 1, "forward", 13.0, 1.0, 1, 10))
    assert not separated(a, BenchResult("b", 1, "forward", 11.5, 1.0, 1, 10))


def test_run_bench_report_shape(tmp_path):
    results = run_bench([8, 16], reps=5)
    for mode in ("forward", "forward+backward"):
        assert len([r for r in results if r.mode == mode]) == 2 * 2
    assert all(r.mean_ms > 0 and r.stddev_ms >= 0 and r.reps == 5 for r in results)
    text = write_csv(results, tmp_path / "b.csv")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 8
    assert "hcsa" in summary_table(results)
    assert doubling_ratio(results) > 0


def test_run_bench_validates():
    with pytest.raises(InputError):
        run_bench([8], reps=3)
    with pytest.raises(InputError):
        run_bench([0], reps=5)


@pytest.mark.slow
def test_conv_encoder_forward_time_is_linear_in_length():
    # at desk width, per-op overhead flattens the curve below ~1000 steps, so double from 1024
    results = run_bench([1024, 2048], reps=30, encoders=("hcsa",), modes=("forward",))
    ratio = doubling_ratio(results)
    print(f"forward time ratio t(2048)/t(1024) = {ratio:.2f}")
    assert 1.6 <= ratio <= 2.4
