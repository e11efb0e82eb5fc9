import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from hcsa import HCSAConfig, ModelParams  # noqa: E402
from hcsa.tensor import Tensor  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

# Acceptance results collected during the run and echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def micro_cfg():
    return HCSAConfig.micro()


@pytest.fixture
def micro_params(micro_cfg):
    return ModelParams.initialize(micro_cfg)


def random_tensor(rng, *shape, scale=1.0, grad=False):
    return Tensor(scale * rng.standard_normal(shape), requires_grad=grad)
