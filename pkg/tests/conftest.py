from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def binary_rasters(h: int = 8, w: int = 12):
    return arrays(np.uint8, (h, w), elements=st.sampled_from([0, 255]))


def random_binary(rng: np.random.Generator, shape, p_black: float = 0.3) -> np.ndarray:
    return np.where(rng.random(shape) < p_black, 0, 255).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance")
        for name in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[name])
