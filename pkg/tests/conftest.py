import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synthsusp.grid import ImageGrid, NormalizedGrid, geometric_center  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"


def make_grid(data, spacing=(1.0, 1.0), channels=None, normalized=True):
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        data = data[None]
    channels = channels or (("T2W", "ADC") if data.shape[0] == 2 else tuple(f"C{i}" for i in range(data.shape[0])))
    cls = NormalizedGrid if normalized else ImageGrid
    return cls(data, channels, spacing, (0.0, 0.0), geometric_center(data.shape[1:], spacing))


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
