import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sacv.dataset import NORMAL, LabeledDataset

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_dataset(counts: dict, d: int = 3, seed: int = 0, shift: float = 3.0) -> LabeledDataset:
    """Gaussian rows per stratum; fault stratum j is shifted along feature j % d."""
    rng = np.random.default_rng(seed)
    X, z, s = [], [], []
    for j, (name, n) in enumerate(sorted(counts.items())):
        c = np.zeros(d)
        if name != NORMAL:
            c[j % d] = shift
        X.append(c + rng.standard_normal((n, d)))
        z += [0 if name == NORMAL else 1] * n
        s += [name] * n
    return LabeledDataset(np.vstack(X), np.array(z), np.array(s, dtype=object))


@pytest.fixture
def small_dev():
    return make_dataset({NORMAL: 60, "A": 20, "B": 20, "C": 20}, d=3, seed=1)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
