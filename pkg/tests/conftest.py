import numpy as np
import pytest

from fairmars.dataset import Dataset


def random_dataset(seed, n=None, d=None, n_groups=2, discrete=False):
    """Small random regression problem with group labels."""
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(20, 60))
    d = d or int(rng.integers(1, 5))
    if discrete:
        X = rng.integers(0, 8, size=(n, d)).astype(float)
    else:
        X = rng.uniform(-1, 1, size=(n, d))
    groups = rng.integers(0, n_groups, size=n)
    groups[:n_groups] = np.arange(n_groups)
    y = np.abs(X[:, 0] - 0.2) + 0.3 * groups + rng.normal(0, 0.1, n)
    if d > 1:
        y += np.maximum(X[:, 1], 0)
    return Dataset.from_arrays(X, y, groups)


@pytest.fixture
def small_ds():
    return random_dataset(0, n=60, d=3)


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


# PASS/FAIL lines collected by test_acceptance.py and echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
