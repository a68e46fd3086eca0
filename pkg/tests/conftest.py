from pathlib import Path

import numpy as np
import pytest

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def data_dir():
    return DATA_DIR


def blobs(n_per_class, centers, spread=0.3, seed=0):
    """Gaussian blobs around the given centers; labels follow center order."""
    r = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=float)
    X = np.vstack([c + spread * r.standard_normal((n_per_class, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per_class)
    return X, y


ACCEPTANCE_LINES: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    """Print and remember one acceptance verdict line."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title} | {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
