import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def naive_dft(v):
    """O(L^2) unitary DFT."""
    v = np.asarray(v, dtype=complex)
    L = len(v)
    w = np.arange(L)
    F = np.exp(-2j * np.pi * np.outer(w, w) / L) / np.sqrt(L)
    return F @ v


def direct_circ_conv(w, x):
    """O(L^2) circular convolution by the defining sum."""
    L = len(w)
    return np.array([sum(w[j] * x[(i - j) % L] for j in range(L)) for i in range(L)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion_report():
    """Record one PASS/FAIL line per acceptance criterion; echoed at the end of the run."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
