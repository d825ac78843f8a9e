"""Shared fixtures and the acceptance-criteria report.

Acceptance tests record one line per criterion through `record_criterion`;
the summary hook prints them after the run so the verdicts are visible in
plain pytest output.
"""

import numpy as np
import pytest

_CRITERIA = []


@pytest.fixture
def record_criterion():
    """record(num, title, passed, detail) -> one summary line per criterion."""

    def record(num, title, passed, detail=""):
        _CRITERIA.append((int(num), str(title), bool(passed), str(detail)))

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, title, passed, detail in sorted(_CRITERIA):
        verdict = "PASS" if passed else "FAIL"
        line = f"criterion {num:2d} [{verdict}] {title}"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_density(rng, dim):
    """Random full-rank density matrix via a Ginibre square."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(rng, dim):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (g + g.conj().T)
