import numpy as np
import pytest

from excessmort.panels import N_STRATA, CountPanel, PopulationPanel
from excessmort.periods import MonthIndex, QuarterIndex

ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    reports = []
    for outcome in ("passed", "failed", "error"):
        reports.extend(terminalreporter.stats.get(outcome, []))
    lines = []
    for rep in reports:
        if getattr(rep, "when", "call") != "call":
            continue
        if "test_acceptance.py" not in str(getattr(rep, "nodeid", "")):
            continue
        name = rep.nodeid.split("::")[-1]
        status = "PASS" if rep.passed else "FAIL"
        lines.append((name, status))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}")


@pytest.fixture
def tiny_pop():
    """Constant population of 10,000 per stratum over 2014-Q1..2023-Q4."""
    sizes = np.full((N_STRATA, 40), 10_000.0)
    return PopulationPanel(QuarterIndex(2014, 1), sizes)


@pytest.fixture
def tiny_deaths():
    """Deterministic small panel over 2014-01..2023-12."""
    rng = np.random.Generator(np.random.Philox(42))
    counts = rng.poisson(5.0, size=(N_STRATA, 120)).astype(np.int64)
    return CountPanel(MonthIndex(2014, 1), counts)
