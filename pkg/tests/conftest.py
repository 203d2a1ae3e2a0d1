import numpy as np
import pytest

from seriesprior.basis import TrueFunction

_CRITERIA = []


def power_truth(beta, n_coeffs=200, norm=1.0, alternating=True, decay=None):
    j = np.arange(1, n_coeffs + 1, dtype=float)
    c = j ** (-(beta + 0.5 if decay is None else decay))
    if alternating:
        c = c * (-1.0) ** j
    return TrueFunction(c * (norm / np.linalg.norm(c)), beta)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, printed at session end."""

    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        _CRITERIA.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
