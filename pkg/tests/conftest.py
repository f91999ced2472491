import numpy as np
import pytest

from monoapprox.grid import DomainGrid, sample_analytic


def unit_grid(h, mask_fn=None):
    return DomainGrid.box(0.0, 1.0, 0.0, 1.0, h, mask_fn)


def sample(f, grid):
    return sample_analytic(f, grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def brute_monotone(values, mask, tol=0.0):
    """Reference window scan written with plain loops.

    Every axis-aligned rectangle of in-domain nodes with an interior node is
    compared with its rim.  Returns the list of offending windows as
    ``(i0, j0, i1, j1, kind)``.
    """
    ny, nx = values.shape
    bad = []
    for j0 in range(ny):
        for j1 in range(j0 + 2, ny):
            for i0 in range(nx):
                for i1 in range(i0 + 2, nx):
                    if not mask[j0:j1 + 1, i0:i1 + 1].all():
                        continue
                    rim, inner = [], []
                    for j in range(j0, j1 + 1):
                        for i in range(i0, i1 + 1):
                            edge = j in (j0, j1) or i in (i0, i1)
                            (rim if edge else inner).append(values[j, i])
                    if max(inner) - max(rim) > tol:
                        bad.append((i0, j0, i1, j1, "max"))
                    if min(rim) - min(inner) > tol:
                        bad.append((i0, j0, i1, j1, "min"))
    return bad


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    def record(number, ok, summary):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {summary}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
