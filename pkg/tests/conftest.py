import contextlib
import math

import pytest

from graphhelmholtz.grid import make_grid

_CRITERIA = {}


class Criterion:
    """Collects the measured quantities of one acceptance criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.metrics = []

    def check(self, label, value, tol, op="<="):
        value = float(value)
        ok = math.isfinite(value) and (value <= tol if op == "<=" else value >= tol)
        self.metrics.append((label, value, tol, op, ok))
        return ok

    def note(self, text):
        self.metrics.append((text, None, None, None, True))

    @property
    def passed(self):
        return all(m[4] for m in self.metrics)

    def lines(self, error=None):
        status = "PASS" if (self.passed and error is None) else "FAIL"
        checked = [m for m in self.metrics if m[1] is not None]
        out = [f"{status} criterion {self.number:2d}: {self.title} ({sum(m[4] for m in checked)}/{len(checked)} checks)"]
        if error is not None:
            out.append(f"      error: {error!r}")
        for label, v, tol, op, ok in self.metrics:
            if v is None:
                out.append(f"      {label}")
            else:
                out.append(f"      {'ok ' if ok else 'BAD'} {label}: {v:.4e} {op} {tol:.4e}")
        return out


@pytest.fixture
def criterion():
    @contextlib.contextmanager
    def open_criterion(number, title):
        c = Criterion(number, title)
        error = None
        try:
            yield c
        except Exception as exc:  # recorded, then re-raised
            error = exc
            raise
        finally:
            _CRITERIA[number] = c.lines(error)
            print("\n".join(_CRITERIA[number]))
        bad = [m[0] for m in c.metrics if not m[4]]
        assert not bad, f"criterion {number} failed: {bad}"

    return open_criterion


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n][0])
    if any(_CRITERIA[n][0].startswith("FAIL") for n in _CRITERIA):
        for n in sorted(_CRITERIA):
            if _CRITERIA[n][0].startswith("FAIL"):
                for line in _CRITERIA[n][1:]:
                    terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ref_grid():
    """Reference configuration: d=1, L=2 pi, N=64, 129 t-nodes, T=12."""
    return make_grid(1, 64, 2 * math.pi, 12.0, 129, 1.03)


@pytest.fixture(scope="session")
def small_grid():
    return make_grid(1, 16, 2 * math.pi, 8.0, 33, 1.05)
