import numpy as np
import pytest

_criteria = []


def max_rel_error(actual, expected):
    """Largest entrywise relative error; entries where ``expected`` is 0 are compared absolutely."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    assert actual.shape == expected.shape, (actual.shape, expected.shape)
    if actual.size == 0:
        return 0.0
    denom = np.where(expected == 0, 1.0, np.abs(expected))
    return float(np.max(np.abs(actual - expected) / denom))


def central_diff(f, x, h):
    """Gradient of scalar ``f`` at array ``x`` by central differences (float64)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    name = dict(report.user_properties).get("criterion")
    if name is not None:
        _criteria.append((name, report.outcome, report.nodeid))


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, _ in _criteria:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
    notes = getattr(terminalreporter.config, "_acceptance_notes", [])
    for line in notes:
        terminalreporter.write_line(f"NOTE  {line}")


@pytest.fixture
def acceptance_note(request):
    notes = request.config.__dict__.setdefault("_acceptance_notes", [])
    return notes.append
