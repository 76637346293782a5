import pytest

from vgsubgroup import kernels


@pytest.fixture(params=sorted(kernels.backends()))
def backend(request, monkeypatch):
    """Run the test once per available kernel backend."""
    mod = kernels.backends()[request.param]
    for fn in ("sse_scan", "gi_scan", "slope_stats"):
        monkeypatch.setattr(kernels, fn, getattr(mod, fn))
    return request.param


_CRITERIA = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for the acceptance summary."""
    def record(cid, ok, detail):
        _CRITERIA.append(f"criterion {cid}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
