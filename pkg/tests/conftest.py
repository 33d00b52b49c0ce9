import pytest

from onebitpc.numerics import RngStream

_CRITERIA: dict[int, list[tuple[str, str]]] = {}
_NOTES: dict[int, list[str]] = {}


@pytest.fixture
def rng():
    return RngStream(20240611, 0)


@pytest.fixture
def note(request):
    """``note("text")`` attaches a measurement to the test's criterion line."""
    n = request.node.get_closest_marker("criterion").args[0]
    return lambda text: _NOTES.setdefault(n, []).append(text)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marks = [k for k in report.keywords if k.startswith("criterion_")]
    for m in marks:
        n = int(m.split("_", 1)[1])
        _CRITERIA.setdefault(n, []).append((report.nodeid, report.outcome))


def pytest_collection_modifyitems(items):
    # expose the criterion number as a plain keyword for the report hook
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.keywords[f"criterion_{mark.args[0]}"] = True


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        outcomes = [o for _, o in _CRITERIA[n]]
        verdict = "PASS" if all(o == "passed" for o in outcomes) else "FAIL"
        detail = "; ".join(_NOTES.get(n, []))
        terminalreporter.write_line(f"criterion {n}: {verdict}" + (f"  [{detail}]" if detail else ""))
