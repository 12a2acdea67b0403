import pytest

from hwqkd.sources import SourceParams

A2_GRID = [0.0, 0.1, 0.2, 0.3, 0.5, 0.6, 0.75, 0.9, 1.0]

_CRITERIA = {}


@pytest.fixture
def half():
    return SourceParams.from_a2(0.5)


@pytest.fixture
def half_dephased():
    return SourceParams.from_a2(0.5, particle1="dephased")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion the test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "passed": True, "failures": []})
    if rep.failed:
        entry["passed"] = False
        entry["failures"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        line = f"criterion {number:2d}: {'PASS' if e['passed'] else 'FAIL'}  {e['title']}"
        if e["failures"]:
            line += f"  [failed: {', '.join(e['failures'])}]"
        terminalreporter.write_line(line)
