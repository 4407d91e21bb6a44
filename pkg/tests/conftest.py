import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.fixture
def detail(request):
    """Attach a one-line measurement summary to the criterion line."""
    def put(text: str) -> None:
        request.node.user_properties.append(("detail", text))
    return put


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    entry = _criteria.setdefault(n, {"title": title, "cases": 0, "passed": 0, "details": []})
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry["cases"] += 1
        entry["passed"] += report.passed
        entry["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        c = _criteria[n]
        status = "PASS" if c["passed"] == c["cases"] else "FAIL"
        line = f"criterion {n:>2} {status} {c['title']}"
        if c["cases"] > 1:
            line += f"  [{c['passed']}/{c['cases']} cases passed]"
        elif c["details"]:
            line += f"  [{c['details'][0]}]"
        terminalreporter.write_line(line)
