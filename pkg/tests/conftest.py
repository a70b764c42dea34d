"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line each."""

from __future__ import annotations

import pytest

_OUTCOMES: dict[str, tuple[str, str]] = {}
_DETAILS: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): test decides one acceptance criterion")


@pytest.fixture
def detail(request):
    """Call with a short string to attach measured values to the criterion line."""
    marker = request.node.get_closest_marker("criterion")

    def note(text: str) -> None:
        if marker is not None:
            _DETAILS[marker.args[0]] = text
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "SKIP" if rep.skipped else "PASS" if rep.passed else "FAIL"
        _OUTCOMES[name] = (status, item.nodeid)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, _) in _OUTCOMES.items():
        extra = f"  ({_DETAILS[name]})" if name in _DETAILS else ""
        terminalreporter.write_line(f"{status}  {name}{extra}")
