"""Collects per-criterion outcomes of the acceptance suite and prints one line each."""

import pytest

CRITERIA = {
    1: "BIO codec round trip and published columns",
    2: "CRF inference matches exhaustive enumeration",
    3: "CRF gradient vs finite differences",
    4: "BiLSTM gradient vs finite differences",
    5: "synthetic learnability (CRF RC >= 0.90, BiLSTM RC >= 0.80 at EER)",
    6: "subtask dominance TI >= TC, RI >= RC",
    7: "recall non-increasing over the grid, |P-R| < 0.02 at EER",
    8: "coherence filter transparency and soundness",
    9: "split share within 2 points and no leakage",
    10: "corpus stats match independent recount",
    11: "annotation loop equivalence and non-decreasing trajectory",
}

_outcomes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            item.user_properties.append(("criterion", marker.args[0]))


@pytest.hookimpl(trylast=True)
def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _outcomes.setdefault(crit, []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, text in CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            status = "NOT RUN"
        elif "failed" in results:
            status = "FAIL"
        elif all(r == "skipped" for r in results):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"[{status:>7}] criterion {n:2d}: {text}")
