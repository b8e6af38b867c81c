import pytest

_verdicts: list[tuple[str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0] if marker.args else item.name
    if report.when == "call" or (report.when == "setup" and not report.passed):
        verdict = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _verdicts.append((verdict, label))


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for verdict, label in _verdicts:
        terminalreporter.write_line(f"{verdict}  {label}")
