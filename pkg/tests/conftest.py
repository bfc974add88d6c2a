import pytest

import helpers


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and report.failed and "test_acceptance" in item.nodeid:
        helpers.ACCEPTANCE_RESULTS.append(f"FAIL: {item.name}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if helpers.ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in helpers.ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
