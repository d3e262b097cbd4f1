"""Collects the one-line acceptance verdicts and prints them after the run."""

ACCEPTANCE = []


def record(criterion, name, passed, detail):
    ACCEPTANCE.append((str(criterion), f"{'PASS' if passed else 'FAIL'}  [{criterion}] {name}: {detail}"))


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE, key=lambda item: (int(item[0][0]), item[0])):
        terminalreporter.write_line(line)
