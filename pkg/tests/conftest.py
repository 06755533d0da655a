import pytest

# acceptance verdicts, printed together at the end of the run
VERDICTS = []


@pytest.fixture
def verdict(request):
    def record(ok, detail):
        label = request.node.name
        VERDICTS.append(f"{'PASS' if ok else 'FAIL'} {label}: {detail}")
        print(VERDICTS[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
