import pytest

_VERDICTS = {}


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for an acceptance criterion."""
    def record(number, title, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title}" + (f"  [{detail}]" if detail else "")
        # parametrized criteria report their first failure, else their last pass
        if not _VERDICTS.get(number, "PASS").startswith("FAIL"):
            _VERDICTS[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[n])
