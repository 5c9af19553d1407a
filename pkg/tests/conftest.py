import sys
from pathlib import Path

import pytest

# helpers such as randsys live next to the tests
sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """``check(n, ok, detail)`` records and prints one PASS/FAIL line, then asserts."""
    lines = request.config.stash.setdefault(CRITERIA, [])

    def check(n: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        lines.append((n, line))
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda item: item[0]):
            terminalreporter.write_line(line)
