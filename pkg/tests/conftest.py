"""Collects one verdict line per acceptance criterion and prints them at the end."""

import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    def record(name: str, ok: bool | None, detail: str = "") -> bool:
        tag = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
        _VERDICTS.append(f"{tag}  {name}" + (f"  ({detail})" if detail else ""))
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
