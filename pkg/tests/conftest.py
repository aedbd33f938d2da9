import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Record one PASS/FAIL line per acceptance criterion and echo it live."""

    def record(label: str, ok: bool, detail: str, gating: bool = True) -> bool:
        tag = "PASS" if ok else ("FAIL" if gating else "FAIL (observational, not gating)")
        line = f"{tag} {label}: {detail}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
