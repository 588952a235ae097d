"""Collects the acceptance verdict lines and prints them after the run."""

VERDICTS: list[str] = []


def record(number: int, title: str, ok, detail: str = "") -> None:
    """``ok`` is True, False, or None for a skipped criterion."""
    status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"{status} criterion {number:>2}: {title}"
    if detail:
        line += f" ({detail})"
    VERDICTS.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
