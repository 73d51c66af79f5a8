"""Collects one verdict line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    LINES.append(line)
    print(line)
    assert ok, line
