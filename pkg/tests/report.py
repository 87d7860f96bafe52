"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

from contextlib import contextmanager

LINES: list[str] = []


@contextmanager
def criterion(number, title):
    notes: list[str] = []
    try:
        yield notes
    except BaseException as exc:
        line = f"[FAIL] criterion {number}: {title} -- {type(exc).__name__}: {exc}".splitlines()[0]
        LINES.append(line)
        print(line)
        raise
    extra = f" ({'; '.join(notes)})" if notes else ""
    line = f"[PASS] criterion {number}: {title}{extra}"
    LINES.append(line)
    print(line)
