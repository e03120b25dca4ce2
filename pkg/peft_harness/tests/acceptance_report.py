"""Shared collector for acceptance-criterion outcomes."""

from __future__ import annotations

import contextlib

RESULTS: list[tuple[str, str]] = []


@contextlib.contextmanager
def criterion(name: str):
    try:
        yield
    except BaseException:
        RESULTS.append((name, "FAIL"))
        raise
    RESULTS.append((name, "PASS"))
