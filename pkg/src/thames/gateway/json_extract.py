"""Extract JSON payloads from LLM completions that may carry prose or fences.

Repair ladder, cheapest first: direct parse -> markdown fence strip ->
bracket slice (first opener to last closer). Anything beyond that is the
caller's re-prompt loop, not ours.
"""

from __future__ import annotations

import json
import re
from typing import Any

_FENCE_RE = re.compile(r"```(?:json)?\s*\n?(.*?)\n?\s*```", re.DOTALL | re.IGNORECASE)


def _attempts(text: str, opener: str, closer: str) -> list[str]:
    candidates = [text.strip()]
    fence = _FENCE_RE.search(text)
    if fence:
        candidates.append(fence.group(1).strip())
    # widest bracket slice, applied to both the raw text and the fence body
    for base in list(candidates):
        lo, hi = base.find(opener), base.rfind(closer)
        if lo != -1 and hi > lo:
            candidates.append(base[lo : hi + 1])
    return candidates


def extract_json_array(text: str) -> list[Any]:
    """Parse a JSON array out of a completion.

    Raises ValueError when no candidate slice parses to a list.
    """
    for candidate in _attempts(text, "[", "]"):
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(value, list):
            return value
    raise ValueError("no JSON array found in completion")


def extract_json_object(text: str) -> dict:
    """Parse a single JSON object out of a completion."""
    for candidate in _attempts(text, "{", "}"):
        try:
            value = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            return value
    raise ValueError("no JSON object found in completion")
