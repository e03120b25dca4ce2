"""Prompt template assets.

Templates are stored as plain text with ``str.format`` placeholders; JSON
examples inside them use doubled braces. ``render`` is the single
substitution point, so a prompt delivered to a backend is always the
stored asset text with only the declared placeholders substituted.
Template hashes go into run manifests.
"""

from __future__ import annotations

import hashlib
from importlib import resources

_cache: dict[str, str] = {}


def load(name: str) -> str:
    """Raw template text for ``name`` (without the .txt suffix)."""
    if name not in _cache:
        _cache[name] = (
            resources.files(__package__).joinpath(f"{name}.txt").read_text(encoding="utf-8")
        )
    return _cache[name]


def render(name: str, **placeholders) -> str:
    """Template with placeholders substituted; doubled braces collapse to one."""
    return load(name).format(**placeholders)


def template_hash(name: str) -> str:
    return hashlib.sha256(load(name).encode("utf-8")).hexdigest()


def manifest_hashes(names: list[str]) -> dict[str, str]:
    return {name: template_hash(name) for name in sorted(names)}


FILTER_PATTERN = load("filter_pattern").strip("\n")
