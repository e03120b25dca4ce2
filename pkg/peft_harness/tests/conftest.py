"""Shared fixtures: one tiny base model and training set per session."""

from __future__ import annotations

import json

import pytest

from peft_harness.tiny import build_tiny_base_model
from tests.acceptance_report import RESULTS as ACCEPTANCE_RESULTS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"[{status}] {name}")


def training_rows(n: int = 8) -> list[dict]:
    return [
        {
            "prompt": f"Question: Did expedition {i} map the northern range?\n"
            "Is the candidate answer hallucinated? Answer Yes or No:",
            "target": "Yes" if i % 2 else "No",
        }
        for i in range(n)
    ]


@pytest.fixture(scope="session")
def tiny_base(tmp_path_factory):
    return build_tiny_base_model(tmp_path_factory.mktemp("base") / "model", seed=0)


@pytest.fixture(scope="session")
def training_set(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "training.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in training_rows()))
    return path
