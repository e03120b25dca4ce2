"""Shared fixtures: mock gateways, a small corpus, synthetic testsets."""

from __future__ import annotations

import pytest

from tests.acceptance_report import RESULTS as ACCEPTANCE_RESULTS


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"[{status}] {name}")

from thames.gateway.core import ModelGateway
from thames.gateway.mocks import (
    HALLUCINATION_MARKER,
    MockEmbeddingBackend,
    MockScoringBackend,
    PipelineMockChat,
)
from thames.knowledge_base import ChunkConfig, embed_all, ingest_corpus
from thames.testset import QUESTION_TYPES, TestItem, Testset


def make_mock_gateway(parallelism: int = 1, dim: int = 8, **kwargs) -> ModelGateway:
    return ModelGateway(
        chat_backend=PipelineMockChat(),
        embedding_backend=MockEmbeddingBackend(dim=dim),
        scoring_backend=MockScoringBackend(),
        chat_model_id="judge-mock",
        embedding_model_id="embed-mock",
        parallelism=parallelism,
        **kwargs,
    )


@pytest.fixture
def mock_gateway() -> ModelGateway:
    return make_mock_gateway()


@pytest.fixture
def corpus_file(tmp_path):
    doc = tmp_path / "corpus.txt"
    doc.write_text(
        "\n\n".join(
            f"Section {i}. Fact {i}A holds. Fact {i}B follows. Detail {i}C matters."
            for i in range(12)
        )
    )
    return doc


@pytest.fixture
def small_kb(corpus_file, mock_gateway):
    kb = ingest_corpus([corpus_file], ChunkConfig(max_chunk_chars=120, overlap_chars=0))
    embed_all(kb, mock_gateway)
    return kb


def synthetic_testset(n_items: int, per_type_target: int = 0) -> Testset:
    """Hand-built items; hallucinated answers carry the mock oracle marker."""
    items = []
    for i in range(n_items):
        items.append(
            TestItem(
                id=f"item-{i:05d}",
                question=f"Synthetic question {i} about landmark {i}?",
                question_type=QUESTION_TYPES[i % len(QUESTION_TYPES)],
                answer=f"Correct fact {i}.",
                hallucinated_answer=f"{HALLUCINATION_MARKER} fact {i}, plausibly wrong.",
                source_node_ids=[f"node-{i:04d}"],
                candidate_scores=[],
            )
        )
    return Testset(items=items, per_type_target=per_type_target, generation_manifest={"synthetic": True})
