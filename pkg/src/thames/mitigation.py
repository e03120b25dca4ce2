"""Mitigation strategies: each one rewrites the per-item prompt plan.

A strategy turns a task item plus its base request into a ``PromptPlan``,
an ordered chain of stages executed against the subject model. Baseline
passes the request through; Chain-of-Verification adds verification
stages whose question-answering calls run in fresh contexts; failure-case
RAG prepends the most similar past misclassifications as few-shot
exemplars.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from thames import prompts
from thames.errors import InputError
from thames.gateway.backends import ChatRequest
from thames.gateway.core import ModelGateway
from thames.ioutil import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

TEXT_GENERATION = "text_generation"
IDENTIFICATION = "identification"


@dataclass
class TaskInput:
    """One evaluation item as seen by a strategy."""

    kind: str
    question: str
    presented_answer: str | None = None

    def __post_init__(self):
        if self.kind not in (TEXT_GENERATION, IDENTIFICATION):
            raise InputError(f"unknown task kind: {self.kind!r}")


@dataclass
class PlanStage:
    """Named stage: builds zero or more requests from prior stage outputs."""

    name: str
    build: Callable[[dict], list[ChatRequest]]
    reduce: Callable[[list[str]], Any] = lambda responses: responses[0]


@dataclass
class PlanResult:
    final: str
    outputs: dict
    flags: dict = field(default_factory=dict)


@dataclass
class PromptPlan:
    """Ordered stage chain plus the rule mapping outputs to the final text."""

    stages: list[PlanStage]
    final_extractor: Callable[[dict], str]
    flags_fn: Callable[[dict], dict] | None = None

    def __post_init__(self):
        names = [s.name for s in self.stages]
        if len(set(names)) != len(names):
            raise InputError("duplicate stage names in prompt plan")

    def execute(self, chat: Callable[[ChatRequest], str]) -> PlanResult:
        outputs: dict[str, Any] = {}
        for stage in self.stages:
            requests = stage.build(outputs)
            responses = [chat(req) for req in requests]
            outputs[stage.name] = stage.reduce(responses) if requests else None
        flags = self.flags_fn(outputs) if self.flags_fn else {}
        return PlanResult(final=self.final_extractor(outputs), outputs=outputs, flags=flags)


# -- baseline --------------------------------------------------------------------


class BaselineStrategy:
    """Single stage; the task prompt goes through unchanged."""

    strategy_id = "original"

    def plan(self, task: TaskInput, base_request: ChatRequest) -> PromptPlan:
        return PromptPlan(
            stages=[PlanStage(name="baseline", build=lambda _: [base_request])],
            final_extractor=lambda outputs: outputs["baseline"],
        )


def baseline_strategy() -> BaselineStrategy:
    return BaselineStrategy()


# -- chain of verification ----------------------------------------------------------


_NUMBERED = re.compile(r"^\s*(?:\d+[.)]\s*|[-*]\s*)")


def split_verification_questions(text: str) -> list[str]:
    """Newline-separated questions, numbering stripped."""
    questions = []
    for line in text.splitlines():
        cleaned = _NUMBERED.sub("", line).strip()
        if cleaned:
            questions.append(cleaned)
    return questions


class CoveStrategy:
    """Draft, derive verification questions, answer them in isolation, revise.

    The verification-answer requests contain only the verification question
    itself, never the draft response, so each check is independent of the
    initial reasoning.
    """

    strategy_id = "icl"

    def plan(self, task: TaskInput, base_request: ChatRequest) -> PromptPlan:
        model_id = base_request.model_id
        verify_system = prompts.render("cove_verify_answer")

        def build_template(outputs: dict) -> list[ChatRequest]:
            prompt = prompts.render("cove_template", original_question=task.question)
            return [ChatRequest(system_prompt="", user_messages=[prompt], temperature=0.0, model_id=model_id)]

        def build_questions(outputs: dict) -> list[ChatRequest]:
            prompt = prompts.render(
                "cove_questions",
                original_question=task.question,
                baseline_response=outputs["baseline"],
                verification_question_template=outputs["template"],
            )
            return [ChatRequest(system_prompt="", user_messages=[prompt], temperature=0.0, model_id=model_id)]

        def build_verify(outputs: dict) -> list[ChatRequest]:
            return [
                ChatRequest(system_prompt=verify_system, user_messages=[question], temperature=0.0, model_id=model_id)
                for question in outputs["questions"]
            ]

        def build_revise(outputs: dict) -> list[ChatRequest]:
            questions = outputs["questions"]
            if not questions:
                return []
            answers = outputs["verify"] or []
            qa_block = "\n".join(f"Q: {q}\nA: {a}" for q, a in zip(questions, answers))
            prompt = prompts.render(
                "cove_revision",
                original_question=task.question,
                baseline_response=outputs["baseline"],
                verification_qa=qa_block,
            )
            return [ChatRequest(system_prompt="", user_messages=[prompt], temperature=0.0, model_id=model_id)]

        return PromptPlan(
            stages=[
                PlanStage(name="baseline", build=lambda _: [base_request]),
                PlanStage(name="template", build=build_template),
                PlanStage(
                    name="questions",
                    build=build_questions,
                    reduce=lambda responses: split_verification_questions(responses[0]),
                ),
                PlanStage(name="verify", build=build_verify, reduce=lambda responses: responses),
                PlanStage(name="revise", build=build_revise),
            ],
            final_extractor=lambda outputs: outputs["revise"] if outputs["revise"] is not None else outputs["baseline"],
            flags_fn=lambda outputs: {"cove_fallback": True} if outputs["revise"] is None else {},
        )


def cove_strategy() -> CoveStrategy:
    return CoveStrategy()


# -- failure store and RAG -------------------------------------------------------------


@dataclass
class FailureCase:
    """One misclassified identification item, kept for retrieval."""

    item_id: str
    question: str
    presented_answer: str
    true_label: bool  # True = the presented answer was hallucinated
    model_label: bool | None
    embedding: list[float]

    def __post_init__(self):
        if self.model_label == self.true_label:
            raise InputError(f"failure case {self.item_id} was not misclassified")

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "question": self.question,
            "presented_answer": self.presented_answer,
            "true_label": self.true_label,
            "model_label": self.model_label,
            "embedding": self.embedding,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "FailureCase":
        return cls(
            item_id=row["item_id"],
            question=row["question"],
            presented_answer=row["presented_answer"],
            true_label=row["true_label"],
            model_label=row["model_label"],
            embedding=list(row["embedding"]),
        )


class FailureStore:
    """Failure cases with an exhaustive cosine index over question embeddings."""

    def __init__(self, cases: list[FailureCase]):
        self.cases = list(cases)
        self._matrix = (
            np.asarray([c.embedding for c in self.cases], dtype=float)
            if self.cases
            else np.zeros((0, 0))
        )

    def __len__(self) -> int:
        return len(self.cases)

    def retrieve(self, query_embedding: list[float], k: int) -> list[FailureCase]:
        """Top-k by cosine, descending; ties broken by item id."""
        if not self.cases:
            raise InputError("failure store is empty")
        if k < 1:
            raise InputError("k must be >= 1")
        if k > len(self.cases):
            logger.warning("k=%d exceeds store size %d; clamping", k, len(self.cases))
            k = len(self.cases)
        query = np.asarray(query_embedding, dtype=float)
        norms = np.linalg.norm(self._matrix, axis=1) * float(np.linalg.norm(query))
        sims = (self._matrix @ query) / norms
        order = sorted(range(len(self.cases)), key=lambda i: (-float(sims[i]), self.cases[i].item_id))
        return [self.cases[i] for i in order[:k]]


def build_failure_store(failures: list[FailureCase]) -> FailureStore:
    return FailureStore(failures)


def save_failure_store(store: FailureStore, path: str | Path) -> Path:
    path = Path(path)
    write_jsonl(path, [case.to_dict() for case in store.cases])
    return path


def load_failure_store(path: str | Path) -> FailureStore:
    return FailureStore([FailureCase.from_dict(row) for row in read_jsonl(path)])


def render_exemplar(case: FailureCase, kind: str) -> str:
    verdict = "Yes" if case.true_label else "No"
    if kind == IDENTIFICATION:
        return (
            "Example:\n"
            f"Question: {case.question}\n"
            f"Candidate answer: {case.presented_answer}\n"
            f"Correct verdict (is it hallucinated?): {verdict}"
        )
    status = "hallucinated" if case.true_label else "correct"
    return (
        "Example of a previously misjudged case:\n"
        f"Question: {case.question}\n"
        f"A candidate answer that was actually {status}: {case.presented_answer}"
    )


class RagStrategy:
    """Prepends the top-k most similar failure cases as few-shot exemplars."""

    strategy_id = "rag"

    def __init__(self, store: FailureStore, k: int, gateway: ModelGateway):
        if len(store) == 0:
            raise InputError("failure store is empty")
        self.store = store
        self.k = k
        self._gateway = gateway

    def plan(self, task: TaskInput, base_request: ChatRequest) -> PromptPlan:
        query_embedding = self._gateway.embed_one(task.question)
        cases = self.store.retrieve(query_embedding, self.k)
        exemplar_block = "\n\n".join(render_exemplar(c, task.kind) for c in cases)
        augmented = ChatRequest(
            system_prompt=base_request.system_prompt,
            user_messages=[
                exemplar_block + "\n\n" + base_request.user_messages[0],
                *base_request.user_messages[1:],
            ],
            temperature=base_request.temperature,
            max_tokens=base_request.max_tokens,
            model_id=base_request.model_id,
        )
        return PromptPlan(
            stages=[PlanStage(name="baseline", build=lambda _: [augmented])],
            final_extractor=lambda outputs: outputs["baseline"],
        )


def rag_strategy(store: FailureStore, k: int, gateway: ModelGateway) -> RagStrategy:
    return RagStrategy(store, k, gateway)


def strategy_by_name(name: str, *, store: FailureStore | None = None, k: int = 3, gateway: ModelGateway | None = None):
    if name == "original":
        return baseline_strategy()
    if name == "icl":
        return cove_strategy()
    if name == "rag":
        if store is None or gateway is None:
            raise InputError("rag strategy needs a failure store and a gateway")
        return rag_strategy(store, k, gateway)
    raise InputError(f"unknown strategy: {name!r}")
