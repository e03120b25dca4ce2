"""Deterministic mock backends.

Every response is a pure function of the request, so pipelines driven by
these mocks are bit-reproducible. ``PipelineMockChat`` recognizes each
prompt family by its opening line and synthesizes schema-valid output;
the scripted variants replay fixed responses for targeted tests.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field

import numpy as np

from thames.errors import TransportError
from thames.gateway.backends import ChatRequest, ChatResult, EmbedResult

_COUNT_RE = re.compile(r"list of (\d+) JSON objects")
_TARGET_TYPE_RE = re.compile(r"to be '(\w+)'")

HALLUCINATION_MARKER = "Counterfactual"


def _h(text: str, n: int = 8) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:n]


def _mock_tokens(text: str) -> int:
    return max(1, len(text) // 4)


def _json_array_in(text: str) -> list[dict]:
    # first complete JSON array in the text; trailing prose/context ignored
    lo = text.find("[")
    if lo == -1:
        return []
    try:
        value, _ = json.JSONDecoder().raw_decode(text[lo:])
    except json.JSONDecodeError:
        return []
    return value if isinstance(value, list) else []


def _split_sentences(text: str) -> list[str]:
    parts = re.split(r"(?<=[.!?])\s+", text.strip())
    return [p.strip() for p in parts if p.strip()]


@dataclass
class ScriptedChatBackend:
    """Replays a fixed list of completions, in order."""

    responses: list[str]
    cycle: bool = False
    calls: list[ChatRequest] = field(default_factory=list)

    def complete(self, req: ChatRequest) -> ChatResult:
        self.calls.append(req)
        if not self.responses:
            raise TransportError("scripted backend exhausted")
        index = (len(self.calls) - 1) % len(self.responses) if self.cycle else 0
        text = self.responses[index] if self.cycle else self.responses.pop(0)
        prompt = req.system_prompt + "".join(req.user_messages)
        return ChatResult(text, _mock_tokens(prompt), _mock_tokens(text))


@dataclass
class ConstantChatBackend:
    """Always answers with the same text (e.g. an always-"Yes" judge)."""

    text: str
    calls: list[ChatRequest] = field(default_factory=list)

    def complete(self, req: ChatRequest) -> ChatResult:
        self.calls.append(req)
        prompt = req.system_prompt + "".join(req.user_messages)
        return ChatResult(self.text, _mock_tokens(prompt), _mock_tokens(self.text))


@dataclass
class FlakyChatBackend:
    """Fails with a transport error a fixed number of times, then delegates."""

    inner: object
    fail_times: int
    attempts: int = 0

    def complete(self, req: ChatRequest) -> ChatResult:
        self.attempts += 1
        if self.attempts <= self.fail_times:
            raise TransportError(f"scripted transient failure {self.attempts}")
        return self.inner.complete(req)


class PipelineMockChat:
    """Offline stand-in for every chat role in the pipeline.

    Questions carry the word "the" on purpose so the regex prefilter routes
    them through LLM validation; questions containing "[invalid]" are
    rejected by the mock validator. Hallucinated candidates are prefixed
    with :data:`HALLUCINATION_MARKER`, which the identification rule uses
    as a hidden answer key.
    """

    def __init__(self):
        self.calls: list[ChatRequest] = []

    def complete(self, req: ChatRequest) -> ChatResult:
        self.calls.append(req)
        text = self._respond(req)
        prompt = req.system_prompt + "".join(req.user_messages)
        return ChatResult(text, _mock_tokens(prompt), _mock_tokens(text))

    def _respond(self, req: ChatRequest) -> str:
        user = "\n".join(req.user_messages)
        # CoVe stages ship their whole prompt as the user message
        head = req.system_prompt or req.user_messages[0]

        if head.startswith("Your role is to generate evaluation questions"):
            return self._baseline_questions(head, user)
        if head.startswith("Your role is to modify evaluation questions"):
            return self._evolve(head, user)
        if head.startswith("Your role is to filter questions"):
            return self._filter(user)
        if head.startswith("Your role is to generate answers"):
            return self._answers(user)
        if head.startswith("Your role is to generate hallucinated answers"):
            return self._hallucinated(head, user)
        if "create a series of verification questions" in head:
            baseline = self._section(user, "Baseline Response:")
            key = _h(baseline or user, 16)
            return f"1. Was item {key[:6]} stated correctly?\n2. Was item {key[6:12]} stated correctly?"
        if "create a verification question" in head:
            return f"Was [entity {_h(user, 6)}] associated with [the queried detail]?"
        if head.startswith("Write questions that the given answer"):
            count = self._count(user) or self._count(head) or 3
            answer = self._section(user, "Answer:")
            rows = [{"question": f"Derived question {i} about {_h(answer or user, 6)}?"} for i in range(count)]
            return json.dumps(rows)
        if head.startswith("Break the answer into atomic factual statements"):
            answer = self._section(user, "Answer:") or user
            rows = [{"statement": s} for s in _split_sentences(answer)] or [{"statement": answer.strip()}]
            return json.dumps(rows)
        if head.startswith("Decide for each statement whether the context supports it"):
            context = self._section(user, "Context:").lower()
            rows = []
            for obj in _json_array_in(user):
                statement = str(obj.get("statement", ""))
                rows.append({"statement": statement, "supported": statement.lower() in context})
            return json.dumps(rows)
        if head.startswith("Classify the factual claims"):
            generated = _split_sentences(self._section(user, "Generated answer:"))
            truth = _split_sentences(self._section(user, "Ground truth answer:"))
            truth_norm = {s.lower() for s in truth}
            gen_norm = {s.lower() for s in generated}
            return json.dumps(
                {
                    "tp": [s for s in generated if s.lower() in truth_norm],
                    "fp": [s for s in generated if s.lower() not in truth_norm],
                    "fn": [s for s in truth if s.lower() not in gen_norm],
                }
            )
        if head.startswith("You are judging whether a candidate answer"):
            presented = re.findall(r"Candidate answer: (.*)", user)
            verdict = presented and HALLUCINATION_MARKER in presented[-1]
            return "Yes" if verdict else "No"
        if head.startswith("Revise the draft answer"):
            draft = self._section(user, "Draft Answer:")
            if draft.strip() in ("Yes", "No"):
                return draft.strip()
            return f"Revised answer {_h(user)} consistent with verification."
        # generic QA (text-generation task, CoVe verification answers)
        return f"Mock answer {_h(user)}."

    # -- per-family synthesizers -------------------------------------------

    def _baseline_questions(self, system: str, user: str) -> str:
        count = self._count(system) or 1
        key = _h(user)
        rows = [
            {"question": f"What does the segment {key} say regarding topic {i}?", "question_type": "simple"}
            for i in range(count)
        ]
        return json.dumps(rows)

    def _evolve(self, system: str, user: str) -> str:
        match = _TARGET_TYPE_RE.search(system)
        target = match.group(1) if match else "reasoning"
        rows = []
        for obj in _json_array_in(user):
            question = str(obj.get("question", ""))
            rows.append({"question": f"{question} [evolved:{target}]", "question_type": target})
        return json.dumps(rows)

    def _filter(self, user: str) -> str:
        rows = []
        for obj in _json_array_in(user):
            question = str(obj.get("question", ""))
            invalid = "[invalid]" in question
            out = dict(obj)
            out["valid"] = "false" if invalid else "true"
            out["reason"] = (
                "References context that is not named in the question."
                if invalid
                else "Self-contained; answerable as stated."
            )
            rows.append(out)
        return json.dumps(rows)

    def _answers(self, user: str) -> str:
        rows = []
        for obj in _json_array_in(user):
            question = str(obj.get("question", ""))
            out = dict(obj)
            out["answer"] = f"Grounded answer {_h(question, 6)} for: {question}"
            rows.append(out)
        return json.dumps(rows)

    def _hallucinated(self, system: str, user: str) -> str:
        count = self._count(system) or 2
        question = self._section(user, "Question:")
        rows = [
            {
                "question": question,
                "hallucinated_answer": f"{HALLUCINATION_MARKER} {i} ({_h(question, 6)}): a plausible but wrong account.",
            }
            for i in range(count)
        ]
        return json.dumps(rows)

    # -- helpers ------------------------------------------------------------

    @staticmethod
    def _count(text: str) -> int | None:
        match = _COUNT_RE.search(text)
        return int(match.group(1)) if match else None

    @staticmethod
    def _section(user: str, label: str) -> str:
        # grabs the text after `label` up to the next "Label:"-shaped line
        pattern = re.escape(label) + r"\s*(.*?)(?=\n[A-Z][\w ]{2,40}:|\Z)"
        match = re.search(pattern, user, re.DOTALL)
        return match.group(1).strip() if match else ""


@dataclass
class MockEmbeddingBackend:
    """Hash-seeded gaussian embeddings; identical text -> identical vector."""

    dim: int = 32
    calls: list[list[str]] = field(default_factory=list)

    def embed(self, texts: list[str], model_id: str) -> EmbedResult:
        self.calls.append(list(texts))
        vectors = []
        for text in texts:
            seed = int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")
            rng = np.random.default_rng(seed)
            vectors.append(rng.standard_normal(self.dim).tolist())
        tokens = sum(_mock_tokens(t) for t in texts)
        return EmbedResult(vectors=vectors, input_tokens=tokens)


@dataclass
class FixedEmbeddingBackend:
    """Returns preset vectors keyed by exact text; dims may be mismatched on purpose."""

    table: dict[str, list[float]]
    default_dim: int = 4

    def embed(self, texts: list[str], model_id: str) -> EmbedResult:
        vectors = []
        for text in texts:
            if text in self.table:
                vectors.append(list(self.table[text]))
            else:
                vectors.append([1.0] + [0.0] * (self.default_dim - 1))
        return EmbedResult(vectors=vectors)


@dataclass
class MockScoringBackend:
    """Deterministic pseudo-scores derived from the (premise, hypothesis) pair."""

    calls: list[tuple[str, str]] = field(default_factory=list)

    def score(self, premise: str, hypothesis: str) -> tuple[float, float]:
        self.calls.append((premise, hypothesis))
        digest = hashlib.sha256(f"{premise}\x00{hypothesis}".encode("utf-8")).digest()
        entailment = int.from_bytes(digest[:4], "big") / 0xFFFFFFFF
        consistency = int.from_bytes(digest[4:8], "big") / 0xFFFFFFFF
        return entailment, consistency


@dataclass
class ScriptedScoringBackend:
    """Replays a fixed list of (entailment, consistency) pairs."""

    pairs: list[tuple[float, float]]
    calls: list[tuple[str, str]] = field(default_factory=list)

    def score(self, premise: str, hypothesis: str) -> tuple[float, float]:
        self.calls.append((premise, hypothesis))
        if not self.pairs:
            raise TransportError("scripted scorer exhausted")
        return self.pairs.pop(0)
