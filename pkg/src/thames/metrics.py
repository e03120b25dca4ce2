"""Scoring formulas: faithfulness, relevancy, similarity, correctness,
ensemble, and binary-classification metrics.

The math is pure; the ``*_pipeline``/judge-assisted operations isolate the
LLM steps and feed their outputs into the pure functions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from thames import prompts
from thames.errors import InputError, ThamesError
from thames.gateway.core import JUDGE_TEMPERATURE, ModelGateway, ScorePair


class UndefinedMetricError(ThamesError):
    """The metric's denominator is empty (no statements / no claims)."""


# -- pure formulas ---------------------------------------------------------------


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    """Cosine similarity; errors on zero vectors or mismatched dims."""
    a = np.asarray(u, dtype=float)
    b = np.asarray(v, dtype=float)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        raise InputError("cosine undefined for zero vectors")
    return float(np.dot(a, b)) / (norm_a * norm_b)


@dataclass
class RelevancyInput:
    original_question_embedding: list[float]
    generated_question_embeddings: list[list[float]]

    def __post_init__(self):
        if not self.generated_question_embeddings:
            raise InputError("need at least one generated-question embedding")
        dim = len(self.original_question_embedding)
        if any(len(e) != dim for e in self.generated_question_embeddings):
            raise InputError("embedding dimensions differ")


def answer_relevancy(inp: RelevancyInput) -> float:
    """Mean cosine between each generated-question embedding and the original's."""
    sims = [cosine(e, inp.original_question_embedding) for e in inp.generated_question_embeddings]
    return sum(sims) / len(sims)


@dataclass
class FaithfulnessBreakdown:
    statements: list[str]
    supported_flags: list[bool]
    score: float


@dataclass
class CorrectnessBreakdown:
    tp: list[str]
    fp: list[str]
    fn: list[str]
    factual: float
    similarity: float
    w1: float
    w2: float
    score: float


def factual_correctness(tp: int, fp: int, fn: int) -> float:
    """Claim overlap: |TP| / (|TP| + 0.5 * (|FP| + |FN|))."""
    denominator = tp + 0.5 * (fp + fn)
    if denominator == 0:
        raise UndefinedMetricError("no claims to compare")
    return tp / denominator


def correctness_score(factual: float, similarity: float, w1: float) -> float:
    if not 0.0 <= w1 <= 1.0:
        raise InputError("w1 must lie in [0, 1]")
    w2 = 1.0 - w1
    return (w1 * factual + w2 * similarity) / (w1 + w2)


def ensemble(pair: ScorePair) -> float:
    """Entailment + factual consistency; lower means a stronger hallucination."""
    return pair.entailment + pair.consistency


@dataclass
class ClassificationTally:
    """Binary confusion counts; positive class = hallucinated."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise InputError("tally counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    precision_defined: bool = True
    recall_defined: bool = True

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "precision_defined": self.precision_defined,
            "recall_defined": self.recall_defined,
        }


def classification_metrics(tally: ClassificationTally) -> ClassificationMetrics:
    """Accuracy, precision, recall, F1. Undefined ratios report 0 with a flag."""
    if tally.total == 0:
        raise InputError("empty tally")
    accuracy = (tally.tp + tally.tn) / tally.total
    precision_defined = (tally.tp + tally.fp) > 0
    recall_defined = (tally.tp + tally.fn) > 0
    precision = tally.tp / (tally.tp + tally.fp) if precision_defined else 0.0
    recall = tally.tp / (tally.tp + tally.fn) if recall_defined else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return ClassificationMetrics(accuracy, precision, recall, f1, precision_defined, recall_defined)


# -- judge-assisted operations -----------------------------------------------------


def relevancy_pipeline(generated_answer: str, original_question: str, n: int, gateway: ModelGateway) -> float:
    """Reverse-generate n questions from the answer, compare embeddings to the original."""
    if n < 1:
        raise InputError("n must be >= 1")
    req = gateway.request(
        prompts.render("relevancy_questions", num_questions=n),
        f"Answer:\n{generated_answer}",
        temperature=JUDGE_TEMPERATURE,
    )
    rows = gateway.chat_batch_json(req, expected_count=n, required_keys=["question"])
    questions = [str(r["question"]) for r in rows]
    vectors = gateway.embed([original_question, *questions])
    return answer_relevancy(
        RelevancyInput(
            original_question_embedding=vectors[0],
            generated_question_embeddings=vectors[1:],
        )
    )


def answer_faithfulness(answer: str, context: str, gateway: ModelGateway) -> FaithfulnessBreakdown:
    """|supported statements| / |statements|, with the judge's decomposition kept."""
    if not answer.strip():
        raise InputError("answer is empty")
    extraction = gateway.chat_json_list(
        gateway.request(prompts.render("faithfulness_statements"), f"Answer:\n{answer}"),
        required_keys=["statement"],
    )
    statements = [str(r["statement"]) for r in extraction if str(r["statement"]).strip()]
    if not statements:
        raise UndefinedMetricError("no statements extracted from answer")

    import json

    verification = gateway.chat_batch_json(
        gateway.request(
            prompts.render("faithfulness_verify"),
            f"Context:\n{context}\n\nStatements:\n{json.dumps([{'statement': s} for s in statements])}",
        ),
        expected_count=len(statements),
        required_keys=["statement", "supported"],
    )
    flags = [_as_bool(r["supported"]) for r in verification]
    return FaithfulnessBreakdown(
        statements=statements,
        supported_flags=flags,
        score=sum(flags) / len(statements),
    )


def answer_correctness(
    generated: str,
    ground_truth: str,
    gateway: ModelGateway,
    w1: float = 0.75,
    *,
    similarity: float | None = None,
) -> CorrectnessBreakdown:
    """Weighted blend of claim-level factual overlap and embedding similarity.

    ``similarity`` may be passed in when the caller already computed the
    answer-similarity cosine; otherwise the two answers are embedded here.
    """
    if not 0.0 <= w1 <= 1.0:
        raise InputError("w1 must lie in [0, 1]")
    claims = gateway.chat_json_object(
        gateway.request(
            prompts.render("correctness_claims"),
            f"Generated answer:\n{generated}\n\nGround truth answer:\n{ground_truth}",
        ),
        required_keys=["tp", "fp", "fn"],
    )
    tp = [str(c) for c in claims["tp"]]
    fp = [str(c) for c in claims["fp"]]
    fn = [str(c) for c in claims["fn"]]
    factual = factual_correctness(len(tp), len(fp), len(fn))
    if similarity is None:
        vec_gen, vec_truth = gateway.embed([generated, ground_truth])
        similarity = cosine(vec_gen, vec_truth)
    return CorrectnessBreakdown(
        tp=tp,
        fp=fp,
        fn=fn,
        factual=factual,
        similarity=similarity,
        w1=w1,
        w2=1.0 - w1,
        score=correctness_score(factual, similarity, w1),
    )


def answer_similarity(generated: str, ground_truth: str, gateway: ModelGateway) -> float:
    """Cosine similarity of the two answers' embeddings."""
    vec_gen, vec_truth = gateway.embed([generated, ground_truth])
    return cosine(vec_gen, vec_truth)


def _as_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        return value.strip().lower() in ("true", "yes", "1")
    return bool(value)


def breakdown_to_dict(obj) -> dict:
    """JSON-serializable view of a metric breakdown for audit files."""
    if isinstance(obj, FaithfulnessBreakdown):
        return {
            "statements": obj.statements,
            "supported_flags": obj.supported_flags,
            "score": obj.score,
        }
    if isinstance(obj, CorrectnessBreakdown):
        return {
            "tp": obj.tp,
            "fp": obj.fp,
            "fn": obj.fn,
            "factual": obj.factual,
            "similarity": obj.similarity,
            "w1": obj.w1,
            "w2": obj.w2,
            "score": obj.score,
        }
    raise InputError(f"not a metric breakdown: {type(obj)!r}")
