"""Evaluation harness: runs a (model, strategy) pair over a testset.

Two tasks: free-form answer generation scored with the four answer
metrics, and hallucination identification where a seeded coin presents
either the correct or the hallucinated answer and the model gives a
Yes/No verdict. Misclassified identification items become failure cases
for the RAG mitigation and the fine-tuning export.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from thames import metrics, prompts
from thames.errors import InputError, ThamesError
from thames.gateway.backends import ChatRequest
from thames.gateway.core import GENERATION_TEMPERATURE, JUDGE_TEMPERATURE, ModelGateway
from thames.ioutil import atomic_write_json, read_jsonl, write_jsonl
from thames.knowledge_base import KnowledgeBase
from thames.mitigation import IDENTIFICATION, TEXT_GENERATION, FailureCase, TaskInput
from thames.testset import Testset

logger = logging.getLogger(__name__)

GENERATION_METRICS = ("answer_faithfulness", "answer_relevancy", "answer_correctness", "answer_similarity")
IDENTIFICATION_METRICS = ("accuracy", "precision", "recall", "f1")

MAX_FAILURE_FRACTION = 0.2


@dataclass
class EvalRecord:
    item_id: str
    task: str
    question_type: str
    model_output: str = ""
    presented_answer_kind: str | None = None
    presented_answer: str | None = None
    parsed_label: bool | None = None
    is_correct: bool | None = None
    metric_values: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "task": self.task,
            "question_type": self.question_type,
            "model_output": self.model_output,
            "presented_answer_kind": self.presented_answer_kind,
            "presented_answer": self.presented_answer,
            "parsed_label": self.parsed_label,
            "is_correct": self.is_correct,
            "metric_values": self.metric_values,
            "flags": self.flags,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, row: dict) -> "EvalRecord":
        return cls(**row)


@dataclass
class RunResult:
    run_id: str
    task: str
    model_id: str
    strategy_id: str
    seed: int
    testset_id: str
    records: list[EvalRecord]
    aggregates: dict
    per_question_type: dict
    failure_count: int = 0
    invalid: bool = False

    def summary(self) -> dict:
        return {
            "run_id": self.run_id,
            "task": self.task,
            "model_id": self.model_id,
            "strategy_id": self.strategy_id,
            "seed": self.seed,
            "testset_id": self.testset_id,
            "n_records": len(self.records),
            "aggregates": self.aggregates,
            "per_question_type": self.per_question_type,
            "failure_count": self.failure_count,
            "invalid": self.invalid,
        }


def _run_id(task: str, model_id: str, strategy_id: str, seed: int, testset_id: str) -> str:
    key = f"{task}|{model_id}|{strategy_id}|{seed}|{testset_id}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:12]


# -- identification protocol -------------------------------------------------------


def presentation_coin(seed: int, item_id: str) -> bool:
    """True -> present the hallucinated answer. Keyed by (seed, item id),
    not sequence position, so partial re-runs and reordering are stable."""
    digest = hashlib.sha256(f"{seed}:{item_id}".encode("utf-8")).digest()
    return bool(int.from_bytes(digest[:8], "big") & 1)


_VERDICT_RE = re.compile(r"^\W*(yes|no)\b", re.IGNORECASE)


def parse_verdict(text: str) -> bool | None:
    """Leading Yes/No, case-insensitive; None if neither is found."""
    match = _VERDICT_RE.match(text.strip())
    if not match:
        return None
    return match.group(1).lower() == "yes"


def identification_request(question: str, presented: str, model_id: str) -> ChatRequest:
    user = (
        f"Question: {question}\n"
        f"Candidate answer: {presented}\n\n"
        "Is the candidate answer hallucinated? Answer Yes or No:"
    )
    return ChatRequest(
        system_prompt=prompts.render("identification_judgment"),
        user_messages=[user],
        temperature=JUDGE_TEMPERATURE,
        max_tokens=16,
        model_id=model_id,
    )


def generation_request(question: str, model_id: str) -> ChatRequest:
    return ChatRequest(
        system_prompt=prompts.render("generation_task"),
        user_messages=[question],
        temperature=GENERATION_TEMPERATURE,
        max_tokens=1024,
        model_id=model_id,
    )


# -- task runners --------------------------------------------------------------------


def run_text_generation(
    subject: ModelGateway,
    testset: Testset,
    strategy,
    gateway: ModelGateway,
    seed: int,
    kb: KnowledgeBase,
    *,
    relevancy_n: int = 3,
    w1: float = 0.75,
) -> RunResult:
    """Answer every question via the strategy's plan; score with A_F/A_R/A_C/A_S."""
    if not testset.items:
        raise InputError("testset is empty")

    def process(item) -> EvalRecord:
        record = EvalRecord(item_id=item.id, task=TEXT_GENERATION, question_type=item.question_type)
        try:
            task = TaskInput(kind=TEXT_GENERATION, question=item.question)
            plan = strategy.plan(task, generation_request(item.question, subject.chat_model_id))
            result = plan.execute(subject.chat)
            answer = result.final
            record.model_output = answer
            record.flags = result.flags

            context = kb.context_text([i for i in item.source_node_ids])
            a_f = metrics.answer_faithfulness(answer, context, gateway).score
            a_r = metrics.relevancy_pipeline(answer, item.question, relevancy_n, gateway)
            a_s = metrics.answer_similarity(answer, item.answer, gateway)
            a_c = metrics.answer_correctness(answer, item.answer, gateway, w1, similarity=a_s).score
            record.metric_values = {
                "answer_faithfulness": a_f,
                "answer_relevancy": a_r,
                "answer_correctness": a_c,
                "answer_similarity": a_s,
            }
        except ThamesError as exc:
            record.error = str(exc)
            logger.warning("item %s failed: %s", item.id, exc)
        return record

    records = subject.map_parallel(process, testset.items)
    return _finalize_run(TEXT_GENERATION, subject, strategy, seed, testset, records)


def run_identification(
    subject: ModelGateway,
    testset: Testset,
    strategy,
    gateway: ModelGateway,
    seed: int,
) -> RunResult:
    """Present correct/hallucinated answers 50/50 (seeded); collect Yes/No verdicts.

    An unparseable verdict gets one re-ask; after that the record is an
    abstention, counted as incorrect.
    """
    if not testset.items:
        raise InputError("testset is empty")

    def process(item) -> EvalRecord:
        hallucinated = presentation_coin(seed, item.id)
        presented = item.hallucinated_answer if hallucinated else item.answer
        record = EvalRecord(
            item_id=item.id,
            task=IDENTIFICATION,
            question_type=item.question_type,
            presented_answer_kind="hallucinated" if hallucinated else "correct",
            presented_answer=presented,
        )
        try:
            task = TaskInput(kind=IDENTIFICATION, question=item.question, presented_answer=presented)
            base = identification_request(item.question, presented, subject.chat_model_id)
            result = strategy.plan(task, base).execute(subject.chat)
            verdict = parse_verdict(result.final)
            if verdict is None:
                retry_base = base.with_extra_user_message("Answer strictly with Yes or No.")
                result = strategy.plan(task, retry_base).execute(subject.chat)
                verdict = parse_verdict(result.final)
            record.model_output = result.final
            record.flags = result.flags
            record.parsed_label = verdict
            if verdict is None:
                record.flags["abstained"] = True
                record.is_correct = False
            else:
                record.is_correct = verdict == hallucinated
        except ThamesError as exc:
            record.error = str(exc)
            logger.warning("item %s failed: %s", item.id, exc)
        return record

    records = subject.map_parallel(process, testset.items)
    return _finalize_run(IDENTIFICATION, subject, strategy, seed, testset, records)


def _finalize_run(task, subject, strategy, seed, testset, records) -> RunResult:
    failures = sum(1 for r in records if r.error is not None)
    aggregates, per_type = recompute_aggregates_from_records(task, records)
    invalid = failures > MAX_FAILURE_FRACTION * len(records)
    if invalid:
        logger.warning("run marked invalid: %d/%d items failed", failures, len(records))
    testset_id = testset.fingerprint()
    return RunResult(
        run_id=_run_id(task, subject.chat_model_id, strategy.strategy_id, seed, testset_id),
        task=task,
        model_id=subject.chat_model_id,
        strategy_id=strategy.strategy_id,
        seed=seed,
        testset_id=testset_id,
        records=records,
        aggregates=aggregates,
        per_question_type=per_type,
        failure_count=failures,
        invalid=invalid,
    )


# -- aggregation -----------------------------------------------------------------------


def tally_from_records(records: list[EvalRecord]) -> metrics.ClassificationTally:
    """Confusion counts, positive class = hallucinated. Abstentions count as
    the wrong prediction so denominators stay fixed."""
    tally = metrics.ClassificationTally()
    for record in records:
        if record.error is not None:
            continue
        truth = record.presented_answer_kind == "hallucinated"
        predicted = record.parsed_label if record.parsed_label is not None else (not truth)
        if truth and predicted:
            tally.tp += 1
        elif truth and not predicted:
            tally.fn += 1
        elif not truth and predicted:
            tally.fp += 1
        else:
            tally.tn += 1
    return tally


def recompute_aggregates_from_records(task: str, records: list[EvalRecord]) -> tuple[dict, dict]:
    """Aggregates derived purely from records; also used to verify stored runs."""
    ok_records = [r for r in records if r.error is None]
    per_type_groups: dict[str, list[EvalRecord]] = {}
    for record in ok_records:
        per_type_groups.setdefault(record.question_type, []).append(record)

    if task == TEXT_GENERATION:
        def mean_metrics(group: list[EvalRecord]) -> dict:
            out = {}
            for name in GENERATION_METRICS:
                values = [r.metric_values[name] for r in group if name in r.metric_values]
                out[name] = sum(values) / len(values) if values else None
            out["count"] = len(group)
            return out

        aggregates = mean_metrics(ok_records)
        per_type = {t: mean_metrics(g) for t, g in sorted(per_type_groups.items())}
        return aggregates, per_type

    if task == IDENTIFICATION:
        def tally_metrics(group: list[EvalRecord]) -> dict:
            tally = tally_from_records(group)
            if tally.total == 0:
                return {"count": 0}
            out = metrics.classification_metrics(tally).as_dict()
            out.update({"tp": tally.tp, "fp": tally.fp, "tn": tally.tn, "fn": tally.fn, "count": tally.total})
            out["abstentions"] = sum(1 for r in group if r.flags.get("abstained"))
            return out

        aggregates = tally_metrics(ok_records)
        per_type = {t: tally_metrics(g) for t, g in sorted(per_type_groups.items())}
        return aggregates, per_type

    raise InputError(f"unknown task: {task!r}")


# -- failure extraction -------------------------------------------------------------------


def extract_failures(run: RunResult, testset: Testset, gateway: ModelGateway) -> list[FailureCase]:
    """One case per misclassified identification record, question embedded."""
    if run.task != IDENTIFICATION:
        raise InputError("failure extraction needs an identification run")
    items = {item.id: item for item in testset.items}
    wrong = [r for r in run.records if r.error is None and r.is_correct is False]
    if not wrong:
        return []
    embeddings = gateway.embed([items[r.item_id].question for r in wrong])
    cases = []
    for record, embedding in zip(wrong, embeddings):
        item = items[record.item_id]
        cases.append(
            FailureCase(
                item_id=record.item_id,
                question=item.question,
                presented_answer=record.presented_answer,
                true_label=record.presented_answer_kind == "hallucinated",
                model_label=record.parsed_label,
                embedding=embedding,
            )
        )
    return cases


# -- run comparison -------------------------------------------------------------------------


TABLE_COLUMNS = ("A_F", "A_R", "A_C", "A_S", "Acc.", "Prec.", "Rec.", "F1")

_GEN_COLUMN_KEYS = {"A_F": "answer_faithfulness", "A_R": "answer_relevancy",
                    "A_C": "answer_correctness", "A_S": "answer_similarity"}
_IDENT_COLUMN_KEYS = {"Acc.": "accuracy", "Prec.": "precision", "Rec.": "recall", "F1": "f1"}

_STRATEGY_ORDER = {"original": 0, "icl": 1, "rag": 2, "peft": 3}


@dataclass
class ComparisonRow:
    model_id: str
    strategy_id: str
    values: dict
    best: set = field(default_factory=set)


@dataclass
class ComparisonTable:
    rows: list[ComparisonRow]

    def to_markdown(self) -> str:
        header = "| Model | Strategy | " + " | ".join(TABLE_COLUMNS) + " |"
        divider = "|" + "---|" * (len(TABLE_COLUMNS) + 2)
        lines = [header, divider]
        for row in self.rows:
            cells = []
            for column in TABLE_COLUMNS:
                value = row.values.get(column)
                if value is None:
                    cells.append("-")
                elif column in row.best:
                    cells.append(f"**{value:.3f}**")
                else:
                    cells.append(f"{value:.3f}")
            lines.append(f"| {row.model_id} | {row.strategy_id} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        import csv as _csv
        import io

        buffer = io.StringIO()
        writer = _csv.writer(buffer)
        writer.writerow(["model", "strategy", *TABLE_COLUMNS])
        for row in self.rows:
            writer.writerow(
                [row.model_id, row.strategy_id]
                + [repr(row.values[c]) if row.values.get(c) is not None else "" for c in TABLE_COLUMNS]
            )
        return buffer.getvalue()


def compare_runs(runs: list[RunResult]) -> ComparisonTable:
    """Table-shaped grid: one row per (model, strategy), best-in-block marked."""
    if not runs:
        raise InputError("no runs to compare")
    testset_ids = {run.testset_id for run in runs}
    if len(testset_ids) > 1:
        raise InputError(f"runs cover different testsets: {sorted(testset_ids)}")

    grouped: dict[tuple[str, str], dict] = {}
    for run in runs:
        values = grouped.setdefault((run.model_id, run.strategy_id), {})
        column_keys = _GEN_COLUMN_KEYS if run.task == TEXT_GENERATION else _IDENT_COLUMN_KEYS
        for column, key in column_keys.items():
            if run.aggregates.get(key) is not None:
                values[column] = run.aggregates[key]

    def sort_key(item):
        (model_id, strategy_id), _ = item
        return (model_id, _STRATEGY_ORDER.get(strategy_id, 99), strategy_id)

    rows = [
        ComparisonRow(model_id=model, strategy_id=strategy, values=values)
        for (model, strategy), values in sorted(grouped.items(), key=sort_key)
    ]

    # mark the best value per column within each model block
    by_model: dict[str, list[ComparisonRow]] = {}
    for row in rows:
        by_model.setdefault(row.model_id, []).append(row)
    for block in by_model.values():
        for column in TABLE_COLUMNS:
            present = [r for r in block if r.values.get(column) is not None]
            if not present:
                continue
            best_value = max(r.values[column] for r in present)
            for row in present:
                if row.values[column] == best_value:
                    row.best.add(column)
    return ComparisonTable(rows=rows)


# -- persistence ----------------------------------------------------------------------------


def save_run(run: RunResult, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_jsonl(directory / "records.jsonl", [r.to_dict() for r in run.records])
    atomic_write_json(directory / "summary.json", run.summary())
    return directory


def load_run(directory: str | Path) -> RunResult:
    directory = Path(directory)
    summary = json.loads((directory / "summary.json").read_text(encoding="utf-8"))
    records = [EvalRecord.from_dict(row) for row in read_jsonl(directory / "records.jsonl")]
    return RunResult(
        run_id=summary["run_id"],
        task=summary["task"],
        model_id=summary["model_id"],
        strategy_id=summary["strategy_id"],
        seed=summary["seed"],
        testset_id=summary["testset_id"],
        records=records,
        aggregates=summary["aggregates"],
        per_question_type=summary["per_question_type"],
        failure_count=summary["failure_count"],
        invalid=summary["invalid"],
    )
