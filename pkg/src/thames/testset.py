"""Testset generation pipeline.

Seven stages: sample supporting nodes, generate simple question batches,
evolve them into the five harder types, filter (regex prescreen + LLM
validation), generate correct answers, generate hallucinated candidates,
and keep the candidate with the lowest ensemble score as the item's
hallucinated answer. Every stage checkpoints so interrupted runs resume.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from thames import prompts
from thames.errors import (
    BudgetExceeded,
    GenerationError,
    InputError,
    SchemaError,
    ScoringError,
)
from thames.gateway.core import (
    GENERATION_TEMPERATURE,
    HALLUCINATION_TEMPERATURE,
    JUDGE_TEMPERATURE,
    ModelGateway,
    ScorePair,
)
from thames.ioutil import (
    atomic_write_json,
    atomic_write_text,
    read_jsonl,
    sha256_text,
    stable_seed,
    write_jsonl,
)
from thames.knowledge_base import (
    KnowledgeBase,
    kb_fingerprint,
    retrieve_neighbors,
    sample_nodes,
)

logger = logging.getLogger(__name__)

QUESTION_TYPES = ("simple", "reasoning", "multi_context", "situational", "distracting", "double")
EVOLVED_TYPES = QUESTION_TYPES[1:]

# types whose evolution prompt expects additional neighbor context
_NEEDS_EXTRA_CONTEXT = {"multi_context", "situational", "distracting", "double"}

_EVOLUTION_TEMPLATES = {
    "reasoning": "evolve_reasoning",
    "multi_context": "evolve_multi_context",
    "situational": "evolve_situational",
    "distracting": "evolve_distracting",
    "double": "evolve_double",
}

BROAD_FILTER_ALTERNATIVES = ("this", "was", "day", "the")

_TEMPLATE_ASSETS = [
    "simple_generation",
    "evolve_reasoning",
    "evolve_multi_context",
    "evolve_situational",
    "evolve_distracting",
    "evolve_double",
    "evolution_criteria",
    "question_filtering",
    "correct_answer",
    "hallucinated_answer",
    "filter_pattern",
]


@dataclass
class ForgeConfig:
    """Tunables for the generation pipeline."""

    language: str = "English"
    batch_size: int = 10
    nodes_per_batch: int = 2
    neighbors_per_draft: int = 1
    candidates_per_question: int = 5
    overgen_factor: float = 1.5
    max_rounds: int = 3
    drop_broad_filter_alternatives: bool = False
    max_tokens: int = 2048
    judge_temperature: float = JUDGE_TEMPERATURE
    generation_temperature: float = GENERATION_TEMPERATURE
    hallucination_temperature: float = HALLUCINATION_TEMPERATURE

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class DraftQuestion:
    question: str
    question_type: str
    source_node_ids: list[str]
    extra_node_ids: list[str] = field(default_factory=list)
    valid: bool | None = None
    reject_reason: str | None = None

    def __post_init__(self):
        if not self.question.strip():
            raise InputError("draft question is empty")
        if not self.source_node_ids:
            raise InputError("draft question has no source nodes")
        if self.question_type not in QUESTION_TYPES:
            raise InputError(f"unknown question type: {self.question_type!r}")
        if self.valid is False and not self.reject_reason:
            raise InputError("rejected draft needs a reject_reason")

    def context_node_ids(self) -> list[str]:
        seen: list[str] = []
        for node_id in [*self.source_node_ids, *self.extra_node_ids]:
            if node_id not in seen:
                seen.append(node_id)
        return seen


@dataclass
class QAPair:
    draft: DraftQuestion
    answer: str


@dataclass
class CandidateScore:
    text: str
    pair: ScorePair
    ensemble: float

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "entailment": self.pair.entailment,
            "consistency": self.pair.consistency,
            "ensemble": self.ensemble,
        }


@dataclass
class TestItem:
    id: str
    question: str
    question_type: str
    answer: str
    hallucinated_answer: str
    source_node_ids: list[str]
    candidate_scores: list[CandidateScore]

    def __post_init__(self):
        if self.question_type not in QUESTION_TYPES:
            raise InputError(f"unknown question type: {self.question_type!r}")
        if not (self.id and self.question.strip() and self.answer.strip()):
            raise InputError(f"test item {self.id!r} has empty fields")
        if self.answer == self.hallucinated_answer:
            raise InputError(f"item {self.id}: hallucinated answer equals the correct answer")
        if self.candidate_scores:
            best = min(range(len(self.candidate_scores)), key=lambda i: self.candidate_scores[i].ensemble)
            if self.candidate_scores[best].text != self.hallucinated_answer:
                raise InputError(f"item {self.id}: hallucinated answer is not the ensemble argmin")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "question_type": self.question_type,
            "answer": self.answer,
            "hallucinated_answer": self.hallucinated_answer,
            "source_node_ids": self.source_node_ids,
            "candidate_scores": [c.to_dict() for c in self.candidate_scores],
        }

    @classmethod
    def from_dict(cls, row: dict) -> "TestItem":
        return cls(
            id=row["id"],
            question=row["question"],
            question_type=row["question_type"],
            answer=row["answer"],
            hallucinated_answer=row["hallucinated_answer"],
            source_node_ids=list(row["source_node_ids"]),
            candidate_scores=[
                CandidateScore(
                    text=c["text"],
                    pair=ScorePair(c["entailment"], c["consistency"]),
                    ensemble=c["ensemble"],
                )
                for c in row["candidate_scores"]
            ],
        )


@dataclass
class Testset:
    items: list[TestItem]
    per_type_target: int
    generation_manifest: dict

    def __post_init__(self):
        ids = [item.id for item in self.items]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate test item ids")

    def by_type(self) -> dict[str, list[TestItem]]:
        grouped: dict[str, list[TestItem]] = {t: [] for t in QUESTION_TYPES}
        for item in self.items:
            grouped[item.question_type].append(item)
        return grouped

    def fingerprint(self) -> str:
        return sha256_text("\n".join(sorted(item.id for item in self.items)))


# -- filtering ---------------------------------------------------------------


def filter_pattern(drop_broad_alternatives: bool = False) -> str:
    """The verbatim prescreen pattern, optionally minus the broad alternatives."""
    pattern = prompts.FILTER_PATTERN
    if not drop_broad_alternatives:
        return pattern
    prefix, _, rest = pattern.partition("(?i).*?(")
    inner, _, suffix = rest.rpartition(").*?")
    kept = [alt for alt in inner.split("|") if alt not in BROAD_FILTER_ALTERNATIVES]
    return f"{prefix}(?i).*?({'|'.join(kept)}).*?{suffix}"


def regex_prefilter(
    drafts: list[DraftQuestion], *, drop_broad_alternatives: bool = False
) -> tuple[list[DraftQuestion], list[DraftQuestion]]:
    """Partition drafts into (flagged, clean) by the keyword pattern."""
    compiled = re.compile(filter_pattern(drop_broad_alternatives))
    flagged, clean = [], []
    for draft in drafts:
        (flagged if compiled.search(draft.question) else clean).append(draft)
    return flagged, clean


def llm_validate(
    flagged: list[DraftQuestion],
    batch_size: int,
    gateway: ModelGateway,
    temperature: float = JUDGE_TEMPERATURE,
) -> list[DraftQuestion]:
    """Judge flagged drafts for self-containment; sets valid/reject_reason."""
    system = prompts.render("question_filtering")
    out: list[DraftQuestion] = []
    for start in range(0, len(flagged), batch_size):
        group = flagged[start : start + batch_size]
        payload = json.dumps(
            [{"question": d.question, "question_type": d.question_type} for d in group]
        )
        rows = gateway.chat_batch_json(
            gateway.request(system, payload, temperature=temperature, max_tokens=2048),
            expected_count=len(group),
            required_keys=["question", "valid", "reason"],
        )
        for draft, row in zip(group, rows):
            verdict = _coerce_bool(row["valid"])
            draft.valid = verdict
            draft.reject_reason = None if verdict else str(row["reason"])
            out.append(draft)
    return out


def _coerce_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    return str(value).strip().lower() == "true"


# -- generation stages ----------------------------------------------------------


def generate_baseline(
    kb: KnowledgeBase,
    batch_size: int,
    total: int,
    seed: int,
    gateway: ModelGateway,
    cfg: ForgeConfig | None = None,
) -> list[DraftQuestion]:
    """Generate ``total`` simple drafts in batches over weighted-sampled nodes."""
    cfg = cfg or ForgeConfig()
    if len(kb) == 0:
        raise InputError("knowledge base is empty")
    if batch_size < 1 or total < 1:
        raise InputError("batch_size and total must be >= 1")

    system = prompts.render("simple_generation", language=cfg.language, num_questions=batch_size)
    drafts: list[DraftQuestion] = []
    consecutive_failures = 0
    batch_index = 0
    while len(drafts) < total:
        nodes_wanted = min(cfg.nodes_per_batch, len(kb))
        node_ids = sample_nodes(kb, nodes_wanted, stable_seed(seed, "baseline", batch_index))
        context = kb.context_text(node_ids)
        try:
            rows = gateway.chat_batch_json(
                gateway.request(system, context, temperature=cfg.generation_temperature, max_tokens=cfg.max_tokens),
                expected_count=batch_size,
                required_keys=["question", "question_type"],
            )
        except SchemaError as exc:
            consecutive_failures += 1
            logger.warning("baseline batch %d failed: %s", batch_index, exc)
            if consecutive_failures >= 3:
                raise GenerationError("3 consecutive baseline batches failed") from exc
            batch_index += 1
            continue
        consecutive_failures = 0
        for row in rows:
            question = str(row["question"]).strip()
            if not question:
                raise SchemaError("model returned an empty question", raw=json.dumps(rows))
            drafts.append(
                DraftQuestion(question=question, question_type="simple", source_node_ids=list(node_ids))
            )
        batch_index += 1
    return drafts[:total]


def evolve(
    drafts: list[DraftQuestion],
    target_type: str,
    kb: KnowledgeBase,
    seed: int,
    gateway: ModelGateway,
    cfg: ForgeConfig | None = None,
) -> list[DraftQuestion]:
    """Rewrite simple drafts into ``target_type``; count and order preserved."""
    cfg = cfg or ForgeConfig()
    if target_type not in EVOLVED_TYPES:
        raise InputError(f"cannot evolve into {target_type!r}")
    if any(d.question_type != "simple" for d in drafts):
        raise InputError("evolution input must be simple drafts")
    if not drafts:
        return []

    system = (
        prompts.render(_EVOLUTION_TEMPLATES[target_type], language=cfg.language)
        + "\n"
        + prompts.render("evolution_criteria")
    )
    needs_extra = target_type in _NEEDS_EXTRA_CONTEXT

    out: list[DraftQuestion] = []
    for start in range(0, len(drafts), cfg.batch_size):
        group = drafts[start : start + cfg.batch_size]
        extra_ids_per_draft: list[list[str]] = []
        for draft in group:
            if needs_extra and len(kb) > 1:
                k = min(cfg.neighbors_per_draft, len(kb) - 1)
                extra_ids_per_draft.append(retrieve_neighbors(kb, draft.source_node_ids[0], k))
            else:
                extra_ids_per_draft.append([])

        primary_ids = _ordered_unique(i for d in group for i in d.source_node_ids)
        extra_ids = _ordered_unique(i for ids in extra_ids_per_draft for i in ids)
        payload = json.dumps([{"question": d.question, "question_type": d.question_type} for d in group])
        user = payload + "\n\n" + kb.context_text(primary_ids)
        if extra_ids:
            user += "\n\n" + kb.context_text(extra_ids)

        rows = gateway.chat_batch_json(
            gateway.request(system, user, temperature=cfg.generation_temperature, max_tokens=cfg.max_tokens),
            expected_count=len(group),
            required_keys=["question", "question_type"],
        )
        for draft, row, extra in zip(group, rows, extra_ids_per_draft):
            question = str(row["question"]).strip()
            if not question:
                raise SchemaError("model returned an empty evolved question", raw=json.dumps(rows))
            out.append(
                DraftQuestion(
                    question=question,
                    question_type=target_type,
                    source_node_ids=list(draft.source_node_ids),
                    extra_node_ids=extra,
                )
            )
    return out


def generate_correct_answers(
    drafts: list[DraftQuestion],
    kb: KnowledgeBase,
    batch_size: int,
    gateway: ModelGateway,
    cfg: ForgeConfig | None = None,
    drops: list[dict] | None = None,
) -> list[QAPair]:
    """Answer each draft from its recorded contexts; types must survive verbatim."""
    cfg = cfg or ForgeConfig()
    system = prompts.render("correct_answer", language=cfg.language, num_questions=batch_size)
    pairs: list[QAPair] = []
    for start in range(0, len(drafts), batch_size):
        group = drafts[start : start + batch_size]
        context_ids = _ordered_unique(i for d in group for i in d.context_node_ids())
        payload = json.dumps([{"question": d.question, "question_type": d.question_type} for d in group])
        user = payload + "\n\n" + kb.context_text(context_ids)
        request = gateway.request(
            system, user, temperature=cfg.generation_temperature, max_tokens=cfg.max_tokens
        )

        rows = None
        for attempt in range(2):
            candidate_rows = gateway.chat_batch_json(
                request, expected_count=len(group), required_keys=["question", "answer", "question_type"]
            )
            mutated = [
                i for i, (draft, row) in enumerate(zip(group, candidate_rows))
                if str(row["question_type"]) != draft.question_type
            ]
            if mutated:
                if attempt == 0:
                    logger.warning("answer batch mutated question_type at %s; retrying", mutated)
                    continue
                raise SchemaError(
                    f"model changed question_type at positions {mutated}",
                    raw=json.dumps(candidate_rows),
                )
            empty = [i for i, row in enumerate(candidate_rows) if not str(row["answer"]).strip()]
            if empty and attempt == 0:
                logger.warning("answer batch returned empty answers at %s; retrying", empty)
                continue
            rows = candidate_rows
            break

        for draft, row in zip(group, rows):
            answer = str(row["answer"]).strip()
            if not answer:
                if drops is not None:
                    drops.append({"stage": "answers", "question": draft.question, "reason": "empty answer after retry"})
                logger.warning("dropping draft with empty answer: %s", draft.question)
                continue
            pairs.append(QAPair(draft=draft, answer=answer))
    return pairs


def generate_hallucinated_candidates(qa: QAPair, k: int, gateway: ModelGateway, cfg: ForgeConfig | None = None) -> list[str]:
    """k plausible-but-wrong candidates; deduplicated, never the correct answer."""
    cfg = cfg or ForgeConfig()
    if k < 2:
        raise InputError("need at least 2 hallucinated candidates")
    system = prompts.render("hallucinated_answer", num_hallucinated_answers=k)
    user = f"Question: {qa.draft.question}\nOriginal answer: {qa.answer}"
    request = gateway.request(system, user, temperature=cfg.hallucination_temperature, max_tokens=cfg.max_tokens)

    def fetch() -> list[str]:
        rows = gateway.chat_batch_json(request, expected_count=k, required_keys=["hallucinated_answer"])
        return [str(r["hallucinated_answer"]) for r in rows]

    candidates, discarded_correct = _clean_candidates(fetch(), qa.answer)
    if discarded_correct or len(candidates) < k:
        merged, _ = _clean_candidates(candidates + fetch(), qa.answer)
        candidates = merged
    if len(candidates) < 2:
        raise GenerationError(f"fewer than 2 distinct hallucinated candidates for: {qa.draft.question}")
    return candidates


def _clean_candidates(raw: list[str], correct_answer: str) -> tuple[list[str], bool]:
    seen: set[str] = set()
    answer_key = correct_answer.strip().lower()
    kept: list[str] = []
    discarded_correct = False
    for text in raw:
        key = text.strip().lower()
        if not key:
            continue
        if key == answer_key:
            discarded_correct = True
            continue
        if key in seen:
            continue
        seen.add(key)
        kept.append(text)
    return kept, discarded_correct


def select_hallucination(
    candidates: list[str], premise_context: str, gateway: ModelGateway
) -> tuple[str, list[CandidateScore]]:
    """Score all candidates; pick the ensemble argmin (ties: lowest index)."""
    if len(candidates) < 2:
        raise InputError("need at least 2 candidates to select from")
    scores: list[CandidateScore] = []
    for text in candidates:
        pair = gateway.score_answer(premise_context, text)
        scores.append(CandidateScore(text=text, pair=pair, ensemble=pair.ensemble))
    best = min(range(len(scores)), key=lambda i: scores[i].ensemble)
    return scores[best].text, scores


# -- orchestration ----------------------------------------------------------------


class _StageStore:
    """Write-once JSON checkpoints keyed by stage name, atomic via temp+rename."""

    def __init__(self, directory: str | Path | None):
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    def run(self, key: str, kb: KnowledgeBase, fn: Callable[[], object]) -> object:
        path = self.directory / f"stage-{key}.json" if self.directory else None
        if path and path.is_file():
            snapshot = json.loads(path.read_text(encoding="utf-8"))
            kb.set_counts(snapshot["kb_counts"])
            logger.info("resumed stage %s from checkpoint", key)
            return snapshot["payload"]
        payload = fn()
        if path:
            atomic_write_json(path, {"payload": payload, "kb_counts": kb.counts()}, indent=None)
        return payload


def build_testset(
    kb: KnowledgeBase,
    per_type_target: int,
    seed: int,
    gateway: ModelGateway,
    cfg: ForgeConfig | None = None,
    *,
    checkpoint_dir: str | Path | None = None,
    budget_tokens: int | None = None,
) -> Testset:
    """Run the full pipeline until each question type reaches its target.

    Over-generates by ``cfg.overgen_factor`` per round, up to
    ``cfg.max_rounds`` rounds; a shortfall after that is reported in the
    manifest rather than raised.
    """
    cfg = cfg or ForgeConfig()
    if len(kb) == 0:
        raise InputError("knowledge base is empty")
    if per_type_target < 1:
        raise InputError("per_type_target must be >= 1")

    stages = _StageStore(checkpoint_dir)
    drops: list[dict] = []
    rejected: list[dict] = []
    items: list[TestItem] = []
    seen_ids: set[str] = set()

    def check_budget(stage: str) -> None:
        if budget_tokens is not None and gateway.ledger.total_tokens > budget_tokens:
            raise BudgetExceeded(
                f"token budget {budget_tokens} exhausted before stage {stage!r} "
                f"(used {gateway.ledger.total_tokens})"
            )

    have = {t: 0 for t in QUESTION_TYPES}
    for round_index in range(cfg.max_rounds):
        needed = {t: per_type_target - have[t] for t in QUESTION_TYPES}
        if all(n <= 0 for n in needed.values()):
            break

        quotas = {t: math.ceil(n * cfg.overgen_factor) for t, n in needed.items() if n > 0}
        total_baseline = sum(quotas.values())

        check_budget("baseline")
        baseline_rows = stages.run(
            f"{round_index}-baseline",
            kb,
            lambda: [
                _draft_to_dict(d)
                for d in generate_baseline(
                    kb, cfg.batch_size, total_baseline,
                    stable_seed(seed, "round", round_index), gateway, cfg,
                )
            ],
        )
        baseline = [_draft_from_dict(r) for r in baseline_rows]

        check_budget("evolve")

        def run_evolution() -> list[dict]:
            evolved: list[DraftQuestion] = []
            cursor = 0
            for qtype in QUESTION_TYPES:
                quota = quotas.get(qtype, 0)
                slice_ = baseline[cursor : cursor + quota]
                cursor += quota
                if not slice_:
                    continue
                if qtype == "simple":
                    evolved.extend(slice_)
                else:
                    evolved.extend(
                        evolve(slice_, qtype, kb, stable_seed(seed, "evolve", round_index, qtype), gateway, cfg)
                    )
            return [_draft_to_dict(d) for d in evolved]

        evolved = [_draft_from_dict(r) for r in stages.run(f"{round_index}-evolved", kb, run_evolution)]

        check_budget("filter")

        def run_filter() -> dict:
            flagged, clean = regex_prefilter(
                evolved, drop_broad_alternatives=cfg.drop_broad_filter_alternatives
            )
            validated = llm_validate(flagged, cfg.batch_size, gateway, cfg.judge_temperature)
            kept = clean + [d for d in validated if d.valid]
            rejects = [
                {"question": d.question, "question_type": d.question_type, "reason": d.reject_reason}
                for d in validated
                if d.valid is False
            ]
            # keep original draft order so downstream batches are stable
            order = {id(d): i for i, d in enumerate(evolved)}
            kept.sort(key=lambda d: order[id(d)])
            return {"kept": [_draft_to_dict(d) for d in kept], "rejected": rejects}

        filtered = stages.run(f"{round_index}-filtered", kb, run_filter)
        kept_drafts = [_draft_from_dict(r) for r in filtered["kept"]]
        rejected.extend(filtered["rejected"])

        check_budget("answers")
        answered_rows = stages.run(
            f"{round_index}-answers",
            kb,
            lambda: [
                {"draft": _draft_to_dict(p.draft), "answer": p.answer}
                for p in generate_correct_answers(kept_drafts, kb, cfg.batch_size, gateway, cfg, drops)
            ],
        )
        qa_pairs = [QAPair(draft=_draft_from_dict(r["draft"]), answer=r["answer"]) for r in answered_rows]

        check_budget("hallucinations")

        def run_items() -> list[dict]:
            built: list[dict] = []
            counts = dict(have)
            for qa in qa_pairs:
                qtype = qa.draft.question_type
                if counts[qtype] >= per_type_target:
                    continue
                premise = kb.context_text(qa.draft.context_node_ids())
                try:
                    candidates = generate_hallucinated_candidates(qa, cfg.candidates_per_question, gateway, cfg)
                    chosen, scores = select_hallucination(candidates, premise, gateway)
                except (GenerationError, ScoringError, SchemaError) as exc:
                    drops.append({"stage": "items", "question": qa.draft.question, "reason": str(exc)})
                    logger.warning("dropping item (%s): %s", qa.draft.question, exc)
                    continue
                item = TestItem(
                    id=f"item-{sha256_text(qa.draft.question + '|' + qtype)[:12]}",
                    question=qa.draft.question,
                    question_type=qtype,
                    answer=qa.answer,
                    hallucinated_answer=chosen,
                    source_node_ids=qa.draft.context_node_ids(),
                    candidate_scores=scores,
                )
                if item.id in seen_ids or any(b["id"] == item.id for b in built):
                    drops.append({"stage": "items", "question": qa.draft.question, "reason": "duplicate item id"})
                    continue
                built.append(item.to_dict())
                counts[qtype] += 1
            return built

        for row in stages.run(f"{round_index}-items", kb, run_items):
            item = TestItem.from_dict(row)
            items.append(item)
            seen_ids.add(item.id)
            have[item.question_type] += 1

    shortfall = {t: per_type_target - have[t] for t in QUESTION_TYPES if have[t] < per_type_target}
    if shortfall:
        logger.warning("generation shortfall after %d rounds: %s", cfg.max_rounds, shortfall)

    manifest = {
        "per_type_target": per_type_target,
        "seed": seed,
        "config": cfg.to_dict(),
        "prompt_template_hashes": prompts.manifest_hashes(_TEMPLATE_ASSETS),
        "temperatures": {
            "judge": cfg.judge_temperature,
            "generation": cfg.generation_temperature,
            "hallucination": cfg.hallucination_temperature,
        },
        "kb_fingerprint": kb_fingerprint(kb),
        "ledger": gateway.ledger.snapshot(),
        "counts_by_type": dict(have),
        "shortfall": shortfall,
        "drops": drops,
        "rejected": rejected,
    }
    return Testset(items=items, per_type_target=per_type_target, generation_manifest=manifest)


def _draft_to_dict(draft: DraftQuestion) -> dict:
    return asdict(draft)


def _draft_from_dict(row: dict) -> DraftQuestion:
    return DraftQuestion(
        question=row["question"],
        question_type=row["question_type"],
        source_node_ids=list(row["source_node_ids"]),
        extra_node_ids=list(row.get("extra_node_ids", [])),
        valid=row.get("valid"),
        reject_reason=row.get("reject_reason"),
    )


def _ordered_unique(ids) -> list[str]:
    seen: list[str] = []
    for item in ids:
        if item not in seen:
            seen.append(item)
    return seen


# -- persistence -------------------------------------------------------------------


def save_testset(testset: Testset, directory: str | Path) -> Path:
    """items.jsonl + manifest.json + reject-review file in one directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_jsonl(directory / "items.jsonl", [item.to_dict() for item in testset.items])
    atomic_write_json(directory / "manifest.json", testset.generation_manifest)
    rejected = testset.generation_manifest.get("rejected", [])
    atomic_write_text(
        directory / "rejected_questions.txt",
        "".join(f"[{r['question_type']}] {r['question']} :: {r['reason']}\n" for r in rejected),
    )
    return directory


def load_testset(directory: str | Path) -> Testset:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    items = [TestItem.from_dict(row) for row in read_jsonl(directory / "items.jsonl")]
    return Testset(items=items, per_type_target=manifest.get("per_type_target", 0), generation_manifest=manifest)
