"""Provider-agnostic model gateway: chat, embeddings, answer scoring.

Adds what the raw backends lack: bounded retries with exponential backoff,
an embedding cache keyed by (model id, text hash), strict JSON batch
extraction with a re-prompt loop, usage accounting, and an optional
request/response transcript for audits and tests.
"""

from __future__ import annotations

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from thames.errors import ContentError, InputError, ScoringError, TransportError
from thames.gateway.backends import (
    ChatBackend,
    ChatRequest,
    EmbeddingBackend,
    ScoringBackend,
)
from thames.gateway.json_extract import extract_json_array, extract_json_object
from thames.ioutil import canonical_json, sha256_text

logger = logging.getLogger(__name__)

# temperature conventions, recorded in every run manifest
JUDGE_TEMPERATURE = 0.0
GENERATION_TEMPERATURE = 0.7
HALLUCINATION_TEMPERATURE = 1.0


@dataclass
class ScorePair:
    """Entailment + factual-consistency scores, each in [0, 1]."""

    entailment: float
    consistency: float

    def __post_init__(self):
        for name in ("entailment", "consistency"):
            value = getattr(self, name)
            if math.isnan(value):
                raise ScoringError(f"{name} score is NaN")
            clamped = min(1.0, max(0.0, value))
            if clamped != value:
                logger.warning("%s score %r outside [0,1]; clamped", name, value)
            setattr(self, name, clamped)

    @property
    def ensemble(self) -> float:
        return self.entailment + self.consistency


@dataclass
class UsageRecord:
    capability: str
    model_id: str
    input_tokens: int
    output_tokens: int
    wall_time: float
    cache_hit: bool = False
    ok: bool = True


class UsageLedger:
    """Per-call usage records plus running totals (totals == sum of records)."""

    def __init__(self):
        self._lock = threading.Lock()
        self.records: list[UsageRecord] = []
        self.input_tokens = 0
        self.output_tokens = 0
        self.cache_hits = 0

    def add(self, record: UsageRecord) -> None:
        with self._lock:
            self.records.append(record)
            self.input_tokens += record.input_tokens
            self.output_tokens += record.output_tokens
            if record.cache_hit:
                self.cache_hits += 1

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens

    def snapshot(self) -> dict:
        """Deterministic aggregate view (no wall times), safe for manifests."""
        with self._lock:
            return {
                "calls": len(self.records),
                "cache_hits": self.cache_hits,
                "input_tokens": self.input_tokens,
                "output_tokens": self.output_tokens,
            }

    def dump(self) -> list[dict]:
        with self._lock:
            return [
                {
                    "capability": r.capability,
                    "model_id": r.model_id,
                    "input_tokens": r.input_tokens,
                    "output_tokens": r.output_tokens,
                    "wall_time": r.wall_time,
                    "cache_hit": r.cache_hit,
                    "ok": r.ok,
                }
                for r in self.records
            ]


class ModelGateway:
    """Single entry point for the three model capabilities.

    Any capability may be left unconfigured; using it then raises
    ``InputError``. One gateway instance may be shared across threads up to
    ``parallelism`` concurrent requests.
    """

    def __init__(
        self,
        chat_backend: ChatBackend | None = None,
        embedding_backend: EmbeddingBackend | None = None,
        scoring_backend: ScoringBackend | None = None,
        *,
        chat_model_id: str = "chat-default",
        embedding_model_id: str = "embed-default",
        retry_limit: int = 3,
        backoff_base: float = 0.5,
        parallelism: int = 4,
        cache_dir: str | Path | None = None,
        sleep_fn: Callable[[float], None] = time.sleep,
        record_transcript: bool = False,
    ):
        self._chat = chat_backend
        self._embed = embedding_backend
        self._score = scoring_backend
        self.chat_model_id = chat_model_id
        self.embedding_model_id = embedding_model_id
        self.retry_limit = retry_limit
        self.backoff_base = backoff_base
        self.parallelism = max(1, parallelism)
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self._sleep = sleep_fn
        self.ledger = UsageLedger()
        self.transcript: list[tuple[ChatRequest, str]] = [] if record_transcript else []
        self._record_transcript = record_transcript
        self._embed_cache: dict[tuple[str, str], list[float]] = {}
        self._cache_lock = threading.Lock()

    # -- chat ----------------------------------------------------------------

    def request(self, system_prompt: str, user_message: str, *, temperature: float = JUDGE_TEMPERATURE, max_tokens: int = 1024) -> ChatRequest:
        return ChatRequest(
            system_prompt=system_prompt,
            user_messages=[user_message],
            temperature=temperature,
            max_tokens=max_tokens,
            model_id=self.chat_model_id,
        )

    def chat(self, req: ChatRequest) -> str:
        """Chat completion with retries; every attempt lands in the ledger."""
        if self._chat is None:
            raise InputError("no chat backend configured")
        last_exc: Exception | None = None
        for attempt in range(self.retry_limit):
            start = time.monotonic()
            try:
                result = self._chat.complete(req)
            except TransportError as exc:
                self.ledger.add(
                    UsageRecord("chat", req.model_id, 0, 0, time.monotonic() - start, ok=False)
                )
                last_exc = exc
                if attempt + 1 < self.retry_limit:
                    delay = self.backoff_base * (2**attempt)
                    logger.warning("chat attempt %d failed (%s); retrying in %.1fs", attempt + 1, exc, delay)
                    self._sleep(delay)
                continue
            except ContentError:
                self.ledger.add(
                    UsageRecord("chat", req.model_id, 0, 0, time.monotonic() - start, ok=False)
                )
                raise
            self.ledger.add(
                UsageRecord(
                    "chat",
                    req.model_id,
                    result.input_tokens,
                    result.output_tokens,
                    time.monotonic() - start,
                )
            )
            if self._record_transcript:
                self.transcript.append((req, result.text))
            return result.text
        raise TransportError(f"chat failed after {self.retry_limit} attempts: {last_exc}")

    def chat_batch_json(
        self,
        req: ChatRequest,
        expected_count: int,
        required_keys: Sequence[str],
        *,
        reprompts: int = 3,
    ) -> list[dict]:
        """Chat expecting exactly ``expected_count`` objects with ``required_keys``.

        Never returns a partial batch: re-prompts up to ``reprompts`` times,
        then raises ``SchemaError`` with the raw completion attached.
        """
        from thames.errors import SchemaError

        raw = ""
        problem = ""
        for _ in range(1 + reprompts):
            raw = self.chat(req)
            try:
                items = extract_json_array(raw)
            except ValueError as exc:
                problem = str(exc)
                continue
            issue = _validate_batch(items, expected_count, required_keys)
            if issue is None:
                return items
            problem = issue
        raise SchemaError(f"batch JSON invalid after {reprompts} re-prompts: {problem}", raw=raw)

    def chat_json_list(
        self,
        req: ChatRequest,
        required_keys: Sequence[str],
        *,
        min_count: int = 1,
        reprompts: int = 3,
    ) -> list[dict]:
        """Like chat_batch_json but for judge calls whose count is model-chosen."""
        from thames.errors import SchemaError

        raw = ""
        problem = ""
        for _ in range(1 + reprompts):
            raw = self.chat(req)
            try:
                items = extract_json_array(raw)
            except ValueError as exc:
                problem = str(exc)
                continue
            issue = _validate_batch(items, None, required_keys)
            if issue is None and len(items) >= min_count:
                return items
            problem = issue or f"expected at least {min_count} objects, got {len(items)}"
        raise SchemaError(f"JSON list invalid after {reprompts} re-prompts: {problem}", raw=raw)

    def chat_json_object(self, req: ChatRequest, required_keys: Sequence[str], *, reprompts: int = 3) -> dict:
        """Chat expecting one JSON object containing ``required_keys``."""
        from thames.errors import SchemaError

        raw = ""
        problem = ""
        for _ in range(1 + reprompts):
            raw = self.chat(req)
            try:
                obj = extract_json_object(raw)
            except ValueError as exc:
                problem = str(exc)
                continue
            missing = [k for k in required_keys if k not in obj]
            if not missing:
                return obj
            problem = f"missing keys {missing}"
        raise SchemaError(f"JSON object invalid after {reprompts} re-prompts: {problem}", raw=raw)

    # -- embeddings ------------------------------------------------------------

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        """Unit-normalized embeddings, order-preserving, cached by text hash."""
        if self._embed is None:
            raise InputError("no embedding backend configured")
        if not texts:
            raise InputError("embed called with no texts")
        if any(not t for t in texts):
            raise InputError("embed called with an empty text")

        keys = [(self.embedding_model_id, sha256_text(t)) for t in texts]
        out: dict[int, list[float]] = {}
        missing: dict[str, list[int]] = {}
        for i, (text, key) in enumerate(zip(texts, keys)):
            cached = self._cache_get(key)
            if cached is not None:
                out[i] = cached
                self.ledger.add(UsageRecord("embed", self.embedding_model_id, 0, 0, 0.0, cache_hit=True))
            else:
                missing.setdefault(text, []).append(i)

        if missing:
            unique_texts = list(missing.keys())
            start = time.monotonic()
            result = self._retry_embed(unique_texts)
            self.ledger.add(
                UsageRecord(
                    "embed",
                    self.embedding_model_id,
                    result.input_tokens,
                    0,
                    time.monotonic() - start,
                )
            )
            if len(result.vectors) != len(unique_texts):
                raise TransportError("embedding backend returned wrong vector count")
            for text, vector in zip(unique_texts, result.vectors):
                unit = _unit(vector)
                for i in missing[text]:
                    out[i] = unit
                    self._cache_put(keys[i], unit)
        return [out[i] for i in range(len(texts))]

    def embed_one(self, text: str) -> list[float]:
        return self.embed([text])[0]

    def _retry_embed(self, texts: list[str]):
        last_exc: Exception | None = None
        for attempt in range(self.retry_limit):
            try:
                return self._embed.embed(texts, self.embedding_model_id)
            except TransportError as exc:
                last_exc = exc
                if attempt + 1 < self.retry_limit:
                    self._sleep(self.backoff_base * (2**attempt))
        raise TransportError(f"embed failed after {self.retry_limit} attempts: {last_exc}")

    def _cache_get(self, key: tuple[str, str]) -> list[float] | None:
        with self._cache_lock:
            if key in self._embed_cache:
                return self._embed_cache[key]
        if self.cache_dir:
            path = self.cache_dir / f"emb-{key[0]}-{key[1]}.json"
            if path.exists():
                import json as _json

                vector = _json.loads(path.read_text())
                with self._cache_lock:
                    self._embed_cache[key] = vector
                return vector
        return None

    def _cache_put(self, key: tuple[str, str], vector: list[float]) -> None:
        with self._cache_lock:
            self._embed_cache[key] = vector
        if self.cache_dir:
            from thames.ioutil import atomic_write_text

            path = self.cache_dir / f"emb-{key[0]}-{key[1]}.json"
            atomic_write_text(path, canonical_json(vector))

    # -- scoring ---------------------------------------------------------------

    def score_answer(self, premise_context: str, answer: str) -> ScorePair:
        """Entailment + factual consistency of ``answer`` given ``premise_context``."""
        if self._score is None:
            raise InputError("no scoring backend configured")
        last_exc: Exception | None = None
        for attempt in range(self.retry_limit):
            start = time.monotonic()
            try:
                entailment, consistency = self._score.score(premise_context, answer)
            except TransportError as exc:
                self.ledger.add(UsageRecord("score", "scorer", 0, 0, time.monotonic() - start, ok=False))
                last_exc = exc
                if attempt + 1 < self.retry_limit:
                    self._sleep(self.backoff_base * (2**attempt))
                continue
            self.ledger.add(
                UsageRecord(
                    "score",
                    "scorer",
                    _approx_tokens(premise_context) + _approx_tokens(answer),
                    0,
                    time.monotonic() - start,
                )
            )
            return ScorePair(entailment, consistency)
        raise ScoringError(f"scorer failed after {self.retry_limit} attempts: {last_exc}")

    # -- orchestration helpers ---------------------------------------------------

    def map_parallel(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> list[Any]:
        """Apply ``fn`` over items under the gateway's parallelism bound."""
        items = list(items)
        if self.parallelism == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            return list(pool.map(fn, items))


def _validate_batch(items: list, expected_count: int | None, required_keys: Sequence[str]) -> str | None:
    if expected_count is not None and len(items) != expected_count:
        return f"expected {expected_count} objects, got {len(items)}"
    for index, item in enumerate(items):
        if not isinstance(item, dict):
            return f"element {index} is not an object"
        missing = [k for k in required_keys if k not in item]
        if missing:
            return f"element {index} missing keys {missing}"
    return None


def _unit(vector: Sequence[float]) -> list[float]:
    arr = np.asarray(vector, dtype=float)
    norm = float(np.linalg.norm(arr))
    if norm == 0:
        raise InputError("embedding backend returned a zero vector")
    return (arr / norm).tolist()


def _approx_tokens(text: str) -> int:
    return max(1, len(text) // 4)
