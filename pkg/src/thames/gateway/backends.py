"""Backend protocols and OpenAI-compatible HTTP implementations.

Three capabilities are served over HTTP: chat completion, text embedding,
and answer scoring. Scorer models live behind a plain ``POST /score``
contract so they can be hosted anywhere.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Protocol

import requests

from thames.errors import ContentError, ScoringError, TransportError

API_KEY_ENV = "THAMES_API_KEY"


@dataclass
class ChatRequest:
    """One chat completion request."""

    system_prompt: str
    user_messages: list[str]
    temperature: float = 0.0
    max_tokens: int = 1024
    model_id: str = "default"

    def __post_init__(self):
        if not self.user_messages:
            raise ValueError("ChatRequest needs at least one user message")
        if not (self.temperature >= 0 and self.temperature == self.temperature):
            raise ValueError("temperature must be finite and >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")

    def with_extra_user_message(self, message: str) -> "ChatRequest":
        return ChatRequest(
            system_prompt=self.system_prompt,
            user_messages=[*self.user_messages, message],
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            model_id=self.model_id,
        )


@dataclass
class ChatResult:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0


@dataclass
class EmbedResult:
    vectors: list[list[float]]
    input_tokens: int = 0


class ChatBackend(Protocol):
    def complete(self, req: ChatRequest) -> ChatResult: ...


class EmbeddingBackend(Protocol):
    def embed(self, texts: list[str], model_id: str) -> EmbedResult: ...


class ScoringBackend(Protocol):
    def score(self, premise: str, hypothesis: str) -> tuple[float, float]: ...


def _api_key(explicit: str | None) -> str | None:
    return explicit if explicit is not None else os.environ.get(API_KEY_ENV)


def _post(url: str, payload: dict, api_key: str | None, timeout: float) -> dict:
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"POST {url} failed: {exc}") from exc
    if resp.status_code == 429 or resp.status_code >= 500:
        raise TransportError(f"POST {url} -> HTTP {resp.status_code}: {resp.text[:500]}")
    if resp.status_code >= 400:
        raise ContentError(f"POST {url} -> HTTP {resp.status_code}: {resp.text[:500]}")
    try:
        return resp.json()
    except ValueError as exc:
        raise TransportError(f"POST {url} returned non-JSON body") from exc


@dataclass
class OpenAIChatBackend:
    """Chat completions against any OpenAI-compatible REST server."""

    base_url: str
    api_key: str | None = None
    timeout: float = 120.0

    def complete(self, req: ChatRequest) -> ChatResult:
        messages = []
        if req.system_prompt:
            messages.append({"role": "system", "content": req.system_prompt})
        messages.extend({"role": "user", "content": m} for m in req.user_messages)
        body = _post(
            self.base_url.rstrip("/") + "/chat/completions",
            {
                "model": req.model_id,
                "messages": messages,
                "temperature": req.temperature,
                "max_tokens": req.max_tokens,
            },
            _api_key(self.api_key),
            self.timeout,
        )
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat completion response: {body}") from exc
        if text is None:
            raise ContentError(f"backend returned no content: {body}")
        usage = body.get("usage") or {}
        return ChatResult(
            text=text,
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
        )


@dataclass
class OpenAIEmbeddingBackend:
    """Embeddings against any OpenAI-compatible REST server."""

    base_url: str
    api_key: str | None = None
    timeout: float = 120.0

    def embed(self, texts: list[str], model_id: str) -> EmbedResult:
        body = _post(
            self.base_url.rstrip("/") + "/embeddings",
            {"model": model_id, "input": texts},
            _api_key(self.api_key),
            self.timeout,
        )
        try:
            rows = sorted(body["data"], key=lambda d: d["index"])
            vectors = [list(map(float, r["embedding"])) for r in rows]
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed embeddings response: {body}") from exc
        if len(vectors) != len(texts):
            raise TransportError(
                f"embedding count mismatch: sent {len(texts)}, got {len(vectors)}"
            )
        usage = body.get("usage") or {}
        return EmbedResult(vectors=vectors, input_tokens=int(usage.get("prompt_tokens", 0)))


@dataclass
class HttpScoringBackend:
    """Scorer service speaking ``POST /score {premise, hypothesis}``."""

    base_url: str
    api_key: str | None = None
    timeout: float = 120.0
    extra_headers: dict = field(default_factory=dict)

    def score(self, premise: str, hypothesis: str) -> tuple[float, float]:
        body = _post(
            self.base_url.rstrip("/") + "/score",
            {"premise": premise, "hypothesis": hypothesis},
            _api_key(self.api_key),
            self.timeout,
        )
        try:
            return float(body["entailment"]), float(body["consistency"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScoringError(f"malformed scorer response: {body}") from exc
