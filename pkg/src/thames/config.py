"""Run configuration: JSON file -> dataclass, plus gateway construction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from thames.errors import ConfigError
from thames.gateway.backends import (
    HttpScoringBackend,
    OpenAIChatBackend,
    OpenAIEmbeddingBackend,
)
from thames.gateway.core import ModelGateway
from thames.gateway.mocks import (
    ConstantChatBackend,
    MockEmbeddingBackend,
    MockScoringBackend,
    PipelineMockChat,
)
from thames.knowledge_base import ChunkConfig
from thames.testset import ForgeConfig


@dataclass
class BackendConfig:
    kind: str = "mock"  # mock | constant | openai | http (scorer)
    base_url: str | None = None
    model_id: str | None = None
    dim: int = 32  # mock embedding dimension
    text: str = "Yes"  # constant chat reply

    @classmethod
    def from_dict(cls, raw: dict | None) -> "BackendConfig":
        raw = raw or {}
        return cls(
            kind=raw.get("kind", "mock"),
            base_url=raw.get("base_url"),
            model_id=raw.get("model_id"),
            dim=raw.get("dim", 32),
            text=raw.get("text", "Yes"),
        )


@dataclass
class RunConfig:
    corpus_paths: list[str] = field(default_factory=list)
    chunking: ChunkConfig = field(default_factory=ChunkConfig)
    judge_chat: BackendConfig = field(default_factory=BackendConfig)
    subject_chat: BackendConfig = field(default_factory=BackendConfig)
    embedding: BackendConfig = field(default_factory=BackendConfig)
    scorer: BackendConfig = field(default_factory=BackendConfig)
    per_type_target: int = 10
    seed: int | None = None
    strategy: str = "original"
    rag_k: int = 3
    relevancy_n: int = 3
    retry_limit: int = 3
    parallelism: int = 2
    cache_dir: str | None = None
    output_dir: str = "runs"
    kb_dir: str | None = None
    failure_store: str | None = None
    budget_tokens: int | None = None
    forge: ForgeConfig = field(default_factory=ForgeConfig)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        known = {
            "corpus_paths": list(raw.get("corpus_paths", [])),
            "per_type_target": raw.get("per_type_target", 10),
            "seed": raw.get("seed"),
            "strategy": raw.get("strategy", "original"),
            "rag_k": raw.get("rag_k", 3),
            "relevancy_n": raw.get("relevancy_n", 3),
            "retry_limit": raw.get("retry_limit", 3),
            "parallelism": raw.get("parallelism", 2),
            "cache_dir": raw.get("cache_dir"),
            "output_dir": raw.get("output_dir", "runs"),
            "kb_dir": raw.get("kb_dir"),
            "failure_store": raw.get("failure_store"),
            "budget_tokens": raw.get("budget_tokens"),
        }
        return cls(
            chunking=ChunkConfig(**raw.get("chunking", {})),
            judge_chat=BackendConfig.from_dict(raw.get("judge_chat")),
            subject_chat=BackendConfig.from_dict(raw.get("subject_chat")),
            embedding=BackendConfig.from_dict(raw.get("embedding")),
            scorer=BackendConfig.from_dict(raw.get("scorer")),
            forge=ForgeConfig(**raw.get("forge", {})),
            **known,
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def validate(self, *, require_corpus: bool = False) -> None:
        if self.seed is None:
            raise ConfigError("config must set an explicit seed")
        if require_corpus:
            if not self.corpus_paths:
                raise ConfigError("config lists no corpus paths")
            for path in self.corpus_paths:
                if not Path(path).is_file():
                    raise ConfigError(f"corpus file not found: {path}")

    def resolved_kb_dir(self) -> Path:
        return Path(self.kb_dir) if self.kb_dir else Path(self.output_dir) / "kb"

    def resolved_cache_dir(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else Path(self.output_dir) / "cache"

    def content_dict(self) -> dict:
        """Configuration content used to address run directories."""
        return {
            "corpus_paths": self.corpus_paths,
            "chunking": self.chunking.to_dict(),
            "judge_chat": vars(self.judge_chat),
            "subject_chat": vars(self.subject_chat),
            "embedding": vars(self.embedding),
            "scorer": vars(self.scorer),
            "per_type_target": self.per_type_target,
            "seed": self.seed,
            "strategy": self.strategy,
            "rag_k": self.rag_k,
            "relevancy_n": self.relevancy_n,
            "forge": self.forge.to_dict(),
        }


def _chat_backend(cfg: BackendConfig):
    if cfg.kind == "mock":
        return PipelineMockChat()
    if cfg.kind == "constant":
        return ConstantChatBackend(cfg.text)
    if cfg.kind == "openai":
        if not cfg.base_url:
            raise ConfigError("openai chat backend needs base_url")
        return OpenAIChatBackend(base_url=cfg.base_url)
    raise ConfigError(f"unknown chat backend kind: {cfg.kind!r}")


def _embedding_backend(cfg: BackendConfig):
    if cfg.kind == "mock":
        return MockEmbeddingBackend(dim=cfg.dim)
    if cfg.kind == "openai":
        if not cfg.base_url:
            raise ConfigError("openai embedding backend needs base_url")
        return OpenAIEmbeddingBackend(base_url=cfg.base_url)
    raise ConfigError(f"unknown embedding backend kind: {cfg.kind!r}")


def _scoring_backend(cfg: BackendConfig):
    if cfg.kind == "mock":
        return MockScoringBackend()
    if cfg.kind == "http":
        if not cfg.base_url:
            raise ConfigError("http scorer backend needs base_url")
        return HttpScoringBackend(base_url=cfg.base_url)
    raise ConfigError(f"unknown scorer backend kind: {cfg.kind!r}")


def build_judge_gateway(config: RunConfig) -> ModelGateway:
    """Gateway for generation/judging/embedding/scoring duties."""
    return ModelGateway(
        chat_backend=_chat_backend(config.judge_chat),
        embedding_backend=_embedding_backend(config.embedding),
        scoring_backend=_scoring_backend(config.scorer),
        chat_model_id=config.judge_chat.model_id or "judge-mock",
        embedding_model_id=config.embedding.model_id or "embed-mock",
        retry_limit=config.retry_limit,
        parallelism=config.parallelism,
        cache_dir=config.resolved_cache_dir(),
    )


def build_subject_gateway(config: RunConfig) -> ModelGateway:
    """Gateway wrapping the model under evaluation (chat only)."""
    return ModelGateway(
        chat_backend=_chat_backend(config.subject_chat),
        chat_model_id=config.subject_chat.model_id or "subject-mock",
        retry_limit=config.retry_limit,
        parallelism=config.parallelism,
    )
