"""Corpus ingestion, chunking, embedding, and coverage-weighted sampling.

A knowledge base is an ordered collection of text nodes. Each node tracks
how often it has been retrieved (by the sampler or as a semantic
neighbor); the sampler draws nodes with probability inversely
proportional to (1 + retrieval count), so coverage evens out over a run.
"""

from __future__ import annotations

import csv
import logging
import math
import random
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from thames.errors import CorpusError, InputError
from thames.gateway.core import ModelGateway
from thames.ioutil import (
    atomic_write_json,
    canonical_json,
    read_jsonl,
    sha256_file,
    write_jsonl,
)

logger = logging.getLogger(__name__)

_PARAGRAPH_SPLIT = re.compile(r"\n\s*\n")


@dataclass
class ChunkConfig:
    """Chunking parameters: paragraph packing first, windowing for oversize."""

    max_chunk_chars: int = 2000
    overlap_chars: int = 200
    split_strategy: str = "paragraph_then_window"

    def __post_init__(self):
        if self.max_chunk_chars <= 0:
            raise InputError("max_chunk_chars must be positive")
        if self.overlap_chars < 0 or self.overlap_chars >= self.max_chunk_chars:
            raise InputError("overlap_chars must be in [0, max_chunk_chars)")
        if self.split_strategy != "paragraph_then_window":
            raise InputError(f"unknown split strategy: {self.split_strategy}")

    def to_dict(self) -> dict:
        return {
            "max_chunk_chars": self.max_chunk_chars,
            "overlap_chars": self.overlap_chars,
            "split_strategy": self.split_strategy,
        }


@dataclass
class KnowledgeNode:
    node_id: str
    text: str
    source_doc: str
    embedding: list[float] | None = None
    retrieval_count: int = 0

    def __post_init__(self):
        if not self.text.strip():
            raise InputError(f"node {self.node_id} has empty text")
        if self.retrieval_count < 0:
            raise InputError(f"node {self.node_id} has negative retrieval count")


@dataclass
class SamplingDistribution:
    """Weights w_i = 1/(c_i + 1) and their normalized probabilities."""

    weights: list[float]
    probabilities: list[float]

    @classmethod
    def from_counts(cls, counts: list[int]) -> "SamplingDistribution":
        if not counts:
            raise InputError("cannot build a distribution over zero nodes")
        weights = [1.0 / (c + 1) for c in counts]
        total = sum(weights)
        return cls(weights=weights, probabilities=[w / total for w in weights])


class KnowledgeBase:
    """Ordered node collection with a serialized retrieval-count writer."""

    def __init__(self, nodes: list[KnowledgeNode], chunking: ChunkConfig,
                 corpus_manifest: list[dict] | None = None,
                 embedding_dim: int | None = None,
                 embedding_model_id: str | None = None):
        ids = [n.node_id for n in nodes]
        if len(set(ids)) != len(ids):
            raise InputError("duplicate node ids in knowledge base")
        self.nodes = list(nodes)
        self._by_id = {n.node_id: n for n in nodes}
        self.chunking = chunking
        self.corpus_manifest = corpus_manifest or []
        self.embedding_dim = embedding_dim
        self.embedding_model_id = embedding_model_id
        self._count_lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: str) -> KnowledgeNode:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise InputError(f"unknown node id: {node_id}") from None

    def counts(self) -> list[int]:
        with self._count_lock:
            return [n.retrieval_count for n in self.nodes]

    def bump_counts(self, node_ids: list[str]) -> None:
        with self._count_lock:
            for node_id in node_ids:
                self.node(node_id).retrieval_count += 1

    def set_counts(self, counts: list[int]) -> None:
        """Restore a counts snapshot (checkpoint resume)."""
        if len(counts) != len(self.nodes):
            raise InputError("counts snapshot length mismatch")
        with self._count_lock:
            for node, count in zip(self.nodes, counts):
                node.retrieval_count = count

    def context_text(self, node_ids: list[str]) -> str:
        return "\n------\n".join(self.node(i).text for i in node_ids)


# -- chunking -----------------------------------------------------------------


def split_paragraphs(text: str) -> list[str]:
    return [p.strip() for p in _PARAGRAPH_SPLIT.split(text) if p.strip()]


def _window(text: str, cfg: ChunkConfig) -> list[str]:
    step = cfg.max_chunk_chars - cfg.overlap_chars
    pieces = []
    start = 0
    while start < len(text):
        pieces.append(text[start : start + cfg.max_chunk_chars])
        start += step
    return pieces


def chunk_segment(segment: str, cfg: ChunkConfig) -> list[str]:
    """Pack stripped paragraphs greedily; window any paragraph over the limit.

    With overlap 0 the chunks concatenate back to the segment text modulo
    whitespace (the declared normalization: whitespace runs collapse).
    """
    pieces: list[str] = []
    for paragraph in split_paragraphs(segment):
        if len(paragraph) <= cfg.max_chunk_chars:
            pieces.append(paragraph)
        else:
            pieces.extend(_window(paragraph, cfg))

    chunks: list[str] = []
    current = ""
    for piece in pieces:
        candidate = f"{current}\n\n{piece}" if current else piece
        if current and len(candidate) > cfg.max_chunk_chars:
            chunks.append(current)
            current = piece
        else:
            current = candidate
    if current:
        chunks.append(current)
    return chunks


# -- extraction ---------------------------------------------------------------

# Extractors return a list of hard segments; segments are never merged into
# one chunk (a CSV row stays its own node unless it overflows the limit).
Extractor = Callable[[Path], list[str]]

_EXTRACTORS: dict[str, Extractor] = {}


def register_extractor(suffix: str, extractor: Extractor) -> None:
    """Plug in extraction for an extra format, e.g. '.pdf' -> text hook."""
    _EXTRACTORS[suffix.lower()] = extractor


def _extract_plain(path: Path) -> list[str]:
    return [path.read_text(encoding="utf-8")]


def _extract_csv(path: Path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [", ".join(cell.strip() for cell in row if cell.strip())
                for row in csv.reader(fh)]


register_extractor(".txt", _extract_plain)
register_extractor(".md", _extract_plain)
register_extractor(".csv", _extract_csv)


def extract_segments(path: Path) -> list[str]:
    extractor = _EXTRACTORS.get(path.suffix.lower())
    if extractor is None:
        raise CorpusError(
            f"no extractor for {path.suffix!r} ({path}); PDF and other formats "
            f"need a registered text-extraction hook"
        )
    try:
        return extractor(path)
    except (OSError, UnicodeDecodeError) as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc


# -- operations -----------------------------------------------------------------


def ingest_corpus(paths: list[str | Path], cfg: ChunkConfig | None = None) -> KnowledgeBase:
    """Chunk every file into nodes with retrieval_count 0 and a checksum manifest."""
    cfg = cfg or ChunkConfig()
    if not paths:
        raise CorpusError("no corpus files given")

    nodes: list[KnowledgeNode] = []
    manifest: list[dict] = []
    for file_index, raw_path in enumerate(paths):
        path = Path(raw_path)
        if not path.is_file():
            raise CorpusError(f"corpus file not found: {path}")
        segments = extract_segments(path)
        chunk_index = 0
        for segment in segments:
            for chunk in chunk_segment(segment, cfg):
                node_id = f"{path.name}:{file_index:02d}:{chunk_index:04d}"
                nodes.append(KnowledgeNode(node_id=node_id, text=chunk, source_doc=str(path)))
                chunk_index += 1
        manifest.append({"file": str(path), "size": path.stat().st_size, "sha256": sha256_file(path)})

    if not nodes:
        raise CorpusError("corpus contained no extractable text")
    logger.info("ingested %d nodes from %d files", len(nodes), len(paths))
    return KnowledgeBase(nodes=nodes, chunking=cfg, corpus_manifest=manifest)


def embed_all(
    kb: KnowledgeBase,
    gateway: ModelGateway,
    *,
    batch_size: int = 64,
    checkpoint_dir: str | Path | None = None,
) -> KnowledgeBase:
    """Embed every node through the gateway (cached by text hash, so re-runs are free).

    On transport failure the partially embedded base is checkpointed to
    ``checkpoint_dir`` before the error propagates.
    """
    batches = [kb.nodes[i : i + batch_size] for i in range(0, len(kb.nodes), batch_size)]
    try:
        results = gateway.map_parallel(
            lambda batch: gateway.embed([n.text for n in batch]), batches
        )
    except Exception:
        if checkpoint_dir is not None:
            save_kb(kb, checkpoint_dir)
            logger.warning("embedding aborted; partial progress checkpointed to %s", checkpoint_dir)
        raise

    dim: int | None = None
    for batch, vectors in zip(batches, results):
        for node, vector in zip(batch, vectors):
            if dim is None:
                dim = len(vector)
            elif len(vector) != dim:
                raise InputError(
                    f"embedding dimension mismatch: expected {dim}, got {len(vector)} "
                    f"for node {node.node_id}"
                )
            node.embedding = vector
    kb.embedding_dim = dim
    kb.embedding_model_id = gateway.embedding_model_id
    return kb


def sample_nodes(kb: KnowledgeBase, m: int, rng_seed: int) -> list[str]:
    """Draw m distinct node ids, weighted by 1/(count+1); bumps their counts."""
    if len(kb) == 0:
        raise InputError("knowledge base is empty")
    if m < 1:
        raise InputError("m must be >= 1")
    if m > len(kb):
        raise InputError(f"cannot sample {m} nodes from {len(kb)}")

    rng = random.Random(rng_seed)
    ids = [n.node_id for n in kb.nodes]
    dist = SamplingDistribution.from_counts(kb.counts())
    weights = list(dist.weights)

    chosen: list[str] = []
    for _ in range(m):
        total = sum(weights)
        target = rng.random() * total
        cumulative = 0.0
        pick = len(weights) - 1
        for index, weight in enumerate(weights):
            cumulative += weight
            if target < cumulative:
                pick = index
                break
        chosen.append(ids.pop(pick))
        weights.pop(pick)

    kb.bump_counts(chosen)
    return chosen


def retrieve_neighbors(kb: KnowledgeBase, node_id: str, k: int) -> list[str]:
    """Top-k cosine neighbors of a node, ties broken by node id; bumps counts."""
    query = kb.node(node_id)
    if query.embedding is None:
        raise InputError(f"node {node_id} is not embedded")
    if k < 1 or k >= len(kb):
        raise InputError(f"k must be in [1, node_count); got {k} for {len(kb)} nodes")

    query_vec = np.asarray(query.embedding)
    scored: list[tuple[float, str]] = []
    for node in kb.nodes:
        if node.node_id == node_id:
            continue
        if node.embedding is None:
            raise InputError(f"node {node.node_id} is not embedded")
        # embeddings are unit vectors, so cosine is the plain dot product
        scored.append((float(np.dot(query_vec, np.asarray(node.embedding))), node.node_id))

    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    neighbors = [node_id_ for _, node_id_ in scored[:k]]
    kb.bump_counts(neighbors)
    return neighbors


def sampling_report(kb: KnowledgeBase) -> dict:
    """Distribution stats over retrieval counts; pure read."""
    counts = kb.counts()
    n = len(counts)
    total = sum(counts)
    mean = total / n if n else 0.0
    variance = sum((c - mean) ** 2 for c in counts) / n if n else 0.0
    return {
        "n_nodes": n,
        "total_retrievals": total,
        "mean": mean,
        "std_dev": math.sqrt(variance),
        "min": min(counts) if counts else 0,
        "max": max(counts) if counts else 0,
        "ideal_uniform_count": mean,
        "per_node": {node.node_id: node.retrieval_count for node in kb.nodes},
    }


# -- persistence ----------------------------------------------------------------


def save_kb(kb: KnowledgeBase, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    atomic_write_json(
        directory / "manifest.json",
        {
            "files": kb.corpus_manifest,
            "chunking": kb.chunking.to_dict(),
            "embedding_model_id": kb.embedding_model_id,
            "embedding_dim": kb.embedding_dim,
            "n_nodes": len(kb),
        },
    )
    write_jsonl(
        directory / "nodes.jsonl",
        [
            {
                "node_id": n.node_id,
                "text": n.text,
                "source_doc": n.source_doc,
                "embedding": n.embedding,
                "retrieval_count": n.retrieval_count,
            }
            for n in kb.nodes
        ],
    )
    return directory


def load_kb(directory: str | Path) -> KnowledgeBase:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.is_file():
        raise CorpusError(f"not a knowledge base directory: {directory}")
    import json

    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    nodes = [
        KnowledgeNode(
            node_id=row["node_id"],
            text=row["text"],
            source_doc=row["source_doc"],
            embedding=row.get("embedding"),
            retrieval_count=row.get("retrieval_count", 0),
        )
        for row in read_jsonl(directory / "nodes.jsonl")
    ]
    return KnowledgeBase(
        nodes=nodes,
        chunking=ChunkConfig(**manifest["chunking"]),
        corpus_manifest=manifest["files"],
        embedding_dim=manifest.get("embedding_dim"),
        embedding_model_id=manifest.get("embedding_model_id"),
    )


def verify_manifest(kb: KnowledgeBase) -> None:
    """Re-hash the manifest files; drift since ingestion is an error."""
    for entry in kb.corpus_manifest:
        path = Path(entry["file"])
        if not path.is_file():
            raise CorpusError(f"manifest file missing: {path}")
        if sha256_file(path) != entry["sha256"]:
            raise CorpusError(f"manifest checksum mismatch for {path}")


def kb_fingerprint(kb: KnowledgeBase) -> str:
    """Content hash over node ids and texts, for run manifests."""
    from thames.ioutil import sha256_text

    return sha256_text(canonical_json([[n.node_id, n.text] for n in kb.nodes]))
