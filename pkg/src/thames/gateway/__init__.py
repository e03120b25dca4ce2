from thames.gateway.backends import (
    API_KEY_ENV,
    ChatBackend,
    ChatRequest,
    ChatResult,
    EmbedResult,
    EmbeddingBackend,
    HttpScoringBackend,
    OpenAIChatBackend,
    OpenAIEmbeddingBackend,
    ScoringBackend,
)
from thames.gateway.core import (
    GENERATION_TEMPERATURE,
    HALLUCINATION_TEMPERATURE,
    JUDGE_TEMPERATURE,
    ModelGateway,
    ScorePair,
    UsageLedger,
    UsageRecord,
)
from thames.gateway.json_extract import extract_json_array, extract_json_object

__all__ = [
    "API_KEY_ENV",
    "ChatBackend",
    "ChatRequest",
    "ChatResult",
    "EmbedResult",
    "EmbeddingBackend",
    "GENERATION_TEMPERATURE",
    "HALLUCINATION_TEMPERATURE",
    "HttpScoringBackend",
    "JUDGE_TEMPERATURE",
    "ModelGateway",
    "OpenAIChatBackend",
    "OpenAIEmbeddingBackend",
    "ScorePair",
    "ScoringBackend",
    "UsageLedger",
    "UsageRecord",
    "extract_json_array",
    "extract_json_object",
]
