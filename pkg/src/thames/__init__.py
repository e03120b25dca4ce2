"""Hallucination benchmark toolkit: testset generation, evaluation, mitigation."""

__version__ = "0.1.0"

from thames.errors import (
    ConfigError,
    ContentError,
    CorpusError,
    GenerationError,
    InputError,
    SchemaError,
    ScoringError,
    TransportError,
)

__all__ = [
    "ConfigError",
    "ContentError",
    "CorpusError",
    "GenerationError",
    "InputError",
    "SchemaError",
    "ScoringError",
    "TransportError",
    "__version__",
]
