from .core import (
    DEFAULT_EXCLUSIONS,
    DEFAULT_SEARCH_K,
    CallCounter,
    CallRecord,
    EmbeddingVector,
    Gateway,
    SearchResult,
    estimate_tokens,
    host_excluded,
    rank_by_score,
)
from .http import GoogleSearch, HttpChat, HttpEmbedder, RetryPolicy
from .mock import MockChat, MockSearch, TermFrequencyEmbedder, fixture_embedder, read_jsonl
from .templates import PLAN_EXAMPLE, TEMPLATES, PromptTemplate, TemplateId, get_template

__all__ = [
    "DEFAULT_EXCLUSIONS",
    "DEFAULT_SEARCH_K",
    "CallCounter",
    "CallRecord",
    "EmbeddingVector",
    "Gateway",
    "GoogleSearch",
    "HttpChat",
    "HttpEmbedder",
    "MockChat",
    "MockSearch",
    "PLAN_EXAMPLE",
    "PromptTemplate",
    "RetryPolicy",
    "SearchResult",
    "TEMPLATES",
    "TemplateId",
    "TermFrequencyEmbedder",
    "estimate_tokens",
    "fixture_embedder",
    "get_template",
    "host_excluded",
    "rank_by_score",
    "read_jsonl",
]
