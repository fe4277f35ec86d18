"""Provider-agnostic gateway: prompt rendering, call accounting, search hygiene."""

from __future__ import annotations

import fnmatch
import logging
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, Sequence
from urllib.parse import urlparse

import numpy as np

from ..errors import ProviderError
from .templates import TemplateId, get_template

logger = logging.getLogger(__name__)

DEFAULT_EXCLUSIONS = ("*.wikipedia.org",)
DEFAULT_SEARCH_K = 5


def estimate_tokens(text: str) -> int:
    """Whitespace token count scaled by 1.3, rounded."""
    return int(round(len(text.split()) * 1.3))


@dataclass(frozen=True)
class SearchResult:
    title: str
    url: str
    snippet: str
    rank: int
    source_query: str

    def __post_init__(self) -> None:
        if not self.url:
            raise ValueError("search result url must be nonempty")
        if self.rank < 1:
            raise ValueError("rank must be >= 1")

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "url": self.url,
            "snippet": self.snippet,
            "rank": self.rank,
            "source_query": self.source_query,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> SearchResult:
        return cls(d["title"], d["url"], d.get("snippet", ""), int(d["rank"]), d.get("source_query", ""))


@dataclass(frozen=True)
class EmbeddingVector:
    values: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    def cosine(self, other: EmbeddingVector) -> float:
        denom = self.norm * other.norm
        if denom == 0:
            raise ProviderError("cosine of a zero vector")
        return float(np.dot(self.values, other.values) / denom)


class ChatProvider(Protocol):
    def chat(self, template_id: str, key: str, prompt: str, bindings: Mapping[str, str]) -> str: ...


class SearchProvider(Protocol):
    def raw_search(self, query: str, num: int) -> list[dict]: ...


class Embedder(Protocol):
    embedder_id: str

    def embed_raw(self, texts: Sequence[str]) -> np.ndarray: ...


TIE_DECIMALS = 12


def rank_by_score(scores: np.ndarray) -> np.ndarray:
    """Indices by descending score; scores equal to 12 decimals tie and keep input order."""
    return np.argsort(-np.round(scores, TIE_DECIMALS), kind="stable")


def normalize_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ProviderError(f"embedding batch must be 2-d, got shape {m.shape}")
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ProviderError("embedder returned a zero vector")
    return m / norms


@dataclass(frozen=True)
class CallRecord:
    template_id: str
    key: str
    tag: str | None
    prompt_tokens: int
    reply_tokens: int
    ok: bool

    def to_dict(self) -> dict:
        return {
            "template_id": self.template_id,
            "key": self.key,
            "tag": self.tag,
            "prompt_tokens": self.prompt_tokens,
            "reply_tokens": self.reply_tokens,
            "ok": self.ok,
        }


@dataclass
class CallCounter:
    """Thread-safe ledger of every completion, search and embedding request."""

    records: list[CallRecord] = field(default_factory=list)
    search_calls: int = 0
    embed_calls: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, record: CallRecord) -> None:
        with self._lock:
            self.records.append(record)

    def bump_search(self) -> None:
        with self._lock:
            self.search_calls += 1

    def bump_embed(self) -> None:
        with self._lock:
            self.embed_calls += 1

    @property
    def total(self) -> int:
        with self._lock:
            return len(self.records)

    def by_template(self) -> dict[str, int]:
        with self._lock:
            out: dict[str, int] = {}
            for r in self.records:
                out[r.template_id] = out.get(r.template_id, 0) + 1
            return out

    def snapshot(self) -> list[CallRecord]:
        with self._lock:
            return list(self.records)


def host_excluded(url: str, patterns: Iterable[str]) -> bool:
    host = (urlparse(url).hostname or "").lower()
    for pat in patterns:
        pat = pat.lower()
        if fnmatch.fnmatch(host, pat):
            return True
        if pat.startswith("*.") and host == pat[2:]:
            return True
    return False


class Gateway:
    """Uniform entry point to chat, search and embedding providers.

    ``embedder`` serves exemplar retrieval; ``reference_embedder`` (defaults to
    the same object) ranks gathered references for section writing.
    """

    def __init__(
        self,
        chat: ChatProvider,
        search: SearchProvider,
        embedder: Embedder,
        reference_embedder: Embedder | None = None,
        *,
        search_k: int = DEFAULT_SEARCH_K,
        exclusions: Sequence[str] = DEFAULT_EXCLUSIONS,
        max_in_flight: Mapping[str, int] | None = None,
    ):
        self.chat_provider = chat
        self.search_provider = search
        self.embedder = embedder
        self.reference_embedder = reference_embedder or embedder
        self.search_k = search_k
        self.exclusions = tuple(exclusions)
        caps = {"chat": 8, "search": 8, "embed": 4, **(max_in_flight or {})}
        self.max_in_flight = caps
        self._sems = {name: threading.BoundedSemaphore(max(1, n)) for name, n in caps.items()}
        self.counter = CallCounter()

    def complete(
        self, template_id: TemplateId | str, bindings: Mapping[str, str], *, tag: str | None = None
    ) -> str:
        template = get_template(template_id)
        prompt = template.render(bindings)
        key = str(bindings.get(template.key_field, ""))
        ok = False
        reply = ""
        try:
            with self._sems["chat"]:
                reply = self.chat_provider.chat(template.id.value, key, prompt, bindings)
            ok = True
            return reply
        finally:
            self.counter.add(
                CallRecord(
                    template.id.value,
                    key,
                    tag,
                    estimate_tokens(prompt),
                    estimate_tokens(reply),
                    ok,
                )
            )

    def search(
        self, query: str, k: int | None = None, exclusions: Sequence[str] | None = None
    ) -> list[SearchResult]:
        k = self.search_k if k is None else k
        if k < 1:
            raise ValueError("k must be >= 1")
        patterns = self.exclusions if exclusions is None else tuple(exclusions)
        self.counter.bump_search()
        with self._sems["search"]:
            # over-fetch so exclusions do not starve the top-k
            hits = self.search_provider.raw_search(query, k + 5)
        kept = []
        for h in hits:
            url = (h.get("url") or "").strip()
            if not urlparse(url).scheme or not urlparse(url).netloc:
                continue
            if host_excluded(url, patterns):
                continue
            kept.append(h)
            if len(kept) == k:
                break
        return [
            SearchResult(h.get("title", "").strip(), h["url"].strip(), h.get("snippet", "").strip(), i, query)
            for i, h in enumerate(kept, start=1)
        ]

    def embed_matrix(self, texts: Sequence[str], *, role: str = "corpus") -> np.ndarray:
        """Unit-normalized embeddings, one row per text."""
        if not texts:
            raise ValueError("texts must be nonempty")
        embedder = self.reference_embedder if role == "reference" else self.embedder
        self.counter.bump_embed()
        with self._sems["embed"]:
            raw = embedder.embed_raw(list(texts))
        m = normalize_rows(raw)
        if m.shape[0] != len(texts):
            raise ProviderError(f"embedder returned {m.shape[0]} vectors for {len(texts)} texts")
        return m

    def embed(self, texts: Sequence[str], *, role: str = "corpus") -> list[EmbeddingVector]:
        return [EmbeddingVector(row) for row in self.embed_matrix(texts, role=role)]
