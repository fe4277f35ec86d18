"""Deterministic in-process providers backed by JSON Lines fixture files.

A fixture directory may contain:

``chat.jsonl``
    ``{"template": ..., "key": ..., "call": n, "response": ...}`` records.
    ``key`` is matched (after title normalization) against the template's key
    binding: the section title for SectionWriting, the topic otherwise. Omit
    ``key`` or use ``"*"`` for a wildcard. ``call`` selects the n-th call for
    that (template, key) pair. Instead of ``response`` a record may carry
    ``"echo": "<binding>"`` (return that binding verbatim) or ``"error": msg``
    (raise ProviderError). ``"delay"`` adds artificial latency in seconds.
    When several records match, exact key beats wildcard, a ``call`` match
    beats none, and later records beat earlier ones.
``search.jsonl``
    ``{"query": ..., "results": [{"title", "url", "snippet"}, ...]}``.
``corpus.jsonl``
    Outline corpus records (see :mod:`longwrite.corpus`).
"""

from __future__ import annotations

import hashlib
import json
import random
import re
import threading
import time
import zlib
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import ProviderError
from ..outline import normalize_title

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.casefold())


def read_jsonl(path: Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


class TermFrequencyEmbedder:
    """Normalized term-frequency vectors over a fixed vocabulary.

    Tokens outside the vocabulary fall into ``oov_buckets`` hashed slots; a
    final slot marks texts with no tokens at all, so every vector is nonzero.
    """

    def __init__(self, vocabulary: Iterable[str], oov_buckets: int = 32):
        self.vocabulary = sorted(set(vocabulary))
        self._index = {w: i for i, w in enumerate(self.vocabulary)}
        self.oov_buckets = oov_buckets
        self.dim = len(self.vocabulary) + oov_buckets + 1
        digest = hashlib.sha1("\n".join(self.vocabulary).encode()).hexdigest()[:12]
        self.embedder_id = f"tf:{digest}:{oov_buckets}"

    @classmethod
    def from_texts(cls, texts: Iterable[str], oov_buckets: int = 32) -> TermFrequencyEmbedder:
        vocab: set[str] = set()
        for t in texts:
            vocab.update(tokenize(t))
        return cls(vocab, oov_buckets)

    def embed_raw(self, texts: Sequence[str]) -> np.ndarray:
        m = np.zeros((len(texts), self.dim))
        n_vocab = len(self.vocabulary)
        for row, text in enumerate(texts):
            counts = Counter(tokenize(text))
            if not counts:
                m[row, self.dim - 1] = 1.0
                continue
            for tok, c in counts.items():
                idx = self._index.get(tok)
                if idx is None:
                    idx = n_vocab + zlib.crc32(tok.encode()) % max(self.oov_buckets, 1)
                m[row, idx] += c
        return m / np.linalg.norm(m, axis=1, keepdims=True)


def _norm_query(q: str) -> str:
    return " ".join(q.casefold().split())


class MockChat:
    """Fixture-driven chat provider with a call transcript and concurrency probe."""

    def __init__(self, records: Sequence[Mapping]):
        self.records = [dict(r) for r in records]
        self._lock = threading.Lock()
        self._calls: Counter = Counter()
        self.transcript: list[dict] = []
        self._in_flight: Counter = Counter()
        self.peak_in_flight: Counter = Counter()

    @classmethod
    def from_file(cls, path: Path) -> MockChat:
        return cls(read_jsonl(path) if path.exists() else [])

    def _lookup(self, template_id: str, key: str, call: int) -> dict:
        nkey = normalize_title(key)
        best, best_score = None, -1
        for i, rec in enumerate(self.records):
            if rec.get("template") != template_id:
                continue
            rkey = rec.get("key", "*")
            if rkey == "*":
                key_score = 0
            elif normalize_title(str(rkey)) == nkey:
                key_score = 2
            else:
                continue
            if "call" in rec:
                if int(rec["call"]) != call:
                    continue
                key_score += 1
            if key_score >= best_score:
                best, best_score = rec, key_score
        if best is None:
            raise ProviderError(f"no mock fixture for {template_id} key={key!r} call={call}")
        return best

    def chat(self, template_id: str, key: str, prompt: str, bindings: Mapping[str, str]) -> str:
        with self._lock:
            pair = (template_id, normalize_title(key))
            self._calls[pair] += 1
            call = self._calls[pair]
            self.transcript.append(
                {"template": template_id, "key": key, "call": call, "prompt": prompt, "start": time.monotonic()}
            )
            self._in_flight[template_id] += 1
            self.peak_in_flight[template_id] = max(
                self.peak_in_flight[template_id], self._in_flight[template_id]
            )
        try:
            rec = self._lookup(template_id, key, call)
            if rec.get("delay"):
                time.sleep(float(rec["delay"]))
            if "error" in rec:
                raise ProviderError(f"mock error for {template_id} key={key!r}: {rec['error']}")
            if "echo" in rec:
                return str(bindings[rec["echo"]])
            return str(rec["response"])
        finally:
            with self._lock:
                self._in_flight[template_id] -= 1


class MockSearch:
    """Fixture-driven search provider.

    ``jitter`` > 0 sleeps a seeded random duration on every call, scrambling
    completion order of concurrent searches without changing any result.
    """

    def __init__(self, records: Sequence[Mapping], *, jitter: float = 0.0, seed: int = 0):
        self.by_query: dict[str, dict] = {}
        for rec in records:
            self.by_query[_norm_query(rec["query"])] = dict(rec)
        self.jitter = jitter
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self.completion_order: list[str] = []
        self.queries: list[str] = []

    @classmethod
    def from_file(cls, path: Path, **kw) -> MockSearch:
        return cls(read_jsonl(path) if path.exists() else [], **kw)

    def raw_search(self, query: str, num: int) -> list[dict]:
        with self._lock:
            self.queries.append(query)
            pause = self._rng.uniform(0, self.jitter) if self.jitter else 0.0
        rec = self.by_query.get(_norm_query(query))
        if rec and rec.get("delay"):
            pause += float(rec["delay"])
        if pause:
            time.sleep(pause)
        with self._lock:
            self.completion_order.append(query)
        if rec is None:
            return []
        if "error" in rec:
            raise ProviderError(f"mock search error for {query!r}: {rec['error']}")
        return [dict(h) for h in rec.get("results", [])[:num]]


def fixture_texts(directory: Path) -> list[str]:
    """Every text in a fixture directory that feeds the mock vocabulary."""
    texts: list[str] = []
    for rec in read_jsonl(directory / "chat.jsonl") if (directory / "chat.jsonl").exists() else []:
        texts.append(str(rec.get("response", "")))
        texts.append(str(rec.get("key", "")))
    for rec in read_jsonl(directory / "search.jsonl") if (directory / "search.jsonl").exists() else []:
        texts.append(rec.get("query", ""))
        for h in rec.get("results", []):
            texts.append(h.get("title", ""))
            texts.append(h.get("snippet", ""))
    for rec in read_jsonl(directory / "corpus.jsonl") if (directory / "corpus.jsonl").exists() else []:
        texts.extend(str(rec.get(f) or "") for f in ("title", "outline_text", "summary"))
    return texts


def fixture_embedder(directory: Path) -> TermFrequencyEmbedder:
    return TermFrequencyEmbedder.from_texts(fixture_texts(Path(directory)))
