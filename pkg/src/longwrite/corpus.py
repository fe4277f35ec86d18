"""Outline-exemplar corpus: ingestion, persistence and dense retrieval.

Corpus records are JSON Lines with ``id``, ``title``, ``outline_text`` and an
optional ``summary`` (plus optional precomputed ``queries``). Retrieval is an
exhaustive cosine scan over unit vectors.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import EmptyCorpus, EmptyOutline, IndexFormatError
from .gateway.core import Embedder, normalize_rows, rank_by_score
from .outline import Outline, normalize_title, parse_outline, render_outline

logger = logging.getLogger(__name__)

INDEX_FORMAT_VERSION = 1
DEFAULT_EXEMPLARS = 3


@dataclass
class OutlineExemplar:
    topic: str
    outline: Outline
    summary: str | None = None
    queries: list[str] | None = None

    def embed_text(self) -> str:
        return f"{self.topic} {self.summary}" if self.summary else self.topic

    def to_dict(self) -> dict:
        d = {"topic": self.topic, "outline": render_outline(self.outline), "summary": self.summary}
        if self.queries is not None:
            d["queries"] = list(self.queries)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> OutlineExemplar:
        return cls(d["topic"], parse_outline(d["outline"]), d.get("summary"), d.get("queries"))


@dataclass
class IngestStats:
    ingested: int = 0
    skipped: int = 0
    filtered: int = 0


@dataclass
class CorpusIndex:
    exemplars: list[OutlineExemplar]
    vectors: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if len(self.exemplars) != self.vectors.shape[0]:
            raise ValueError("one vector per exemplar required")

    def __len__(self) -> int:
        return len(self.exemplars)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CorpusIndex):
            return NotImplemented
        return (
            self.exemplars == other.exemplars
            and self.metadata == other.metadata
            and self.vectors.shape == other.vectors.shape
            and bool(np.array_equal(self.vectors, other.vectors))
        )

    def to_json(self) -> str:
        doc = {
            "format_version": INDEX_FORMAT_VERSION,
            "metadata": self.metadata,
            "exemplars": [e.to_dict() for e in self.exemplars],
            "vectors": self.vectors.tolist(),
        }
        return json.dumps(doc, ensure_ascii=False, sort_keys=True)

    def save(self, path: str | os.PathLike) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | os.PathLike) -> CorpusIndex:
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise IndexFormatError(f"{path}: not a JSON index ({exc})") from exc
        version = doc.get("format_version")
        if version != INDEX_FORMAT_VERSION:
            raise IndexFormatError(f"{path}: index format {version!r}, expected {INDEX_FORMAT_VERSION}")
        exemplars = [OutlineExemplar.from_dict(d) for d in doc["exemplars"]]
        vectors = np.asarray(doc["vectors"], dtype=np.float64)
        if not exemplars:
            vectors = vectors.reshape(0, 0)
        return cls(exemplars, vectors, doc.get("metadata", {}))


def ingest_corpus(
    records: Iterable[Mapping],
    embedder: Embedder,
    *,
    out_path: str | os.PathLike | None = None,
    keep: Callable[[Mapping], bool] | None = None,
    use_summary: bool = True,
    built_at: str | None = None,
    batch_size: int = 512,
) -> tuple[CorpusIndex, IngestStats]:
    """Build a :class:`CorpusIndex` from corpus records.

    Records missing a title or whose outline text holds no heading are skipped
    and counted. ``keep`` is an optional caller-supplied selection predicate.

    Raises:
        EmptyCorpus: if no record survives.
    """
    stats = IngestStats()
    exemplars: list[OutlineExemplar] = []
    for rec in records:
        if keep is not None and not keep(rec):
            stats.filtered += 1
            continue
        title = str(rec.get("title") or "").strip()
        try:
            if not title:
                raise EmptyOutline("record has no title")
            outline = parse_outline(str(rec.get("outline_text") or ""))
        except EmptyOutline as exc:
            logger.debug("skipping record %s: %s", rec.get("id"), exc)
            stats.skipped += 1
            continue
        summary = rec.get("summary") if use_summary else None
        queries = rec.get("queries")
        exemplars.append(OutlineExemplar(title, outline, summary or None, list(queries) if queries else None))
    stats.ingested = len(exemplars)
    if not exemplars:
        raise EmptyCorpus(f"no usable records ({stats.skipped} skipped, {stats.filtered} filtered)")

    texts = [e.embed_text() for e in exemplars]
    blocks = [normalize_rows(embedder.embed_raw(texts[i : i + batch_size])) for i in range(0, len(texts), batch_size)]
    vectors = np.vstack(blocks)
    if built_at is None:
        epoch = os.environ.get("SOURCE_DATE_EPOCH")
        ts = float(epoch) if epoch else time.time()
        built_at = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(ts))
    metadata = {
        "built_at": built_at,
        "embedder_id": embedder.embedder_id,
        "record_count": stats.ingested,
        "skipped": stats.skipped,
        "filtered": stats.filtered,
        "embedded_fields": "title+summary" if use_summary else "title",
    }
    index = CorpusIndex(exemplars, vectors, metadata)
    if out_path is not None:
        index.save(out_path)
    return index, stats


def retrieve_exemplars(
    index: CorpusIndex,
    embedder: Embedder,
    topic: str,
    brief: str,
    n: int = DEFAULT_EXEMPLARS,
) -> list[tuple[OutlineExemplar, float]]:
    """Top-``n`` exemplars by cosine similarity to ``topic + brief``.

    Ties keep ingestion order. An exemplar whose normalized title equals the
    query topic is never returned.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(index) == 0:
        raise EmptyCorpus("index holds no exemplars")
    expected = index.metadata.get("embedder_id")
    if expected and expected != embedder.embedder_id:
        logger.warning("index built with %s, querying with %s", expected, embedder.embedder_id)
    query = f"{topic} {brief}".strip()
    q = normalize_rows(embedder.embed_raw([query]))[0]
    scores = index.vectors @ q
    key = normalize_title(topic)
    out = []
    for i in rank_by_score(scores):
        ex = index.exemplars[i]
        if normalize_title(ex.topic) == key:
            continue
        out.append((ex, float(scores[i])))
        if len(out) == n:
            break
    return out
