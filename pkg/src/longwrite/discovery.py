"""Intent recognition, initial outline, attribute-driven search and outline refinement."""

from __future__ import annotations

import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import CorpusIndex, OutlineExemplar, retrieve_exemplars
from .errors import (
    EmptyOutline,
    NoAttributes,
    NoOperations,
    NoQueries,
    ProviderError,
    StageFailed,
)
from .gateway import Gateway, SearchResult, TemplateId
from .outline import (
    DO_NOTHING,
    EditOperation,
    OpKind,
    Outline,
    apply_operations,
    drop_titles,
    first_level_sections,
    normalize_title,
    parse_operations,
    parse_outline,
    render_operations,
    render_outline,
)

logger = logging.getLogger(__name__)

MAX_BRIEF_SENTENCES = 3
_SENTENCE_END = re.compile(r"(?<=[.!?])[\"')\]]*\s+(?=\S)")
_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+")


def split_sentences(text: str) -> list[str]:
    text = " ".join(text.split())
    if not text:
        return []
    out, start = [], 0
    for m in _SENTENCE_END.finditer(text):
        out.append(text[start : m.end()].strip())
        start = m.end()
    out.append(text[start:].strip())
    return [s for s in out if s]


@dataclass
class BriefIntro:
    topic: str
    text: str

    @property
    def sentences(self) -> list[str]:
        return split_sentences(self.text)


class AttributeBuffer:
    """Insertion-ordered, normalization-deduplicated attribute set that only grows."""

    def __init__(self, topic: str, attributes: Iterable[str] = ()):
        self.topic = topic
        self._items: list[str] = []
        self._keys: set[str] = set()
        self.add(attributes)

    def add(self, attributes: Iterable[str]) -> list[str]:
        """Add attributes; returns the ones that were new."""
        added = []
        topic_key = normalize_title(self.topic)
        for a in attributes:
            a = a.strip()
            key = normalize_title(a)
            if not key or key == topic_key or key in self._keys:
                continue
            self._keys.add(key)
            self._items.append(a)
            added.append(a)
        return added

    @property
    def attributes(self) -> list[str]:
        return list(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, a: str) -> bool:
        return normalize_title(a) in self._keys


def _query_key(q: str) -> str:
    return " ".join(q.casefold().split())


@dataclass
class QuerySet:
    queries: list[str] = field(default_factory=list)
    stage: str = "raw"

    def __post_init__(self) -> None:
        if self.stage not in ("raw", "merged"):
            raise ValueError(f"bad stage {self.stage!r}")
        seen, out = set(), []
        for q in self.queries:
            q = q.strip()
            if q and _query_key(q) not in seen:
                seen.add(_query_key(q))
                out.append(q)
        self.queries = out
        if self.stage == "merged" and not self.queries:
            raise ValueError("merged query set must be nonempty")

    def __len__(self) -> int:
        return len(self.queries)

    def __iter__(self):
        return iter(self.queries)


@dataclass(frozen=True)
class Reference:
    id: int
    result: SearchResult

    @property
    def url(self) -> str:
        return self.result.url

    @property
    def title(self) -> str:
        return self.result.title

    @property
    def snippet(self) -> str:
        return self.result.snippet


class ReferenceStore:
    """URL-deduplicated search results with dense, stable ids starting at 1."""

    def __init__(self, results: Iterable[SearchResult] = ()):
        self._refs: list[Reference] = []
        self._by_url: dict[str, Reference] = {}
        self._lock = threading.Lock()
        self.extend(results)

    def add(self, result: SearchResult) -> Reference | None:
        """Append ``result`` unless its URL is known; returns the new reference."""
        with self._lock:
            if result.url in self._by_url:
                return None
            ref = Reference(len(self._refs) + 1, result)
            self._refs.append(ref)
            self._by_url[result.url] = ref
            return ref

    def extend(self, results: Iterable[SearchResult]) -> int:
        return sum(1 for r in results if self.add(r) is not None)

    @property
    def references(self) -> list[Reference]:
        with self._lock:
            return list(self._refs)

    def get(self, ref_id: int) -> Reference:
        return self._refs[ref_id - 1]

    def by_url(self, url: str) -> Reference | None:
        return self._by_url.get(url)

    def __len__(self) -> int:
        return len(self._refs)

    def __iter__(self):
        return iter(self.references)

    def to_list(self) -> list[dict]:
        return [{"id": r.id, **r.result.to_dict()} for r in self.references]


@dataclass
class DiscoveryConfig:
    max_iterations: int = 2
    max_total_queries: int = 30
    query_cap: int = 15
    n_exemplars: int = 3
    search_k: int = 5
    max_in_flight: int = 8
    preloaded_attributes: list[str] = field(default_factory=list)
    # provider settings echoed into the run report
    decoding: dict = field(default_factory=lambda: {"temperature": 0.0, "retry_attempts": 3})


def format_search_results(results: Sequence[SearchResult]) -> str:
    if not results:
        return "(no search results)"
    return "\n".join(f"[{i}] {r.title}\n{r.snippet}\n({r.url})" for i, r in enumerate(results, start=1))


def format_exemplars(exemplars: Sequence[OutlineExemplar]) -> str:
    if not exemplars:
        return "(none)"
    return "\n\n".join(f"Topic: {e.topic}\n{render_outline(e.outline)}" for e in exemplars)


def summarize_topic(gw: Gateway, topic: str, *, k: int | None = None) -> tuple[BriefIntro, list[SearchResult]]:
    """Search the topic and condense the hits into a brief of at most three sentences."""
    if not topic.strip():
        raise ValueError("topic must be nonempty")
    results = gw.search(topic, k)
    reply = gw.complete(
        TemplateId.TOPIC_SUMMARIZATION,
        {"topic": topic, "search_results": format_search_results(results)},
    )
    sentences = split_sentences(reply)[:MAX_BRIEF_SENTENCES]
    text = " ".join(sentences) if sentences else topic
    return BriefIntro(topic, text), results


def generate_initial_outline(
    gw: Gateway,
    topic: str,
    brief: BriefIntro,
    search_results: Sequence[SearchResult],
    exemplars: Sequence[OutlineExemplar],
) -> Outline:
    reply = gw.complete(
        TemplateId.RAG_OUTLINE_GENERATION,
        {
            "topic": topic,
            "brief": brief.text,
            "search_results": format_search_results(search_results),
            "exemplars": format_exemplars(exemplars),
        },
    )
    outline = drop_titles(parse_outline(reply), topic)
    if not outline.roots:
        raise EmptyOutline("outline held only the topic heading")
    return outline


def extract_attributes(gw: Gateway, topic: str, outline: Outline, buffer: AttributeBuffer) -> list[str]:
    """Ask for attributes of ``outline`` and merge them into ``buffer``.

    Returns the newly added attributes.

    Raises:
        NoAttributes: if the reply holds no usable attribute line.
    """
    reply = gw.complete(
        TemplateId.ATTRIBUTES_EXTRACTION,
        {"topic": topic, "outline": render_outline(outline)},
    )
    topic_key = normalize_title(topic)
    lines = []
    for line in reply.splitlines():
        line = _BULLET.sub("", line).strip()
        if line and normalize_title(line) != topic_key:
            lines.append(line)
    if not lines:
        raise NoAttributes("reply held no attribute lines")
    return buffer.add(lines)


def parse_query_lines(text: str) -> tuple[list[str], int]:
    queries, skipped = [], 0
    for line in text.splitlines():
        if not line.strip():
            continue
        m = re.match(r"^\s*-\s+(.+?)\s*$", line)
        if m:
            queries.append(m.group(1))
        else:
            skipped += 1
    return queries, skipped


def attributes_to_queries(gw: Gateway, topic: str, attributes: Sequence[str]) -> tuple[QuerySet, int]:
    """Turn attributes into raw search queries; returns the set and the skipped line count."""
    if not attributes:
        raise NoQueries("attribute buffer is empty")
    reply = gw.complete(
        TemplateId.ATTRIBUTES_TO_QUERIES,
        {"topic": topic, "attributes": "\n".join(attributes)},
    )
    queries, skipped = parse_query_lines(reply)
    if not queries:
        raise NoQueries(f"reply held no '- ' query lines ({skipped} skipped)")
    return QuerySet(queries, "raw"), skipped


def exemplar_queries(exemplar: OutlineExemplar) -> QuerySet:
    """Queries associated with an exemplar, without any model call.

    Uses queries stored with the corpus record when present, otherwise pairs
    the exemplar topic with each of its first-level section titles.
    """
    if exemplar.queries:
        return QuerySet(list(exemplar.queries), "raw")
    return QuerySet([f"{exemplar.topic} {s}" for s in first_level_sections(exemplar.outline)], "raw")


def merge_queries(
    gw: Gateway,
    topic: str,
    raw: QuerySet,
    similar: Sequence[tuple[str, QuerySet]],
    *,
    cap: int = 15,
) -> tuple[QuerySet, bool]:
    """Merge raw queries with exemplar queries; returns (merged, fell_back_to_raw)."""
    if not len(raw):
        raise NoQueries("raw query set is empty")
    similar_text = (
        "\n\n".join(f"Topic: {t}\n" + "\n".join(f"- {q}" for q in qs) for t, qs in similar)
        if similar
        else "(none)"
    )
    reply = gw.complete(
        TemplateId.QUERIES_MERGING,
        {
            "topic": topic,
            "queries": "\n".join(f"- {q}" for q in raw),
            "similar_queries": similar_text,
        },
    )
    queries, _ = parse_query_lines(reply)
    fallback = not queries
    if fallback:
        logger.warning("query merging produced no queries; keeping the raw set")
        queries = list(raw)
    merged = QuerySet(queries, "merged")
    merged.queries = merged.queries[:cap]
    return merged, fallback


def gather_references(
    gw: Gateway,
    queries: Sequence[str],
    store: ReferenceStore,
    *,
    k: int | None = None,
    max_in_flight: int = 8,
) -> dict[str, str]:
    """Search every query concurrently and commit hits to ``store`` in query order.

    Returns a map of failed query -> error message.

    Raises:
        ProviderError: if every query failed.
    """
    queries = list(queries)
    if not queries:
        raise NoQueries("nothing to search")

    def run(q: str):
        try:
            return gw.search(q, k), None
        except ProviderError as exc:
            return None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, min(max_in_flight, len(queries)))) as pool:
        outcomes = list(pool.map(run, queries))

    failures = {q: err for q, (_, err) in zip(queries, outcomes) if err is not None}
    if len(failures) == len(queries):
        raise ProviderError(f"all {len(queries)} searches failed")
    for hits, _ in outcomes:
        if hits:
            store.extend(hits)
    return failures


def propose_operations(
    gw: Gateway, topic: str, outline: Outline, store: ReferenceStore
) -> tuple[list[EditOperation], int, bool]:
    """Returns (operations, skipped lines, unparseable_reply)."""
    titles = "\n".join(f"- {r.title}" for r in store.references if r.title) or "(none)"
    reply = gw.complete(
        TemplateId.OPERATION_GENERATION,
        {"topic": topic, "outline": render_outline(outline), "titles": titles},
    )
    try:
        ops, skipped = parse_operations(reply)
        return ops, skipped, False
    except NoOperations:
        logger.warning("operation reply unparseable; treating as do-nothing")
        return [DO_NOTHING], len([ln for ln in reply.splitlines() if ln.strip()]), True


def refine_outline(
    gw: Gateway, topic: str, outline: Outline, ops: Sequence[EditOperation], notes: list[str] | None = None
) -> tuple[Outline, bool]:
    """Apply ``ops`` mechanically, then let the model polish the result.

    Returns the refined outline and whether the model reply was used (False
    when it did not parse and the mechanically edited outline was kept).
    """
    edited = apply_operations(outline, list(ops), notes)
    reply = gw.complete(
        TemplateId.OUTLINE_REFINEMENT,
        {"topic": topic, "outline": render_outline(edited), "operations": render_operations(list(ops))},
    )
    try:
        refined = drop_titles(parse_outline(reply), topic)
        if not refined.roots:
            raise EmptyOutline("refined outline held only the topic heading")
        return refined, True
    except EmptyOutline:
        logger.warning("refinement reply unparseable; keeping mechanically edited outline")
        return edited, False


@dataclass
class DiscoveryResult:
    outline: Outline
    store: ReferenceStore
    brief: BriefIntro
    initial_outline: Outline
    exemplars: list[OutlineExemplar]
    report: dict


def discovery_loop(
    gw: Gateway,
    topic: str,
    config: DiscoveryConfig | None = None,
    index: CorpusIndex | None = None,
) -> DiscoveryResult:
    """Run intent recognition, outline drafting and the refinement loop.

    Iterations stop when an iteration adds no attribute to the buffer and
    proposes only do-nothing operations, or when the iteration or query
    budget is spent.

    Raises:
        StageFailed: wrapping the first fatal stage error, with the partial report.
    """
    cfg = config or DiscoveryConfig()
    report: dict = {
        "topic": topic,
        "flags": [],
        "decoding": dict(cfg.decoding),
        "iterations": [],
    }
    stage = "summarize_topic"
    try:
        brief, hits = summarize_topic(gw, topic, k=cfg.search_k)
        if not hits:
            report["flags"].append("no search context")
        report["brief"] = brief.text
        report["topic_search_hits"] = len(hits)

        stage = "retrieve_exemplars"
        exemplars: list[OutlineExemplar] = []
        if index is not None and len(index):
            exemplars = [e for e, _ in retrieve_exemplars(index, gw.embedder, topic, brief.text, cfg.n_exemplars)]
        else:
            report["flags"].append("no exemplar corpus")
        report["exemplars"] = [e.topic for e in exemplars]

        stage = "generate_initial_outline"
        initial = generate_initial_outline(gw, topic, brief, hits, exemplars)
        report["initial_outline"] = render_outline(initial)

        outline = initial
        buffer = AttributeBuffer(topic, cfg.preloaded_attributes)
        store = ReferenceStore()
        similar = [(e.topic, exemplar_queries(e)) for e in exemplars]
        searched: set[str] = set()
        report["stop_reason"] = "max_iterations"

        for it in range(1, cfg.max_iterations + 1):
            rec: dict = {"iteration": it}
            report["iterations"].append(rec)

            stage = "extract_attributes"
            try:
                added = extract_attributes(gw, topic, outline, buffer)
            except NoAttributes:
                if not len(buffer):
                    raise
                added = []
                rec["no_attribute_lines"] = True
            rec["attributes_added"] = added
            rec["attribute_count"] = len(buffer)

            stage = "attributes_to_queries"
            raw, skipped = attributes_to_queries(gw, topic, buffer.attributes)
            rec["raw_queries"] = list(raw)
            rec["raw_query_lines_skipped"] = skipped

            stage = "merge_queries"
            merged, fallback = merge_queries(gw, topic, raw, similar, cap=cfg.query_cap)
            rec["merged_queries"] = list(merged)
            rec["merge_fallback"] = fallback

            stage = "gather_references"
            budget = cfg.max_total_queries - len(searched)
            fresh = [q for q in merged if _query_key(q) not in searched][: max(budget, 0)]
            rec["searched_queries"] = fresh
            if fresh:
                failures = gather_references(gw, fresh, store, k=cfg.search_k, max_in_flight=cfg.max_in_flight)
                searched.update(_query_key(q) for q in fresh)
                rec["search_failures"] = failures
            rec["reference_count"] = len(store)

            stage = "propose_operations"
            ops, op_skipped, unparseable = propose_operations(gw, topic, outline, store)
            rec["operations"] = [op.render() for op in ops]
            rec["operation_lines_skipped"] = op_skipped
            if unparseable:
                rec["operations_unparseable"] = True

            stage = "refine_outline"
            notes: list[str] = []
            outline, used_reply = refine_outline(gw, topic, outline, ops, notes)
            rec["refinement_reply_used"] = used_reply
            rec["edit_notes"] = notes
            rec["outline"] = render_outline(outline)

            if not added and all(op.kind is OpKind.NOTHING for op in ops):
                report["stop_reason"] = "converged"
                break
            if len(searched) >= cfg.max_total_queries:
                report["stop_reason"] = "query_budget"
                break
    except (StageFailed, KeyboardInterrupt):
        raise
    except Exception as exc:
        report["failed_stage"] = stage
        report["error"] = str(exc)
        raise StageFailed(stage, exc, report) from exc

    report["attributes"] = buffer.attributes
    report["final_outline"] = render_outline(outline)
    report["reference_count"] = len(store)
    return DiscoveryResult(outline, store, brief, initial, exemplars, report)
