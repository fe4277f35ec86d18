"""Section writing over a plan schedule, article assembly and citation renumbering."""

from __future__ import annotations

import logging
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .discovery import Reference, ReferenceStore
from .errors import EmptyStore, LongwriteError, ProviderError
from .gateway import Gateway, TemplateId, rank_by_score
from .outline import Outline, SectionNode, normalize_title, render_outline
from .planner import DEFAULT_MAX_PARALLEL, Schedule, WritingPlan, topological_schedule

logger = logging.getLogger(__name__)

DEFAULT_REFERENCE_K = 10
DEFAULT_CONTEXT_BUDGET = 4000
PLACEHOLDER_BODY = "_This section could not be generated._"

_MARKER = re.compile(r"\[(\d+)\]")
# a marker plus the blanks before it, so a dropped marker leaves no gap
_MARKER_WS = re.compile(r"[ \t]*\[(\d+)\]")
_LEVEL1 = re.compile(r"^#(?!#)\s*(.*?)\s*$")


@dataclass(frozen=True)
class Citation:
    ref_id: int
    url: str
    title: str


@dataclass
class SectionDraft:
    title: str
    body: str
    local_citations: dict[int, Citation] = field(default_factory=dict)
    used_dependencies: list[str] = field(default_factory=list)
    placeholder: bool = False
    warnings: list[str] = field(default_factory=list)

    def markers(self) -> list[int]:
        return [int(m) for m in _MARKER.findall(self.body)]

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "body": self.body,
            "citations": {str(i): {"ref_id": c.ref_id, "url": c.url, "title": c.title}
                          for i, c in sorted(self.local_citations.items())},
            "used_dependencies": self.used_dependencies,
            "placeholder": self.placeholder,
            "warnings": self.warnings,
        }


@dataclass(frozen=True)
class BibEntry:
    id: int
    url: str
    title: str


@dataclass
class Article:
    topic: str
    sections: list[SectionDraft]
    bibliography: list[BibEntry]
    flags: list[str] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return any(s.placeholder for s in self.sections)

    def to_markdown(self) -> str:
        parts = []
        for s in self.sections:
            block = f"# {s.title}"
            if s.body.strip():
                block += "\n\n" + s.body.strip()
            parts.append(block)
        if self.bibliography:
            refs = "\n".join(f"{b.id}. {b.title or b.url} — {b.url}" for b in self.bibliography)
            parts.append("## References\n\n" + refs)
        return "\n\n".join(parts) + "\n"

    def to_dict(self) -> dict:
        return {
            "topic": self.topic,
            "partial": self.partial,
            "flags": list(self.flags),
            "sections": [s.to_dict() for s in self.sections],
            "bibliography": [{"id": b.id, "url": b.url, "title": b.title} for b in self.bibliography],
        }


def _root(outline: Outline, title: str) -> SectionNode | None:
    key = normalize_title(title)
    return next((r for r in outline.roots if normalize_title(r.title) == key), None)


def _section_query(outline: Outline, section_title: str) -> str:
    node = _root(outline, section_title)
    sub = node.subsection_titles() if node else []
    return " ".join([section_title, *sub])


def section_references(
    gw: Gateway,
    section_title: str,
    store: ReferenceStore,
    outline: Outline,
    k: int = DEFAULT_REFERENCE_K,
    plan: WritingPlan | None = None,
) -> list[Reference]:
    """Top-``k`` store entries by cosine similarity to the section and its subsections.

    Ties are broken by reference id.

    Raises:
        EmptyStore: if the store is empty.
    """
    refs = store.references
    if not refs:
        raise EmptyStore("reference store is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    m = gw.embed_matrix(
        [_section_query(outline, section_title)] + [f"{r.title} {r.snippet}" for r in refs], role="reference"
    )
    scores = m[1:] @ m[0]
    order = rank_by_score(scores)
    return [refs[i] for i in order[:k]]


def format_collected_info(refs: Sequence[Reference]) -> str:
    if not refs:
        return "(none)"
    return "\n\n".join(f"[{i}] {r.title}\n{r.snippet}\n({r.url})" for i, r in enumerate(refs, start=1))


def _truncate_words(text: str, budget: int) -> tuple[str, int]:
    words = text.split()
    if len(words) <= budget:
        return text, len(words)
    return " ".join(words[:budget]) + " ...", budget


def dependency_context(
    deps: Sequence[str], completed: Mapping[str, SectionDraft], budget: int = DEFAULT_CONTEXT_BUDGET
) -> str:
    """Bodies of dependency sections, ``deps`` given newest first, cut to ``budget`` words."""
    parts, used = [], 0
    for title in deps:
        if used >= budget:
            break
        body, n = _truncate_words(completed[title].body, budget - used)
        used += n
        parts.append(f"# {title}\n{body}")
    return "\n\n".join(parts) if parts else "(none)"


def _clean_body(reply: str, section_title: str) -> str:
    lines = reply.strip().splitlines()
    # drop a leading level-1 heading for this section; the heading is re-added on render
    while lines and not lines[0].strip():
        lines.pop(0)
    if lines:
        m = _LEVEL1.match(lines[0])
        if m and normalize_title(m.group(1)) == normalize_title(section_title):
            lines.pop(0)
    out = []
    for line in lines:
        # stray first-level headings would read as new article sections
        if line.startswith("# "):
            line = "#" + line
        out.append(line)
    return "\n".join(out).strip()


def write_section(
    gw: Gateway,
    topic: str,
    section_title: str,
    outline: Outline,
    plan: WritingPlan,
    refs: Sequence[Reference],
    completed: Mapping[str, SectionDraft],
    *,
    dependency_order: Sequence[str] | None = None,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
) -> SectionDraft:
    """Generate one section; inline ``[i]`` maps to the i-th entry of ``refs``."""
    deps = plan.predecessors(section_title)
    missing = [d for d in deps if d not in completed]
    if missing:
        raise LongwriteError(f"{section_title!r} scheduled before its dependencies {missing}")
    if dependency_order is not None:
        rank = {t: i for i, t in enumerate(dependency_order)}
        deps = sorted(deps, key=lambda t: -rank.get(t, -1))
    node = _root(outline, section_title)
    section_outline = render_outline(Outline([node])) if node else f"# {section_title}"
    reply = gw.complete(
        TemplateId.SECTION_WRITING,
        {
            "collected_info": format_collected_info(refs),
            "topic": topic,
            "other_sections": dependency_context(deps, completed, context_budget),
            "section_title": section_title,
            "section_outline": section_outline,
        },
        tag=section_title,
    )
    body = _clean_body(reply, section_title)
    warnings: list[str] = []
    cites: dict[int, Citation] = {}

    def fix(m: re.Match) -> str:
        i = int(m.group(1))
        if 1 <= i <= len(refs):
            r = refs[i - 1]
            cites[i] = Citation(r.id, r.url, r.title)
            return m.group(0)
        warnings.append(f"dropped citation [{i}]: only {len(refs)} references provided")
        return ""

    body = _MARKER_WS.sub(fix, body)
    for w in warnings:
        logger.warning("%s: %s", section_title, w)
    return SectionDraft(section_title, body, dict(sorted(cites.items())), list(deps), False, warnings)


def renumber_citations(topic: str, drafts: Sequence[SectionDraft], flags: Sequence[str] = ()) -> Article:
    """Rewrite local ``[i]`` markers to global ids ordered by first appearance.

    The same URL always receives the same global id. Markers with no local
    mapping are removed.
    """
    url_to_id: dict[str, int] = {}
    bib: list[BibEntry] = []
    sections = []
    for d in drafts:
        new_cites: dict[int, Citation] = {}

        def rewrite(m: re.Match, d=d, new_cites=new_cites) -> str:
            c = d.local_citations.get(int(m.group(1)))
            if c is None:
                return ""
            lead = m.group(0)[: m.start(1) - 1 - m.start(0)]
            gid = url_to_id.get(c.url)
            if gid is None:
                gid = len(bib) + 1
                url_to_id[c.url] = gid
                bib.append(BibEntry(gid, c.url, c.title))
            new_cites[gid] = c
            return f"{lead}[{gid}]"

        body = _MARKER_WS.sub(rewrite, d.body)
        sections.append(
            SectionDraft(d.title, body, dict(sorted(new_cites.items())), list(d.used_dependencies),
                         d.placeholder, list(d.warnings))
        )
    return Article(topic, sections, bib, list(flags))


@dataclass
class WriterConfig:
    max_parallel: int = DEFAULT_MAX_PARALLEL
    reference_k: int = DEFAULT_REFERENCE_K
    context_budget: int = DEFAULT_CONTEXT_BUDGET


class _PeakCounter:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.current = 0
        self.peak = 0

    def __enter__(self):
        with self._lock:
            self.current += 1
            self.peak = max(self.peak, self.current)

    def __exit__(self, *exc):
        with self._lock:
            self.current -= 1


@dataclass
class GenerationTrace:
    schedule: Schedule
    started: list[str] = field(default_factory=list)
    peak_in_flight: int = 0


def generate_article(
    gw: Gateway,
    topic: str,
    outline: Outline,
    plan: WritingPlan,
    store: ReferenceStore,
    config: WriterConfig | None = None,
) -> tuple[Article, GenerationTrace]:
    """Write every first-level section wave by wave and assemble in outline order.

    A section whose generation fails becomes a placeholder and the article is
    flagged partial.
    """
    cfg = config or WriterConfig()
    sections = [r.title for r in outline.roots]
    if [normalize_title(s) for s in sections] != [normalize_title(n) for n in plan.nodes]:
        raise ValueError("plan nodes must equal the outline's first-level sections")
    schedule = topological_schedule(plan, cfg.max_parallel)
    order = schedule.order()
    trace = GenerationTrace(schedule)
    probe = _PeakCounter()
    lock = threading.Lock()
    completed: dict[str, SectionDraft] = {}

    def run(title: str) -> SectionDraft:
        with probe:
            with lock:
                trace.started.append(title)
            try:
                refs = section_references(gw, title, store, outline, cfg.reference_k) if len(store) else []
                return write_section(
                    gw, topic, title, outline, plan, refs, completed,
                    dependency_order=order, context_budget=cfg.context_budget,
                )
            except (ProviderError, EmptyStore) as exc:
                logger.error("section %r failed: %s", title, exc)
                return SectionDraft(title, PLACEHOLDER_BODY, {}, plan.predecessors(title), True, [str(exc)])

    with ThreadPoolExecutor(max_workers=cfg.max_parallel) as pool:
        for wave in schedule.waves:
            drafts = list(pool.map(run, wave))
            for d in drafts:
                completed[d.title] = d

    trace.peak_in_flight = probe.peak
    flags = ["partial"] if any(d.placeholder for d in completed.values()) else []
    if not len(store):
        flags.append("no references")
    article = renumber_citations(topic, [completed[s] for s in sections], flags)
    return article, trace
