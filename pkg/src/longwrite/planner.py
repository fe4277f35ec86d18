"""Writing plans: dependency DAGs over first-level sections, their schedule and metrics."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import CycleError, ParseFailure
from .gateway import PLAN_EXAMPLE, Gateway, TemplateId
from .outline import Outline, first_level_sections, normalize_title, render_outline

logger = logging.getLogger(__name__)

DEFAULT_MAX_PARALLEL = 3


@dataclass
class WritingPlan:
    """Nodes in outline order; an edge ``(u, v)`` means u is written before v."""

    nodes: list[str]
    edges: set[tuple[str, str]] = field(default_factory=set)
    origin: str = "llm"

    def __post_init__(self) -> None:
        if len(set(self.nodes)) != len(self.nodes):
            raise ValueError("duplicate plan nodes")
        members = set(self.nodes)
        self.edges = set(self.edges)
        for u, v in self.edges:
            if u not in members or v not in members:
                raise ValueError(f"edge ({u!r}, {v!r}) references an unknown node")
            if u == v:
                raise ValueError(f"self edge on {u!r}")
        if self.origin not in ("llm", "fallback_parallel"):
            raise ValueError(f"bad origin {self.origin!r}")

    def predecessors(self, node: str) -> list[str]:
        order = {n: i for i, n in enumerate(self.nodes)}
        return sorted((u for u, v in self.edges if v == node), key=order.__getitem__)

    def sorted_edges(self) -> list[tuple[str, str]]:
        order = {n: i for i, n in enumerate(self.nodes)}
        return sorted(self.edges, key=lambda e: (order[e[0]], order[e[1]]))

    def is_acyclic(self) -> bool:
        try:
            topological_waves(self)
        except CycleError:
            return False
        return True

    def to_dict(self) -> dict:
        return {"nodes": list(self.nodes), "edges": [list(e) for e in self.sorted_edges()], "origin": self.origin}

    @classmethod
    def from_dict(cls, d: dict) -> WritingPlan:
        return cls(list(d["nodes"]), {tuple(e) for e in d.get("edges", [])}, d.get("origin", "llm"))


def fallback_plan(sections: Sequence[str]) -> WritingPlan:
    return WritingPlan(list(sections), set(), "fallback_parallel")


@dataclass
class PlanParse:
    plan: WritingPlan
    parsed_lines: int
    dropped_titles: int


_ARROW = re.compile(r"\s*<-\s*")
_LINE_PREFIX = re.compile(r"^\s*(?:[-*•]\s+|\d+[.)]\s+)?")


def _split_targets(text: str) -> list[str]:
    return [t.strip().strip("'\"").strip() for t in text.split(",") if t.strip()]


def parse_plan(text: str, sections: Sequence[str]) -> PlanParse:
    """Parse a plan reply into a :class:`WritingPlan` over ``sections``.

    Two line forms are accepted:

    * ``S <- D1 <- D2``: D1 and D2 are written before S;
    * ``S: T1, T2``: S is written before T1 and T2.

    ``None`` contributes no edge. Titles are matched after normalization;
    unknown titles are dropped and counted. The result may contain cycles.

    Raises:
        ParseFailure: if no line parses.
    """
    if not sections:
        raise ValueError("sections must be nonempty")
    lookup = {normalize_title(s): s for s in sections}

    dropped = 0

    def resolve(title: str) -> str | None:
        nonlocal dropped
        key = normalize_title(title.strip().strip("'\"`*"))
        if key in ("none", ""):
            return None
        if key not in lookup:
            dropped += 1
            return None
        return lookup[key]

    edges: set[tuple[str, str]] = set()
    parsed = 0
    for raw in text.splitlines():
        line = _LINE_PREFIX.sub("", raw).strip()
        if not line:
            continue
        if "<-" in line:
            head, *deps = _ARROW.split(line)
            target = resolve(head)
            if target is None:
                continue
            parsed += 1
            for chunk in deps:
                for d in _split_targets(chunk):
                    src = resolve(d)
                    if src is not None and src != target:
                        edges.add((src, target))
        elif ":" in line:
            head, _, rest = line.partition(":")
            source = resolve(head)
            if source is None:
                continue
            parsed += 1
            for t in _split_targets(rest):
                dst = resolve(t)
                if dst is not None and dst != source:
                    edges.add((source, dst))
    if parsed == 0:
        raise ParseFailure("no plan line parsed")
    return PlanParse(WritingPlan(list(sections), edges, "llm"), parsed, dropped)


def generate_plan(gw: Gateway, topic: str, outline: Outline) -> tuple[WritingPlan, dict]:
    """Ask for a writing plan; fall back to an edgeless plan on parse failure or cycle.

    Returns the plan and a small diagnostics record.
    """
    sections = first_level_sections(outline)
    if not sections:
        raise ValueError("outline has no first-level section")
    reply = gw.complete(
        TemplateId.PLAN_GENERATION,
        {"topic": topic, "outline": render_outline(outline), "example": PLAN_EXAMPLE},
    )
    info: dict = {"raw_reply_lines": len(reply.splitlines())}
    try:
        parsed = parse_plan(reply, sections)
    except ParseFailure:
        logger.warning("plan reply unparseable; using parallel fallback")
        info["fallback_reason"] = "parse_failure"
        return fallback_plan(sections), info
    info["dropped_titles"] = parsed.dropped_titles
    if not parsed.plan.is_acyclic():
        logger.warning("plan reply is cyclic; using parallel fallback")
        info["fallback_reason"] = "cycle"
        return fallback_plan(sections), info
    return parsed.plan, info


def topological_waves(plan: WritingPlan) -> list[list[str]]:
    """Kahn layering; each wave lists its nodes in outline order.

    Raises:
        CycleError: if the plan has a cycle.
    """
    indeg = {n: 0 for n in plan.nodes}
    succ: dict[str, list[str]] = {n: [] for n in plan.nodes}
    for u, v in plan.edges:
        indeg[v] += 1
        succ[u].append(v)
    order = {n: i for i, n in enumerate(plan.nodes)}
    wave = [n for n in plan.nodes if indeg[n] == 0]
    waves: list[list[str]] = []
    seen = 0
    while wave:
        waves.append(wave)
        seen += len(wave)
        nxt = []
        for u in wave:
            for v in succ[u]:
                indeg[v] -= 1
                if indeg[v] == 0:
                    nxt.append(v)
        wave = sorted(nxt, key=order.__getitem__)
    if seen != len(plan.nodes):
        stuck = [n for n in plan.nodes if indeg[n] > 0]
        raise CycleError(f"plan has a cycle through {stuck}")
    return waves


@dataclass
class Schedule:
    waves: list[list[str]]
    max_parallel: int = DEFAULT_MAX_PARALLEL

    def batches(self) -> list[list[list[str]]]:
        """Per wave, consecutive chunks of at most ``max_parallel`` titles."""
        p = self.max_parallel
        return [[w[i : i + p] for i in range(0, len(w), p)] for w in self.waves]

    def wave_of(self) -> dict[str, int]:
        return {n: i for i, w in enumerate(self.waves) for n in w}

    def order(self) -> list[str]:
        return [n for w in self.waves for n in w]

    def to_dict(self) -> dict:
        return {"waves": self.waves, "max_parallel": self.max_parallel}


def topological_schedule(plan: WritingPlan, max_parallel: int = DEFAULT_MAX_PARALLEL) -> Schedule:
    if max_parallel < 1:
        raise ValueError("max_parallel must be >= 1")
    return Schedule(topological_waves(plan), max_parallel)


@dataclass(frozen=True)
class PlanMetrics:
    node_count: int
    edge_count: int
    dependency_density: float
    longest_path: int

    def to_dict(self) -> dict:
        return {
            "nodes": self.node_count,
            "edges": self.edge_count,
            "dependency_density": self.dependency_density,
            "longest_path_edges": self.longest_path,
        }

    @classmethod
    def from_dict(cls, d: dict) -> PlanMetrics:
        return cls(int(d["nodes"]), int(d["edges"]), float(d["dependency_density"]), int(d["longest_path_edges"]))


def dependency_density(node_count: int, edge_count: int) -> float:
    """Edges over the edge count of a chain through all nodes; 0 for n <= 1."""
    if node_count <= 1:
        return 0.0
    return edge_count / (node_count - 1)


def plan_metrics(plan: WritingPlan) -> PlanMetrics:
    """Size, dependency density and longest path (counted in edges)."""
    waves = topological_waves(plan)
    depth = {n: 0 for n in plan.nodes}
    succ: dict[str, list[str]] = {n: [] for n in plan.nodes}
    for u, v in plan.edges:
        succ[u].append(v)
    for wave in waves:
        for u in wave:
            for v in succ[u]:
                depth[v] = max(depth[v], depth[u] + 1)
    n, m = len(plan.nodes), len(plan.edges)
    return PlanMetrics(n, m, dependency_density(n, m), max(depth.values(), default=0))


def chain_plan(titles: Iterable[str]) -> WritingPlan:
    titles = list(titles)
    return WritingPlan(titles, set(zip(titles, titles[1:])))
