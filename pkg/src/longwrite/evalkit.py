"""Evaluation metrics: outline title F1, F1@K factuality, info diversity, plan and cost summaries."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from statistics import fmean
from typing import Sequence

import numpy as np

from .errors import EmptyList, FewerThanTwo, UndefinedScore
from .gateway.core import CallCounter, Embedder, normalize_rows
from .outline import Outline, normalize_title
from .planner import PlanMetrics

DEFAULT_K = 300


@dataclass(frozen=True)
class OutlineScore:
    recall: float
    precision: float
    f1: float
    matched: list[tuple[str, str]] = field(default_factory=list, compare=False)

    def to_dict(self) -> dict:
        return {"recall": self.recall, "precision": self.precision, "f1": self.f1, "matched": len(self.matched)}


def harmonic_mean(a: float, b: float) -> float:
    return 0.0 if a + b == 0 else 2 * a * b / (a + b)


def title_f1(generated: Sequence[str], gold: Sequence[str]) -> OutlineScore:
    """Multiset string-match F1 over normalized titles.

    Raises:
        UndefinedScore: if ``gold`` is empty.
    """
    if not gold:
        raise UndefinedScore("gold outline has no titles")
    gen_keys = [normalize_title(t) for t in generated]
    gold_keys = [normalize_title(t) for t in gold]
    overlap = Counter(gen_keys) & Counter(gold_keys)
    n_match = sum(overlap.values())
    recall = n_match / len(gold_keys)
    precision = n_match / len(gen_keys) if gen_keys else 0.0

    unused: dict[str, list[str]] = {}
    for t, k in zip(gold, gold_keys):
        unused.setdefault(k, []).append(t)
    matched = []
    for t, k in zip(generated, gen_keys):
        if unused.get(k):
            matched.append((t, unused[k].pop(0)))
    return OutlineScore(recall, precision, harmonic_mean(recall, precision), matched)


def outline_f1(generated: Outline, gold: Outline) -> OutlineScore:
    """Title-alignment F1 between two outlines, titles taken at every level."""
    return title_f1(generated.titles(), gold.titles())


@dataclass(frozen=True)
class FactualityInput:
    precision: float
    claim_count: int = 0
    supported_count: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.precision <= 1.0:
            raise ValueError("precision must lie in [0, 1]")
        if self.claim_count < 0:
            raise ValueError("claim_count must be >= 0")
        if self.supported_count is not None and not 0 <= self.supported_count <= self.claim_count:
            raise ValueError("supported_count must lie in [0, claim_count]")

    @property
    def supported(self) -> float:
        if self.supported_count is not None:
            return float(self.supported_count)
        return self.precision * self.claim_count


def f1_at_k(fact: FactualityInput, k: int = DEFAULT_K) -> float:
    """Harmonic mean of factual precision and recall@K = min(supported / K, 1)."""
    if k < 1:
        raise ValueError("K must be >= 1")
    recall = min(fact.supported / k, 1.0)
    return harmonic_mean(fact.precision, recall)


def info_diversity(reference_texts: Sequence[str], embedder: Embedder) -> float:
    """One minus the mean pairwise cosine similarity, clipped to [0, 1].

    Raises:
        FewerThanTwo: for fewer than two texts.
    """
    if len(reference_texts) < 2:
        raise FewerThanTwo("info diversity needs at least two texts")
    m = normalize_rows(embedder.embed_raw(list(reference_texts)))
    sims = m @ m.T
    iu = np.triu_indices(len(reference_texts), k=1)
    return float(np.clip(1.0 - sims[iu].mean(), 0.0, 1.0))


@dataclass(frozen=True)
class PlanSummary:
    count: int
    mean_nodes: float
    mean_edges: float
    mean_density: float
    mean_longest_path: float

    def to_dict(self) -> dict:
        return {
            "plans": self.count,
            "mean_nodes": self.mean_nodes,
            "mean_edges": self.mean_edges,
            "mean_dependency_density": self.mean_density,
            "mean_longest_path_edges": self.mean_longest_path,
        }


def aggregate_plan_stats(metrics: Sequence[PlanMetrics]) -> PlanSummary:
    if not metrics:
        raise EmptyList("no plan metrics to aggregate")
    return PlanSummary(
        len(metrics),
        fmean(m.node_count for m in metrics),
        fmean(m.edge_count for m in metrics),
        fmean(m.dependency_density for m in metrics),
        fmean(m.longest_path for m in metrics),
    )


@dataclass
class CostReport:
    llm_calls: int
    prompt_tokens: int
    reply_tokens: int
    search_calls: int
    embed_calls: int
    calls_by_template: dict[str, int]
    wall_time: dict[str, float]

    @classmethod
    def from_counter(cls, counter: CallCounter, wall_time: dict[str, float]) -> CostReport:
        recs = counter.snapshot()
        return cls(
            llm_calls=len(recs),
            prompt_tokens=sum(r.prompt_tokens for r in recs),
            reply_tokens=sum(r.reply_tokens for r in recs),
            search_calls=counter.search_calls,
            embed_calls=counter.embed_calls,
            calls_by_template=counter.by_template(),
            wall_time=dict(wall_time),
        )

    def to_dict(self) -> dict:
        return {
            "llm_calls": self.llm_calls,
            "prompt_tokens": self.prompt_tokens,
            "reply_tokens": self.reply_tokens,
            "total_tokens": self.prompt_tokens + self.reply_tokens,
            "search_calls": self.search_calls,
            "embed_calls": self.embed_calls,
            "calls_by_template": dict(sorted(self.calls_by_template.items())),
            "wall_time_s": self.wall_time,
            "token_estimate": "whitespace tokens x 1.3",
        }

