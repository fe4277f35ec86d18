"""End-to-end article generation and its on-disk outputs."""

from __future__ import annotations

import json
import logging
import re
import time
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .config import ProviderConfig, RunConfig
from .corpus import CorpusIndex, ingest_corpus
from .discovery import DiscoveryConfig, DiscoveryResult, discovery_loop
from .errors import ConfigError
from .evalkit import CostReport
from .gateway import (
    Gateway,
    GoogleSearch,
    HttpChat,
    HttpEmbedder,
    MockChat,
    MockSearch,
    RetryPolicy,
    TemplateId,
    fixture_embedder,
    read_jsonl,
)
from .outline import render_outline
from .planner import PlanMetrics, Schedule, WritingPlan, generate_plan, plan_metrics, topological_schedule
from .writer import Article, GenerationTrace, WriterConfig, generate_article

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2


def slugify(topic: str) -> str:
    s = unicodedata.normalize("NFKD", topic).encode("ascii", "ignore").decode()
    s = re.sub(r"[^a-z0-9]+", "-", s.lower()).strip("-")
    return s or "topic"


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def _embedder(p: ProviderConfig, role: str, cfg: RunConfig, retry: RetryPolicy):
    if p.mode == "mock":
        return fixture_embedder(Path(cfg.mock_fixtures))
    return HttpEmbedder(p.base_url, p.model, p.api_key(role), timeout=p.timeout, retry=retry)


def build_gateway(cfg: RunConfig) -> Gateway:
    cfg.validate()
    retry = RetryPolicy(cfg.retry_attempts, cfg.retry_backoff)
    fixtures = Path(cfg.mock_fixtures) if cfg.mock_fixtures else None

    if cfg.chat.mode == "mock":
        chat = MockChat.from_file(fixtures / "chat.jsonl")
    else:
        chat = HttpChat(
            cfg.chat.base_url, cfg.chat.model, cfg.chat.api_key("chat"),
            temperature=cfg.chat.temperature, timeout=cfg.chat.timeout, retry=retry,
        )
    if cfg.search.mode == "mock":
        search = MockSearch.from_file(fixtures / "search.jsonl", jitter=cfg.mock_search_jitter)
    else:
        key = cfg.search.api_key("search")
        if not key:
            raise ConfigError("search: no API key in environment")
        kw = {"endpoint": cfg.search.base_url} if cfg.search.base_url else {}
        search = GoogleSearch(key, cfg.search.engine_id, timeout=cfg.search.timeout, retry=retry, **kw)
    embedder = _embedder(cfg.embed, "embed", cfg, retry)
    ref_embedder = (
        _embedder(cfg.reference_embed, "embed", cfg, retry) if cfg.reference_embed is not None else None
    )
    return Gateway(
        chat,
        search,
        embedder,
        ref_embedder,
        search_k=cfg.search_k,
        exclusions=cfg.exclusions,
        max_in_flight={
            "chat": cfg.chat.max_in_flight,
            "search": cfg.search.max_in_flight,
            "embed": cfg.embed.max_in_flight,
        },
    )


def load_index(cfg: RunConfig, gw: Gateway, path: str | None = None) -> CorpusIndex | None:
    """Load the configured index, or build one in memory from the fixture corpus."""
    path = path or cfg.corpus_index
    if path:
        return CorpusIndex.load(path)
    if cfg.mock_fixtures and (Path(cfg.mock_fixtures) / "corpus.jsonl").exists():
        records = read_jsonl(Path(cfg.mock_fixtures) / "corpus.jsonl")
        index, _ = ingest_corpus(records, gw.embedder, built_at="fixture")
        return index
    return None


@dataclass
class RunResult:
    topic: str
    discovery: DiscoveryResult
    plan: WritingPlan
    plan_info: dict
    schedule: Schedule
    metrics: PlanMetrics
    article: Article
    trace: GenerationTrace
    cost: CostReport
    transcript: list[dict] = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_PARTIAL if self.article.partial else EXIT_OK


def ordered_transcript(gw: Gateway, schedule: Schedule) -> list[dict]:
    """Call records in a completion-order-independent sequence.

    Sequential stages keep call order; concurrent section writes are listed
    in schedule order.
    """
    records = gw.counter.snapshot()
    pos = {t: i for i, t in enumerate(schedule.order())}
    seq = [r for r in records if r.template_id != TemplateId.SECTION_WRITING.value]
    sections = sorted(
        (r for r in records if r.template_id == TemplateId.SECTION_WRITING.value),
        key=lambda r: pos.get(r.tag or "", len(pos)),
    )
    return [r.to_dict() for r in seq + sections]


def run_pipeline(
    topic: str,
    cfg: RunConfig,
    gw: Gateway | None = None,
    index: CorpusIndex | None = None,
) -> RunResult:
    """Discovery, planning and writing for one topic.

    Raises:
        StageFailed: when discovery aborts; ``exc.report`` holds the partial report.
    """
    gw = gw or build_gateway(cfg)
    if index is None:
        index = load_index(cfg, gw)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    dcfg = DiscoveryConfig(
        max_iterations=cfg.max_iterations,
        max_total_queries=cfg.max_total_queries,
        query_cap=cfg.query_cap,
        n_exemplars=cfg.n_exemplars,
        search_k=cfg.search_k,
        max_in_flight=cfg.search.max_in_flight,
        preloaded_attributes=list(cfg.preloaded_attributes),
        decoding={
            "temperature": cfg.chat.temperature,
            "retry_attempts": cfg.retry_attempts,
            "retry_backoff_s": cfg.retry_backoff,
            "chat_mode": cfg.chat.mode,
        },
    )
    disc = discovery_loop(gw, topic, dcfg, index)
    timings["discovery"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    plan, plan_info = generate_plan(gw, topic, disc.outline)
    schedule = topological_schedule(plan, cfg.max_parallel)
    metrics = plan_metrics(plan)
    timings["planning"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    wcfg = WriterConfig(cfg.max_parallel, cfg.reference_k, cfg.context_budget)
    article, trace = generate_article(gw, topic, disc.outline, plan, disc.store, wcfg)
    timings["writing"] = time.perf_counter() - t0
    timings["total"] = sum(timings.values())

    cost = CostReport.from_counter(gw.counter, timings)
    return RunResult(
        topic, disc, plan, plan_info, schedule, metrics, article, trace, cost, ordered_transcript(gw, schedule)
    )


def output_paths(out_dir: str | Path, topic: str) -> dict[str, Path]:
    out = Path(out_dir)
    slug = slugify(topic)
    return {
        "article": out / f"{slug}.md",
        "sidecar": out / f"{slug}.json",
        "run_report": out / f"{slug}.run.json",
        "plan": out / f"{slug}.plan.json",
        "cost": out / f"{slug}.cost.json",
    }


def write_outputs(result: RunResult, out_dir: str | Path) -> dict[str, Path]:
    paths = output_paths(out_dir, result.topic)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    art = result.article
    sidecar = {
        "topic": result.topic,
        "outline": render_outline(result.discovery.outline),
        **art.to_dict(),
        "references": result.discovery.store.to_list(),
        "transcript": result.transcript,
    }
    run_report = {
        **result.discovery.report,
        "plan": {**result.plan.to_dict(), **result.plan_info},
        "schedule": result.schedule.to_dict(),
        "partial": art.partial,
        "article_flags": art.flags,
        "section_warnings": {s.title: s.warnings for s in art.sections if s.warnings},
        "exit_code": result.exit_code,
    }
    plan_doc = {
        "topic": result.topic,
        "plan": result.plan.to_dict(),
        "metrics": result.metrics.to_dict(),
        "schedule": result.schedule.to_dict(),
        "longest_path_unit": "edges",
    }
    paths["article"].write_text(art.to_markdown(), encoding="utf-8")
    paths["sidecar"].write_text(_dump(sidecar), encoding="utf-8")
    paths["run_report"].write_text(_dump(run_report), encoding="utf-8")
    paths["plan"].write_text(_dump(plan_doc), encoding="utf-8")
    paths["cost"].write_text(_dump(result.cost.to_dict()), encoding="utf-8")
    return paths


def write_failure_report(report: dict, out_dir: str | Path, topic: str) -> Path:
    path = output_paths(out_dir, topic)["run_report"]
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    path.write_text(_dump({**report, "exit_code": EXIT_FATAL}), encoding="utf-8")
    return path
