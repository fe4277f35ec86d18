"""Command line entry point: build-index, generate, eval, plan-stats.

Exit codes: 0 success, 1 fatal error, 2 partial article.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path
from typing import Sequence

from .config import RunConfig
from .corpus import ingest_corpus
from .errors import EmptyCorpus, LongwriteError, StageFailed, UndefinedScore
from .evalkit import DEFAULT_K, FactualityInput, aggregate_plan_stats, f1_at_k, info_diversity, outline_f1
from .gateway import TermFrequencyEmbedder, read_jsonl
from .outline import parse_outline
from .pipeline import (
    EXIT_FATAL,
    EXIT_OK,
    build_gateway,
    load_index,
    run_pipeline,
    write_failure_report,
    write_outputs,
)
from .planner import WritingPlan, plan_metrics

logger = logging.getLogger("longwrite")


def format_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    def cell(v) -> str:
        return f"{v:.4f}" if isinstance(v, float) else str(v)

    body = [[cell(v) for v in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.rjust(w) if i else h.ljust(w) for i, (h, w) in enumerate(zip(headers, widths)))]
    lines.append("  ".join("-" * w for w in widths))
    for r in body:
        lines.append("  ".join(v.rjust(w) if i else v.ljust(w) for i, (v, w) in enumerate(zip(r, widths))).rstrip())
    return "\n".join(lines)


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False, sort_keys=True) + "\n"


def _load_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.mock_fixtures:
        cfg.use_mock_fixtures(args.mock_fixtures)
    if getattr(args, "out", None) and hasattr(cfg, "output_dir"):
        cfg.output_dir = args.out
    return cfg


def cmd_build_index(args) -> int:
    cfg = _load_config(args)
    corpus = Path(args.corpus)
    try:
        records = read_jsonl(corpus)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read corpus: {exc}", file=sys.stderr)
        return EXIT_FATAL
    gw = build_gateway(cfg)
    try:
        index, stats = ingest_corpus(records, gw.embedder, out_path=args.index)
    except EmptyCorpus as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    print(f"{stats.ingested} ingested, {stats.skipped} skipped")
    logger.info("index written to %s (%s)", args.index, index.metadata["embedder_id"])
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    gw = build_gateway(cfg)
    index = load_index(cfg, gw, args.index)
    try:
        result = run_pipeline(args.topic, cfg, gw, index)
    except StageFailed as exc:
        path = write_failure_report(exc.report, cfg.output_dir, args.topic)
        print(f"error: {exc} (partial report: {path})", file=sys.stderr)
        return EXIT_FATAL
    paths = write_outputs(result, cfg.output_dir)
    if args.figures:
        from .plotting import plot_plan_dag

        plot_plan_dag(result.plan, result.schedule, paths["plan"].with_suffix(".png"))
    status = "partial" if result.article.partial else "complete"
    print(f"{status} article: {paths['article']} ({result.cost.llm_calls} LLM calls)")
    return result.exit_code


_REFS_TAIL = re.compile(r"\n## References\n.*\Z", re.DOTALL)


def _generated_outline(gen_dir: Path, stem: str):
    sidecar = gen_dir / f"{stem}.json"
    if sidecar.exists():
        doc = json.loads(sidecar.read_text(encoding="utf-8"))
        if doc.get("outline"):
            return parse_outline(doc["outline"]), doc
    md = gen_dir / f"{stem}.md"
    if md.exists():
        return parse_outline(_REFS_TAIL.sub("", md.read_text(encoding="utf-8"))), None
    return None, None


def _load_factuality(path: str | None) -> dict[str, FactualityInput]:
    if not path:
        return {}
    p = Path(path)
    if p.suffix == ".jsonl":
        items = {r["topic"]: r for r in read_jsonl(p)}
    else:
        items = json.loads(p.read_text(encoding="utf-8"))
    from .pipeline import slugify

    return {
        slugify(name): FactualityInput(float(r["precision"]), int(r.get("claim_count", 0)), r.get("supported_count"))
        for name, r in items.items()
    }


def cmd_eval(args) -> int:
    gold_dir, gen_dir = Path(args.gold), Path(args.generated)
    gold_files = sorted(gold_dir.glob("*.md")) if gold_dir.is_dir() else []
    if not gold_files:
        print(f"error: no gold outlines in {gold_dir}", file=sys.stderr)
        return EXIT_FATAL
    facts = _load_factuality(args.factuality)
    topics = []
    for gold_path in gold_files:
        stem = gold_path.stem
        generated, sidecar = _generated_outline(gen_dir, stem)
        if generated is None:
            logger.warning("no generated output for %s", stem)
            continue
        try:
            score = outline_f1(generated, parse_outline(gold_path.read_text(encoding="utf-8")))
        except (UndefinedScore, LongwriteError) as exc:
            logger.warning("skipping %s: %s", stem, exc)
            continue
        row = {"topic": stem, **score.to_dict()}
        if stem in facts:
            f = facts[stem]
            row.update(precision_fact=f.precision, claims=f.claim_count, f1_at_k=f1_at_k(f, args.k))
        refs = (sidecar or {}).get("references") or []
        if len(refs) >= 2:
            texts = [f"{r['title']} {r.get('snippet', '')}" for r in refs]
            row["info_diversity"] = info_diversity(texts, TermFrequencyEmbedder.from_texts(texts))
        topics.append(row)
    if not topics:
        print("error: no topic matched between generated and gold directories", file=sys.stderr)
        return EXIT_FATAL

    def mean(key):
        vals = [t[key] for t in topics if key in t]
        return sum(vals) / len(vals) if vals else None

    aggregate = {k: mean(k) for k in ("recall", "precision", "f1", "f1_at_k", "info_diversity")}
    aggregate = {k: v for k, v in aggregate.items() if v is not None}
    report = {
        "topics": topics,
        "aggregate": {"count": len(topics), **aggregate},
        "k": args.k,
        "info_diversity_embedder": "term-frequency over the article's references",
    }
    headers = ["topic", "recall", "precision", "f1"]
    extra = [h for h in ("f1_at_k", "info_diversity") if h in aggregate]
    rows = [[t["topic"], t["recall"], t["precision"], t["f1"], *(t.get(h, "-") for h in extra)] for t in topics]
    rows.append(["MEAN", aggregate["recall"], aggregate["precision"], aggregate["f1"], *(aggregate[h] for h in extra)])
    table = format_table(headers + extra, rows)
    print(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "eval.json").write_text(_dump(report), encoding="utf-8")
        (out / "eval.txt").write_text(table + "\n", encoding="utf-8")
        if not args.no_figures:
            from .plotting import plot_outline_scores

            plot_outline_scores([(t["topic"], t["recall"], t["precision"], t["f1"]) for t in topics],
                                out / "eval.png")
    return EXIT_OK


def cmd_plan_stats(args) -> int:
    run_dir = Path(args.run_dir)
    files = sorted(run_dir.glob("*.plan.json")) if run_dir.is_dir() else []
    rows = []
    for f in files:
        try:
            doc = json.loads(f.read_text(encoding="utf-8"))
            plan = WritingPlan.from_dict(doc["plan"])
            rows.append((f.name[: -len(".plan.json")], plan_metrics(plan)))
        except (KeyError, ValueError, LongwriteError) as exc:
            logger.warning("skipping %s: %s", f, exc)
    if not rows:
        print(f"error: no plan files in {run_dir}", file=sys.stderr)
        return EXIT_FATAL
    summary = aggregate_plan_stats([m for _, m in rows])
    report = {
        "plans": {name: m.to_dict() for name, m in rows},
        "aggregate": summary.to_dict(),
        "longest_path_unit": "edges",
    }
    table_rows = [[n, m.node_count, m.edge_count, m.dependency_density, m.longest_path] for n, m in rows]
    table_rows.append(["MEAN", summary.mean_nodes, summary.mean_edges, summary.mean_density, summary.mean_longest_path])
    table = format_table(["article", "nodes", "edges", "density", "longest_path"], table_rows)
    print(table)
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "plan_stats.json").write_text(_dump(report), encoding="utf-8")
    (out / "plan_stats.txt").write_text(table + "\n", encoding="utf-8")
    if not args.no_figures:
        from .plotting import plot_plan_stats

        plot_plan_stats(rows, out / "plan_stats.png")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="longwrite", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def provider_flags(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--mock-fixtures", help="fixture directory; switches every provider to mock mode")

    p = sub.add_parser("build-index", help="ingest a JSONL outline corpus into an index")
    provider_flags(p)
    p.add_argument("--corpus", required=True, help="JSON Lines corpus (id, title, outline_text, summary)")
    p.add_argument("--out", dest="index", required=True, help="index file to write")
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("generate", help="generate an article for a topic")
    provider_flags(p)
    p.add_argument("--topic", required=True)
    p.add_argument("--out", help="output directory (overrides config output_dir)")
    p.add_argument("--index", help="corpus index file (overrides config corpus_index)")
    p.add_argument("--figures", action="store_true", help="also render the plan DAG as PNG")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score generated outlines against gold outlines")
    p.add_argument("--generated", required=True, help="directory of generated outputs")
    p.add_argument("--gold", required=True, help="directory of gold outline .md files")
    p.add_argument("--factuality", help="JSON or JSONL factuality records keyed by topic")
    p.add_argument("--k", type=int, default=DEFAULT_K, help="K for F1@K (default 300)")
    p.add_argument("--out", help="directory for eval.json, eval.txt and eval.png")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plan-stats", help="aggregate writing-plan graph metrics of a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", help="report directory (default: run_dir)")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_plan_stats)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except LongwriteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
