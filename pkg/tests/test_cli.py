from __future__ import annotations

import json

import pytest

from conftest import ALPHAFOLD_PLAN_REPLY, ALPHAFOLD_SECTIONS, SUITE_TOPIC
from longwrite.cli import format_table, main
from longwrite.evalkit import outline_f1
from longwrite.outline import parse_outline
from longwrite.planner import chain_plan, parse_plan

SLUG = "orrin-valley-funicular"


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
    return path


def corpus_rows(n):
    return [{"id": str(i), "title": f"Hill railway {i}", "summary": "a funicular railway",
             "outline_text": "# History\n# Operation\n# Legacy"} for i in range(n)]


def generate(suite_dir, out, *extra):
    return main(["generate", "--config", str(suite_dir / "config.json"), "--topic", SUITE_TOPIC,
                 "--out", str(out), *extra])


def test_build_index_three_records(tmp_path, suite_dir, capsys):
    corpus = write_jsonl(tmp_path / "c.jsonl", corpus_rows(3))
    rc = main(["build-index", "--mock-fixtures", str(suite_dir), "--corpus", str(corpus),
               "--out", str(tmp_path / "i.json")])
    assert rc == 0
    assert capsys.readouterr().out.strip() == "3 ingested, 0 skipped"


def test_build_index_empty_file(tmp_path, suite_dir):
    corpus = tmp_path / "empty.jsonl"
    corpus.write_text("")
    rc = main(["build-index", "--mock-fixtures", str(suite_dir), "--corpus", str(corpus),
               "--out", str(tmp_path / "i.json")])
    assert rc == 1 and not (tmp_path / "i.json").exists()


def test_built_index_feeds_generate(tmp_path, suite_dir):
    corpus = write_jsonl(tmp_path / "c.jsonl", corpus_rows(100))
    index = tmp_path / "i.json"
    assert main(["build-index", "--mock-fixtures", str(suite_dir), "--corpus", str(corpus), "--out", str(index)]) == 0
    assert generate(suite_dir, tmp_path / "out", "--index", str(index)) == 0
    report = json.loads((tmp_path / "out" / f"{SLUG}.run.json").read_text())
    assert len(report["exemplars"]) == 3 and report["exemplars"][0].startswith("Hill railway")


def test_generate_writes_five_files(tmp_path, suite_dir):
    out = tmp_path / "out"
    assert generate(suite_dir, out, "--figures") == 0
    for suffix in (".md", ".json", ".run.json", ".plan.json", ".cost.json", ".plan.png"):
        assert (out / f"{SLUG}{suffix}").is_file()
    cost = json.loads((out / f"{SLUG}.cost.json").read_text())
    sidecar = json.loads((out / f"{SLUG}.json").read_text())
    assert cost["llm_calls"] == len(sidecar["transcript"])


def test_generate_twice_is_byte_identical(tmp_path, suite_dir):
    generate(suite_dir, tmp_path / "a")
    generate(suite_dir, tmp_path / "b")
    for suffix in (".md", ".json", ".plan.json"):
        assert (tmp_path / "a" / f"{SLUG}{suffix}").read_bytes() == (tmp_path / "b" / f"{SLUG}{suffix}").read_bytes()


def test_generate_partial_exit_code(tmp_path, suite_dir):
    with open(suite_dir / "chat.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"template": "SectionWriting", "key": "Legacy", "error": "permanent"}) + "\n")
    out = tmp_path / "out"
    assert generate(suite_dir, out) == 2
    sidecar = json.loads((out / f"{SLUG}.json").read_text())
    assert sidecar["partial"] is True and "partial" in sidecar["flags"]
    assert "# Legacy" in (out / f"{SLUG}.md").read_text()


def test_generate_fatal_exit_code(tmp_path, suite_dir):
    with open(suite_dir / "chat.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps({"template": "RagOutlineGeneration", "key": SUITE_TOPIC, "error": "down"}) + "\n")
    out = tmp_path / "out"
    assert generate(suite_dir, out) == 1
    report = json.loads((out / f"{SLUG}.run.json").read_text())
    assert report["failed_stage"] == "generate_initial_outline" and report["exit_code"] == 1
    assert not (out / f"{SLUG}.md").exists()


def test_generate_bad_config(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"chat": {"mode": "mock"}, "bogus": 1}))
    assert main(["generate", "--config", str(cfg), "--topic", "x", "--out", str(tmp_path)]) == 1


def test_eval_self_vs_self(tmp_path, suite_dir, capsys):
    out = tmp_path / "out"
    generate(suite_dir, out)
    gold = tmp_path / "gold"
    gold.mkdir()
    sidecar = json.loads((out / f"{SLUG}.json").read_text())
    (gold / f"{SLUG}.md").write_text(sidecar["outline"])
    rc = main(["eval", "--generated", str(out), "--gold", str(gold), "--out", str(tmp_path / "ev")])
    assert rc == 0
    report = json.loads((tmp_path / "ev" / "eval.json").read_text())
    assert report["topics"][0]["f1"] == 1.0 and report["aggregate"]["f1"] == 1.0
    assert (tmp_path / "ev" / "eval.png").is_file() and (tmp_path / "ev" / "eval.txt").is_file()


def test_eval_matches_evalkit_and_factuality(tmp_path):
    gen, gold = tmp_path / "gen", tmp_path / "gold"
    gen.mkdir()
    gold.mkdir()
    (gen / "tides.md").write_text("# Causes\n\ntext [1]\n\n# Myths\n\n## References\n\n1. a — https://a.example.com/\n")
    (gold / "tides.md").write_text("# Causes\n# Prediction\n# Ecology")
    (tmp_path / "fact.json").write_text(json.dumps({"Tides": {"precision": 0.5, "claim_count": 300}}))
    rc = main(["eval", "--generated", str(gen), "--gold", str(gold), "--factuality", str(tmp_path / "fact.json"),
               "--out", str(tmp_path / "ev"), "--no-figures"])
    assert rc == 0
    row = json.loads((tmp_path / "ev" / "eval.json").read_text())["topics"][0]
    expected = outline_f1(parse_outline("# Causes\n# Myths"), parse_outline("# Causes\n# Prediction\n# Ecology"))
    assert (row["recall"], row["precision"], row["f1"]) == (expected.recall, expected.precision, expected.f1)
    assert row["f1_at_k"] == pytest.approx(0.5)


def test_eval_missing_gold_or_no_match(tmp_path):
    (tmp_path / "gen").mkdir()
    (tmp_path / "gold").mkdir()
    assert main(["eval", "--generated", str(tmp_path / "gen"), "--gold", str(tmp_path / "gold")]) == 1
    (tmp_path / "gold" / "x.md").write_text("# A")
    assert main(["eval", "--generated", str(tmp_path / "gen"), "--gold", str(tmp_path / "gold")]) == 1


def _plan_file(path, plan):
    path.write_text(json.dumps({"plan": plan.to_dict()}))


def test_plan_stats_chain_and_alphafold(tmp_path, capsys):
    _plan_file(tmp_path / "chain.plan.json", chain_plan(["A", "B", "C", "D"]))
    _plan_file(tmp_path / "alphafold.plan.json", parse_plan(ALPHAFOLD_PLAN_REPLY, ALPHAFOLD_SECTIONS).plan)
    assert main(["plan-stats", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "plan_stats.json").read_text())
    assert report["plans"]["chain"]["dependency_density"] == 1.0
    assert report["plans"]["alphafold"] == {"nodes": 11, "edges": 12, "dependency_density": 1.2,
                                           "longest_path_edges": 6}
    assert (tmp_path / "plan_stats.png").is_file()
    assert "alphafold" in (tmp_path / "plan_stats.txt").read_text()


def test_plan_stats_empty_dir(tmp_path):
    assert main(["plan-stats", str(tmp_path)]) == 1


def test_plan_stats_on_generated_run(tmp_path, suite_dir):
    generate(suite_dir, tmp_path)
    assert main(["plan-stats", str(tmp_path), "--no-figures"]) == 0
    row = json.loads((tmp_path / "plan_stats.json").read_text())["plans"][SLUG]
    assert row == {"nodes": 5, "edges": 5, "dependency_density": 1.25, "longest_path_edges": 3}


def test_format_table_alignment():
    table = format_table(["name", "x"], [["a", 1.0], ["long name", 22]])
    lines = table.splitlines()
    assert lines[2] == "a          1.0000"
    assert len({len(line) for line in lines}) == 1


def test_run_report_records_decoding_settings(tmp_path, suite_dir):
    cfg = json.loads((suite_dir / "config.json").read_text())
    cfg.update(retry_attempts=5)
    cfg["chat"]["temperature"] = 0.3
    (suite_dir / "config.json").write_text(json.dumps(cfg))
    generate(suite_dir, tmp_path)
    report = json.loads((tmp_path / f"{SLUG}.run.json").read_text())
    assert report["decoding"]["temperature"] == 0.3 and report["decoding"]["retry_attempts"] == 5
