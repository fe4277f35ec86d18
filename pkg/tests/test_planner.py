from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ALPHAFOLD_PLAN_REPLY, ALPHAFOLD_SECTIONS, make_gateway
from longwrite.errors import CycleError, ParseFailure
from longwrite.outline import parse_outline
from longwrite.planner import (
    PlanMetrics,
    WritingPlan,
    chain_plan,
    dependency_density,
    fallback_plan,
    generate_plan,
    parse_plan,
    plan_metrics,
    topological_schedule,
    topological_waves,
)
from oracles import all_paths_longest, has_cycle, random_dag

SECTIONS = ["Intro", "History", "Design", "Legacy"]


def test_arrow_form():
    p = parse_plan("History <- Intro\nLegacy <- History <- Design\nIntro <- None", SECTIONS)
    assert p.plan.edges == {("Intro", "History"), ("History", "Legacy"), ("Design", "Legacy")}
    assert p.parsed_lines == 3


def test_colon_form_with_trailing_comma_and_none():
    p = parse_plan("1. Intro: History,\n- History: Design,Legacy\nLegacy: None", SECTIONS)
    assert p.plan.edges == {("Intro", "History"), ("History", "Design"), ("History", "Legacy")}


def test_unknown_title_dropped_rest_kept():
    p = parse_plan("Intro: History, Nonexistent\nGhost: Legacy", SECTIONS)
    assert p.plan.edges == {("Intro", "History")}
    assert p.dropped_titles == 2


def test_titles_matched_after_normalization():
    p = parse_plan("2. history: legacy", SECTIONS)
    assert p.plan.edges == {("History", "Legacy")}


def test_unparseable_plan():
    with pytest.raises(ParseFailure):
        parse_plan("I cannot produce a plan.", SECTIONS)


def test_plan_validation():
    with pytest.raises(ValueError):
        WritingPlan(["A", "A"])
    with pytest.raises(ValueError):
        WritingPlan(["A"], {("A", "B")})
    with pytest.raises(ValueError):
        WritingPlan(["A"], {("A", "A")})


def _plan_gw(reply):
    return make_gateway([{"template": "PlanGeneration", "response": reply}])


def test_generate_plan_falls_back_on_cycle():
    outline = parse_outline("# Intro\n# History\n# Design")
    plan, info = generate_plan(_plan_gw("Intro <- History\nHistory <- Intro"), "T", outline)
    assert plan == fallback_plan(["Intro", "History", "Design"]) and info["fallback_reason"] == "cycle"
    assert topological_schedule(plan).waves == [["Intro", "History", "Design"]]


def test_generate_plan_falls_back_on_garbage():
    plan, info = generate_plan(_plan_gw("no idea"), "T", parse_outline("# A\n# B"))
    assert plan.origin == "fallback_parallel" and info["fallback_reason"] == "parse_failure"


def test_generate_plan_prompt_has_example():
    gw = _plan_gw("B <- A")
    plan, _ = generate_plan(gw, "T", parse_outline("# A\n## a1\n# B"))
    assert plan.edges == {("A", "B")}
    prompt = gw.chat_provider.transcript[0]["prompt"]
    assert "<-" in prompt and "# A\n## a1\n# B" in prompt


def test_waves_keep_outline_order():
    plan = WritingPlan(["A", "B", "C", "D"], {("D", "B"), ("A", "C")})
    assert topological_waves(plan) == [["A", "D"], ["B", "C"]]


def test_cycle_error():
    with pytest.raises(CycleError):
        topological_waves(WritingPlan(["A", "B"], {("A", "B"), ("B", "A")}))


def test_batches_respect_max_parallel():
    sched = topological_schedule(fallback_plan([f"S{i}" for i in range(7)]), 3)
    assert [len(b) for b in sched.batches()[0]] == [3, 3, 1]
    with pytest.raises(ValueError):
        topological_schedule(fallback_plan(["A"]), 0)


@pytest.mark.parametrize("n", range(2, 11))
def test_chain_density_is_one(n):
    m = plan_metrics(chain_plan([f"S{i}" for i in range(n)]))
    assert m.dependency_density == 1.0 and m.longest_path == n - 1


def test_density_degenerate():
    assert dependency_density(0, 0) == 0.0 and dependency_density(1, 0) == 0.0
    assert plan_metrics(fallback_plan(["A"])) == PlanMetrics(1, 0, 0.0, 0)


def test_metrics_round_trip():
    m = PlanMetrics(11, 12, 1.2, 6)
    assert PlanMetrics.from_dict(m.to_dict()) == m


def alphafold_plan() -> WritingPlan:
    return parse_plan(ALPHAFOLD_PLAN_REPLY, ALPHAFOLD_SECTIONS).plan


def test_alphafold_metrics_against_enumeration():
    plan = alphafold_plan()
    m = plan_metrics(plan)
    assert (m.node_count, m.edge_count) == (11, 12)
    assert m.dependency_density == 1.2
    assert m.longest_path == 6 == all_paths_longest(plan.nodes, plan.edges)


def test_alphafold_schedule():
    plan = alphafold_plan()
    sched = topological_schedule(plan)
    assert sched.waves[0] == ["Background"]
    wave = sched.wave_of()
    for node in plan.nodes:
        for dep in plan.predecessors(node):
            assert wave[dep] < wave[node]


def test_alphafold_plan_from_outline_fixture(alphafold_outline):
    gw = _plan_gw(ALPHAFOLD_PLAN_REPLY)
    plan, info = generate_plan(gw, "AlphaFold", alphafold_outline)
    assert plan == alphafold_plan() and info["dropped_titles"] == 0


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_dag_schedule_and_metrics(seed):
    nodes, edges = random_dag(random.Random(seed))
    plan = WritingPlan(nodes, edges)
    sched = topological_schedule(plan)
    wave = sched.wave_of()
    assert sorted(wave) == sorted(nodes)
    assert all(wave[u] < wave[v] for u, v in edges)
    m = plan_metrics(plan)
    assert m.longest_path == all_paths_longest(nodes, edges)
    assert len(sched.waves) == m.longest_path + 1


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_plan_reply_cycle_detection(seed):
    rng = random.Random(seed)
    nodes = [f"S{i}" for i in range(rng.randint(2, 8))]
    edges = {(a, b) for a in nodes for b in nodes if a != b and rng.random() < 0.2}
    if not edges:
        edges = {(nodes[0], nodes[1])}
    reply = "\n".join(f"{u}: {v}" for u, v in sorted(edges))
    outline = parse_outline("\n".join(f"# {n}" for n in nodes))
    plan, _ = generate_plan(_plan_gw(reply), "T", outline)
    if has_cycle(nodes, edges):
        assert plan == fallback_plan(nodes)
        assert topological_schedule(plan).waves == [nodes]
    else:
        assert plan.edges == edges
