from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from longwrite import mock_suite_dir
from longwrite.config import RunConfig
from longwrite.gateway import Gateway, MockChat, MockSearch, TermFrequencyEmbedder

SUITE_TOPIC = "Orrin Valley Funicular"
DATA = Path(__file__).parent / "data"


@pytest.fixture
def suite_dir(tmp_path) -> Path:
    """A private copy of the bundled mock suite, safe to modify."""
    dst = tmp_path / "suite"
    shutil.copytree(mock_suite_dir(), dst)
    return dst


@pytest.fixture
def suite_config(suite_dir, tmp_path) -> RunConfig:
    cfg = RunConfig.load(suite_dir / "config.json")
    cfg.output_dir = str(tmp_path / "out")
    return cfg


def make_gateway(chat_records=(), search_records=(), texts=(), **kw) -> Gateway:
    embedder = TermFrequencyEmbedder.from_texts(list(texts) or ["placeholder"])
    return Gateway(MockChat(list(chat_records)), MockSearch(list(search_records)), embedder, **kw)


ALPHAFOLD_SECTIONS = [
    "Background",
    "Development",
    "Algorithm",
    "Protein Structure Predictions",
    "Competitions and Benchmarks",
    "Applications",
    "Database",
    "Source Code and Open Access",
    "Limitations",
    "Reception and Impact",
    "Future Directions",
]

# AlphaFold example plan in the colon form
ALPHAFOLD_PLAN_REPLY = """\
Background: Development
Development: Algorithm,
Algorithm: Protein Structure Predictions, Competitions and Benchmarks, Limitations
Protein Structure Predictions: Applications, Limitations
Competitions and Benchmarks: None
Applications: Database,Reception and Impact
Database: Source Code and Open Access
Source Code and Open Access: None
Limitations: Reception and Impact
Reception and Impact: Future Directions
Future Directions: None
"""


@pytest.fixture
def alphafold_outline():
    from longwrite.outline import parse_outline

    return parse_outline((DATA / "alphafold_outline.md").read_text(encoding="utf-8"))


# one PASS/FAIL line per acceptance criterion at the end of the run

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    number, title = mark.args
    outcome = "PASS" if call.excinfo is None else "FAIL"
    prev = _criteria.get(number)
    if prev is None or prev[1] == "PASS":
        _criteria[number] = (title, outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcome = _criteria[number]
        terminalreporter.write_line(f"[{outcome}] criterion {number:2d}: {title}")
