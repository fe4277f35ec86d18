"""Outline-driven long-form article generation with a hermetic mock mode."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def mock_suite_dir() -> Path:
    """Directory of the bundled mock fixture suite (config.json and JSONL fixtures)."""
    return Path(str(resources.files(__name__) / "data" / "mock_suite"))
