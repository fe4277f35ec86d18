"""Run configuration loaded from a single JSON file.

Secrets are never stored in the file: each live provider names the
environment variable holding its key (``api_key_env``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .gateway import DEFAULT_EXCLUSIONS

ENV_KEYS = {"chat": "LLM_API_KEY", "search": "SEARCH_API_KEY", "embed": "EMBED_API_KEY"}


@dataclass
class ProviderConfig:
    mode: str = "live"
    base_url: str | None = None
    model: str | None = None
    api_key_env: str | None = None
    engine_id: str | None = None
    max_in_flight: int = 8
    temperature: float = 0.0
    timeout: float = 120.0

    def api_key(self, role: str) -> str | None:
        return os.environ.get(self.api_key_env or ENV_KEYS.get(role, ""))


@dataclass
class RunConfig:
    chat: ProviderConfig = field(default_factory=ProviderConfig)
    search: ProviderConfig = field(default_factory=ProviderConfig)
    embed: ProviderConfig = field(default_factory=ProviderConfig)
    reference_embed: ProviderConfig | None = None
    retry_attempts: int = 3
    retry_backoff: float = 0.5
    corpus_index: str | None = None
    n_exemplars: int = 3
    search_k: int = 5
    exclusions: list[str] = field(default_factory=lambda: list(DEFAULT_EXCLUSIONS))
    max_iterations: int = 2
    max_total_queries: int = 30
    query_cap: int = 15
    max_parallel: int = 3
    reference_k: int = 10
    context_budget: int = 4000
    output_dir: str = "out"
    mock_fixtures: str | None = None
    mock_search_jitter: float = 0.0
    preloaded_attributes: list[str] = field(default_factory=list)

    def providers(self) -> dict[str, ProviderConfig]:
        out = {"chat": self.chat, "search": self.search, "embed": self.embed}
        if self.reference_embed is not None:
            out["reference_embed"] = self.reference_embed
        return out

    def use_mock_fixtures(self, directory: str | os.PathLike) -> None:
        """Switch every provider to mock mode backed by ``directory``."""
        self.mock_fixtures = str(directory)
        for p in self.providers().values():
            p.mode = "mock"

    def validate(self) -> None:
        if self.max_parallel < 1:
            raise ConfigError("max_parallel must be >= 1")
        for name, value in (
            ("search_k", self.search_k),
            ("n_exemplars", self.n_exemplars),
            ("max_iterations", self.max_iterations),
            ("reference_k", self.reference_k),
            ("query_cap", self.query_cap),
            ("retry_attempts", self.retry_attempts),
        ):
            if value < 1:
                raise ConfigError(f"{name} must be >= 1")
        for role, p in self.providers().items():
            if p.mode not in ("live", "mock"):
                raise ConfigError(f"{role}: mode must be 'live' or 'mock', got {p.mode!r}")
            if p.mode == "mock":
                if not self.mock_fixtures:
                    raise ConfigError(f"{role}: mock mode requires mock_fixtures")
                if not Path(self.mock_fixtures).is_dir():
                    raise ConfigError(f"mock fixture directory not found: {self.mock_fixtures}")
            elif role == "search":
                if not p.engine_id:
                    raise ConfigError("search: live mode requires engine_id")
            elif not (p.base_url and p.model):
                raise ConfigError(f"{role}: live mode requires base_url and model")

    @classmethod
    def from_dict(cls, d: dict[str, Any], base_dir: Path | None = None) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(d)
        for role in ("chat", "search", "embed", "reference_embed"):
            if kw.get(role) is not None:
                try:
                    kw[role] = ProviderConfig(**kw[role])
                except TypeError as exc:
                    raise ConfigError(f"{role}: {exc}") from exc
        cfg = cls(**kw)
        if base_dir is not None:
            for attr in ("corpus_index", "mock_fixtures", "output_dir"):
                if attr not in d:
                    continue
                value = getattr(cfg, attr)
                if value and not Path(value).is_absolute():
                    setattr(cfg, attr, str(base_dir / value))
        return cfg

    @classmethod
    def load(cls, path: str | os.PathLike) -> RunConfig:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data, path.parent)
