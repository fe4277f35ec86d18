"""Live HTTP providers: OpenAI-compatible chat and embeddings, Google Custom Search."""

from __future__ import annotations

import logging
import time
from typing import Callable, Mapping, Sequence

import httpx
import numpy as np

from ..errors import ProviderError

logger = logging.getLogger(__name__)

RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})


class RetryPolicy:
    def __init__(self, attempts: int = 3, backoff: float = 0.5, sleep: Callable[[float], None] = time.sleep):
        if attempts < 1:
            raise ValueError("attempts must be >= 1")
        self.attempts = attempts
        self.backoff = backoff
        self.sleep = sleep

    def send(self, client: httpx.Client, method: str, url: str, **kw) -> httpx.Response:
        """Issue a request, retrying transport errors, 429 and 5xx with exponential backoff."""
        last: str = ""
        for attempt in range(self.attempts):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = client.request(method, url, **kw)
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
                logger.warning("%s %s failed (attempt %d): %s", method, url, attempt + 1, exc)
                continue
            if resp.status_code in RETRY_STATUSES:
                last = f"HTTP {resp.status_code}"
                logger.warning("%s %s -> %d (attempt %d)", method, url, resp.status_code, attempt + 1)
                continue
            if resp.status_code >= 400:
                raise ProviderError(f"{method} {url} -> HTTP {resp.status_code}: {resp.text[:200]}")
            return resp
        raise ProviderError(f"{method} {url} failed after {self.attempts} attempts ({last})")


class HttpChat:
    """Chat completion against an OpenAI-compatible ``/chat/completions`` endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        *,
        temperature: float = 0.0,
        timeout: float = 120.0,
        retry: RetryPolicy | None = None,
        client: httpx.Client | None = None,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.temperature = temperature
        self.retry = retry or RetryPolicy()
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.client = client or httpx.Client(timeout=timeout, headers=headers)

    def chat(self, template_id: str, key: str, prompt: str, bindings: Mapping[str, str]) -> str:
        payload = {
            "model": self.model,
            "temperature": self.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        resp = self.retry.send(self.client, "POST", self.url, json=payload)
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ProviderError(f"malformed chat response: {exc}") from exc


class GoogleSearch:
    """Google Custom Search JSON API (``num`` is capped at 10 by the service)."""

    def __init__(
        self,
        api_key: str,
        engine_id: str,
        *,
        endpoint: str = "https://www.googleapis.com/customsearch/v1",
        timeout: float = 30.0,
        retry: RetryPolicy | None = None,
        client: httpx.Client | None = None,
    ):
        self.api_key = api_key
        self.engine_id = engine_id
        self.endpoint = endpoint
        self.retry = retry or RetryPolicy()
        self.client = client or httpx.Client(timeout=timeout)

    def raw_search(self, query: str, num: int) -> list[dict]:
        params = {"key": self.api_key, "cx": self.engine_id, "q": query, "num": min(max(num, 1), 10)}
        resp = self.retry.send(self.client, "GET", self.endpoint, params=params)
        try:
            items = resp.json().get("items", [])
        except ValueError as exc:
            raise ProviderError(f"malformed search response: {exc}") from exc
        return [
            {"title": it.get("title", ""), "url": it.get("link", ""), "snippet": it.get("snippet", "")}
            for it in items
        ]


class HttpEmbedder:
    """Embeddings from an OpenAI-compatible ``/embeddings`` endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        *,
        batch_size: int = 64,
        timeout: float = 60.0,
        retry: RetryPolicy | None = None,
        client: httpx.Client | None = None,
    ):
        self.url = base_url.rstrip("/") + "/embeddings"
        self.model = model
        self.embedder_id = f"http:{model}"
        self.batch_size = batch_size
        self.retry = retry or RetryPolicy()
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.client = client or httpx.Client(timeout=timeout, headers=headers)

    def embed_raw(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            resp = self.retry.send(self.client, "POST", self.url, json={"model": self.model, "input": batch})
            try:
                data = sorted(resp.json()["data"], key=lambda d: d.get("index", 0))
                rows.extend(d["embedding"] for d in data)
            except (KeyError, TypeError, ValueError) as exc:
                raise ProviderError(f"malformed embedding response: {exc}") from exc
        return np.asarray(rows, dtype=np.float64)
