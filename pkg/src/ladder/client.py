"""Client for OpenAI-compatible chat-completion endpoints.

One endpoint config per model role (sampler, target, refiner). Batch
generation keeps at most ``max_in_flight`` requests outstanding, retries
transient failures (timeouts, 429, 5xx) with exponential backoff, and always
returns results positionally aligned with the input prompts; per-item
failures never abort a batch.
"""

from __future__ import annotations

import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import httpx

API_KEY_ENV = "LADDER_API_KEY"

RETRYABLE_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key: str | None = None
    max_in_flight: int = 4
    timeout: float = 60.0
    retries: int = 3
    temperature: float = 0.0
    max_tokens: int = 512
    backoff_base: float = 0.5
    backoff_cap: float = 30.0

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def resolved_api_key(self) -> str | None:
        return self.api_key or os.environ.get(API_KEY_ENV)


@dataclass(frozen=True)
class GenerationResult:
    """Outcome of one completion request: exactly one of text/error is set."""

    id: str
    text: str | None
    error: str | None
    attempts: int
    latency_ms: float

    def __post_init__(self):
        if (self.text is None) == (self.error is None):
            raise ValueError("exactly one of text/error must be populated")

    @property
    def ok(self) -> bool:
        return self.error is None


def _request_body(cfg: EndpointConfig, prompt: str) -> dict:
    return {
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
        "max_tokens": cfg.max_tokens,
    }


def _headers(cfg: EndpointConfig) -> dict:
    headers = {"Content-Type": "application/json"}
    key = cfg.resolved_api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    return headers


def _extract_content(body: dict) -> str:
    try:
        content = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise ValueError(f"malformed response body: {body!r}") from None
    if not isinstance(content, str):
        raise ValueError(f"malformed response body: content is {type(content).__name__}")
    return content


def _generate_with_client(
    client: httpx.Client, cfg: EndpointConfig, prompt: str, request_id: str
) -> GenerationResult:
    started = time.monotonic()

    def finish(text: str | None, error: str | None, attempts: int) -> GenerationResult:
        return GenerationResult(
            id=request_id,
            text=text,
            error=error,
            attempts=attempts,
            latency_ms=(time.monotonic() - started) * 1000.0,
        )

    if not prompt:
        return finish(None, "empty prompt", attempts=0)

    url = cfg.base_url.rstrip("/") + "/chat/completions"
    last_error = "no attempt made"
    for attempt in range(1, cfg.retries + 2):
        try:
            response = client.post(
                url, json=_request_body(cfg, prompt), headers=_headers(cfg), timeout=cfg.timeout
            )
        except httpx.HTTPError as exc:
            last_error = f"transport error: {exc}"
        else:
            if response.status_code == 200:
                try:
                    return finish(_extract_content(response.json()), None, attempt)
                except ValueError as exc:
                    return finish(None, str(exc), attempt)
            if response.status_code not in RETRYABLE_STATUS:
                return finish(
                    None, f"HTTP {response.status_code}: {response.text[:200]}", attempt
                )
            last_error = f"HTTP {response.status_code}"
        if attempt <= cfg.retries:
            delay = min(cfg.backoff_cap, cfg.backoff_base * 2 ** (attempt - 1))
            time.sleep(delay * random.uniform(0.5, 1.0))
    return finish(None, f"exhausted {cfg.retries + 1} attempts; last: {last_error}", cfg.retries + 1)


def generate(cfg: EndpointConfig, prompt: str, request_id: str = "0") -> GenerationResult:
    """Run one chat completion. Transient failures are retried with backoff;
    the result carries either the first choice's content or an error."""
    if not prompt:
        raise ValueError("prompt is empty")
    with httpx.Client() as client:
        return _generate_with_client(client, cfg, prompt, request_id)


def generate_batch(
    cfg: EndpointConfig,
    prompts: Sequence[str],
    ids: Sequence[str] | None = None,
) -> list[GenerationResult]:
    """Run a batch of completions with at most ``max_in_flight`` outstanding
    requests. ``result[k]`` always corresponds to ``prompts[k]``; item
    failures are recorded per item and never abort the batch."""
    if not prompts:
        raise ValueError("prompts is empty")
    if ids is None:
        ids = [str(i) for i in range(len(prompts))]
    if len(ids) != len(prompts):
        raise ValueError(f"ids/prompts length mismatch: {len(ids)} vs {len(prompts)}")
    with httpx.Client() as client:
        with ThreadPoolExecutor(max_workers=cfg.max_in_flight) as pool:
            futures = [
                pool.submit(_generate_with_client, client, cfg, prompt, request_id)
                for prompt, request_id in zip(prompts, ids)
            ]
            return [future.result() for future in futures]
