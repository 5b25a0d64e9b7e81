"""Chat-endpoint client: HTTP chat-completions wire shape, retry with backoff,
append-only transcript logging, and a deterministic scripted mock endpoint.

Every outbound request and inbound response (including failed attempts, each
with its own attempt number) is appended to the transcript before control
returns to the caller. The scripted mock replays canned responses in order and
uses a counter clock, so transcripts produced with it are byte-reproducible.
"""

from __future__ import annotations

import json
import os
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import httpx

from .errors import (
    ConfigError,
    EmptyResponseError,
    ScriptExhaustedError,
    TransportError,
)

RETRY_BACKOFF_SECONDS = (1.0, 2.0, 4.0)
MAX_ATTEMPTS = 3


@dataclass(frozen=True)
class GenerationSettings:
    """Sampling settings sent with each request. ``top_k=0`` disables the
    field entirely (it is omitted from the request payload)."""

    temperature: float = 0.7
    top_p: float = 0.9
    top_k: int = 0
    max_answer_tokens: int = 2048
    system_prompt: str | None = None
    fresh_session: bool = True

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ConfigError("top_p must lie in (0, 1]")
        if self.top_k < 0:
            raise ConfigError("top_k must be >= 0")
        if self.max_answer_tokens < 1:
            raise ConfigError("max_answer_tokens must be >= 1")

    def to_dict(self) -> dict:
        return {
            "temperature": self.temperature,
            "top_p": self.top_p,
            "top_k": self.top_k,
            "max_answer_tokens": self.max_answer_tokens,
            "system_prompt": self.system_prompt,
            "fresh_session": self.fresh_session,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "GenerationSettings":
        return cls(**dict(raw))


@dataclass(frozen=True)
class ChatExchange:
    """One prompt/response pair, with the response recorded verbatim."""

    prompt_text: str
    response_text: str
    model_id: str
    latency_ms: int
    timestamp: str
    attempt: int = 1

    def to_dict(self) -> dict:
        return {
            "prompt_text": self.prompt_text,
            "response_text": self.response_text,
            "model_id": self.model_id,
            "latency_ms": self.latency_ms,
            "timestamp": self.timestamp,
            "attempt": self.attempt,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ChatExchange":
        return cls(**dict(raw))


class ScriptedEndpoint:
    """Local endpoint replaying canned responses in order.

    Records every prompt it receives for later assertion and errors once the
    script is exhausted. The counter clock keeps timestamps deterministic.
    """

    kind = "scripted"

    def __init__(self, script: Sequence[str], model_id: str = "scripted",
                 start_consumed: int = 0):
        if not script:
            raise ConfigError("scripted endpoint needs a non-empty script")
        self.script = list(script)
        self.model_id = model_id
        self.consumed = start_consumed
        self.prompts: list[str] = []

    def next_response(self, prompt_text: str) -> str:
        self.prompts.append(prompt_text)
        if self.consumed >= len(self.script):
            raise ScriptExhaustedError(
                f"scripted endpoint exhausted after {len(self.script)} responses"
            )
        response = self.script[self.consumed]
        self.consumed += 1
        return response

    def clock(self) -> str:
        # One deterministic tick per consumed response.
        return datetime.fromtimestamp(self.consumed, tz=timezone.utc).isoformat()

    def to_spec(self) -> dict:
        return {
            "kind": self.kind,
            "responses": list(self.script),
            "model_id": self.model_id,
            "consumed": self.consumed,
        }


def scripted_mock(script: Sequence[str], model_id: str = "scripted") -> ScriptedEndpoint:
    """Build a scripted mock endpoint from an ordered list of canned responses."""
    return ScriptedEndpoint(script, model_id=model_id)


@dataclass(frozen=True)
class HttpEndpoint:
    """Descriptor for a chat-completions style HTTP endpoint."""

    base_url: str
    model_id: str
    api_key_env: str = "LABELLOOP_API_KEY"
    timeout: float = 120.0
    kind: str = "http"

    def to_spec(self) -> dict:
        return {
            "kind": self.kind,
            "base_url": self.base_url,
            "model_id": self.model_id,
            "api_key_env": self.api_key_env,
            "timeout": self.timeout,
        }


def load_endpoint(path: str | Path) -> HttpEndpoint:
    """Read an endpoint descriptor file (JSON: base_url, model_id, ...)."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if "base_url" not in raw or "model_id" not in raw:
        raise ConfigError(f"{path}: endpoint descriptor needs base_url and model_id")
    return HttpEndpoint(
        base_url=raw["base_url"].rstrip("/"),
        model_id=raw["model_id"],
        api_key_env=raw.get("api_key_env", "LABELLOOP_API_KEY"),
        timeout=float(raw.get("timeout", 120.0)),
    )


def endpoint_from_spec(spec: Mapping):
    """Rebuild an endpoint from its persisted spec."""
    kind = spec.get("kind")
    if kind == "scripted":
        return ScriptedEndpoint(
            spec["responses"],
            model_id=spec.get("model_id", "scripted"),
            start_consumed=int(spec.get("consumed", 0)),
        )
    if kind == "http":
        return HttpEndpoint(
            base_url=spec["base_url"],
            model_id=spec["model_id"],
            api_key_env=spec.get("api_key_env", "LABELLOOP_API_KEY"),
            timeout=float(spec.get("timeout", 120.0)),
        )
    raise ConfigError(f"unknown endpoint kind {kind!r}")


def build_request_payload(endpoint: HttpEndpoint, prompt_text: str,
                          settings: GenerationSettings,
                          prior_turns: Sequence[Mapping] = ()) -> dict:
    """Chat-completions request body. ``top_k`` is omitted when 0."""
    messages: list[dict] = []
    if settings.system_prompt:
        messages.append({"role": "system", "content": settings.system_prompt})
    if not settings.fresh_session:
        messages.extend(dict(turn) for turn in prior_turns)
    messages.append({"role": "user", "content": prompt_text})
    payload = {
        "model": endpoint.model_id,
        "messages": messages,
        "temperature": settings.temperature,
        "top_p": settings.top_p,
        "max_tokens": settings.max_answer_tokens,
    }
    if settings.top_k > 0:
        payload["top_k"] = settings.top_k
    return payload


class LLMClient:
    """Uniform client over scripted and HTTP endpoints.

    ``transcript`` may be a list (entries appended as dicts) or a path
    (entries appended as JSON lines). ``sleep`` is injectable so tests can
    skip real backoff waits.
    """

    def __init__(self, transcript: list | str | Path | None = None,
                 sleep=time.sleep):
        self._transcript = transcript
        self._sleep = sleep
        self._prior_turns: list[dict] = []

    def _log(self, entry: dict) -> None:
        if self._transcript is None:
            return
        if isinstance(self._transcript, list):
            self._transcript.append(entry)
        else:
            path = Path(self._transcript)
            with path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def complete(self, endpoint, prompt,
                 settings: GenerationSettings | None = None) -> ChatExchange:
        """Send one prompt; returns the exchange or raises
        :class:`TransportError` / :class:`EmptyResponseError`."""
        settings = settings or GenerationSettings()
        prompt_text = getattr(prompt, "text", prompt)
        if not prompt_text:
            raise ConfigError("prompt is empty")
        if isinstance(endpoint, ScriptedEndpoint):
            exchange = self._complete_scripted(endpoint, prompt_text)
        else:
            exchange = self._complete_http(endpoint, prompt_text, settings)
        if not exchange.response_text.strip():
            raise EmptyResponseError(
                f"endpoint {exchange.model_id!r} returned an empty response"
            )
        if not settings.fresh_session:
            self._prior_turns.append({"role": "user", "content": prompt_text})
            self._prior_turns.append({"role": "assistant", "content": exchange.response_text})
        return exchange

    def _complete_scripted(self, endpoint: ScriptedEndpoint, prompt_text: str) -> ChatExchange:
        response = endpoint.next_response(prompt_text)
        exchange = ChatExchange(
            prompt_text=prompt_text,
            response_text=response,
            model_id=endpoint.model_id,
            latency_ms=0,
            timestamp=endpoint.clock(),
            attempt=1,
        )
        self._log({"kind": "exchange", **exchange.to_dict()})
        return exchange

    def _complete_http(self, endpoint: HttpEndpoint, prompt_text: str,
                       settings: GenerationSettings) -> ChatExchange:
        payload = build_request_payload(endpoint, prompt_text, settings,
                                        prior_turns=self._prior_turns)
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(endpoint.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        url = endpoint.base_url.rstrip("/") + "/chat/completions"

        last_error: Exception | None = None
        for attempt in range(1, MAX_ATTEMPTS + 1):
            started = time.monotonic()
            try:
                response = httpx.post(url, json=payload, headers=headers,
                                      timeout=endpoint.timeout)
            except httpx.HTTPError as exc:
                last_error = exc
                self._log({"kind": "transport_error", "attempt": attempt,
                           "error": str(exc), "model_id": endpoint.model_id})
                if attempt < MAX_ATTEMPTS:
                    self._sleep(RETRY_BACKOFF_SECONDS[attempt - 1])
                continue
            latency_ms = int((time.monotonic() - started) * 1000)
            if response.status_code in (429,) or response.status_code >= 500:
                last_error = TransportError(
                    f"HTTP {response.status_code} from {url}", attempts=attempt
                )
                self._log({"kind": "transport_error", "attempt": attempt,
                           "error": f"HTTP {response.status_code}",
                           "model_id": endpoint.model_id})
                if attempt < MAX_ATTEMPTS:
                    self._sleep(RETRY_BACKOFF_SECONDS[attempt - 1])
                continue
            if response.status_code >= 400:
                raise TransportError(
                    f"HTTP {response.status_code} from {url}: {response.text[:500]}",
                    attempts=attempt,
                )
            body = response.json()
            try:
                content = body["choices"][0]["message"]["content"] or ""
            except (KeyError, IndexError, TypeError):
                content = ""
            exchange = ChatExchange(
                prompt_text=prompt_text,
                response_text=content,
                model_id=endpoint.model_id,
                latency_ms=latency_ms,
                timestamp=datetime.now(timezone.utc).isoformat(),
                attempt=attempt,
            )
            self._log({"kind": "exchange", **exchange.to_dict()})
            return exchange
        raise TransportError(
            f"transport failed after {MAX_ATTEMPTS} attempts: {last_error}",
            attempts=MAX_ATTEMPTS,
        )
