"""Language-model access: HTTP chat backend and deterministic scripted backend.

A call either produces a structured object (validated against a published
schema) or drives tools, never both. The scripted backend replays canned
responses keyed by (agent role, step, round) so the whole control machinery
is testable without a model.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol

import httpx
import yaml

from . import schemas
from .errors import (RateLimited, ScenarioExhausted, SchemaViolation,
                     TransportError)

SPEAKERS = ("user", "assistant", "tool")


@dataclass
class ChatMessage:
    speaker: str
    content: str

    def __post_init__(self):
        if self.speaker not in SPEAKERS:
            raise ValueError(f"invalid speaker: {self.speaker!r}")


@dataclass
class ChatRequest:
    """One backend call: system prompt, conversation, optional schema/tools.

    tags carry routing keys (agent_role, step, round) used by the scripted
    backend and by transcript recording; the HTTP backend ignores them.
    """

    role_prompt: str
    messages: list[ChatMessage]
    required_schema: str | None = None
    tool_declarations: list[dict[str, Any]] | None = None
    tags: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.required_schema is not None and self.tool_declarations:
            raise ValueError(
                "a request is either structured-output or tool-driving, "
                "not both")


@dataclass
class Usage:
    input_tokens: int = 0
    output_tokens: int = 0

    def __post_init__(self):
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("usage counts must be non-negative")


@dataclass
class ChatResponse:
    content: Any
    tool_calls: list[tuple[str, dict[str, Any]]] | None = None
    usage: Usage = field(default_factory=Usage)
    attempts: int = 1


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


# -- scripted backend -------------------------------------------------------

@dataclass
class ScenarioEntry:
    role: str
    step: int
    round: int
    content: Any
    usage: Usage = field(default_factory=Usage)

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.role, self.step, self.round)


@dataclass
class Scenario:
    entries: list[ScenarioEntry]
    strict: bool = True


def load_scenario(path: str) -> Scenario:
    """Parse a scenario file: a strict flag plus keyed canned responses."""
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    entries = []
    for item in doc.get("responses", []):
        usage = item.get("usage", {})
        entries.append(ScenarioEntry(
            role=item["role"], step=int(item["step"]),
            round=int(item["round"]),
            content=item.get("content", item.get("text", "")),
            usage=Usage(int(usage.get("input", 0)),
                        int(usage.get("output", 0)))))
    return Scenario(entries=entries, strict=bool(doc.get("strict", True)))


class ScriptedBackend:
    """Replays a scenario deterministically; records every request it sees.

    Entries with the same key are consumed in file order, so re-asks and
    repeated rounds can be scripted. In strict mode an unmatched request
    raises ScenarioExhausted.
    """

    def __init__(self, scenario: Scenario):
        self._scenario = scenario
        self._cursors: dict[tuple[str, int, int], int] = {}
        self.request_log: list[ChatRequest] = []

    def _request_key(self, request: ChatRequest) -> tuple[str, int, int]:
        tags = request.tags
        return (str(tags.get("role", "")), int(tags.get("step", 0)),
                int(tags.get("round", 0)))

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.request_log.append(request)
        key = self._request_key(request)
        matches = [e for e in self._scenario.entries if e.key == key]
        cursor = self._cursors.get(key, 0)
        if cursor >= len(matches):
            if self._scenario.strict:
                raise ScenarioExhausted(
                    f"no scripted response for role={key[0]} step={key[1]} "
                    f"round={key[2]} (call #{cursor + 1})")
            return ChatResponse(content="")
        self._cursors[key] = cursor + 1
        entry = matches[cursor]
        content = entry.content
        if request.required_schema is not None:
            content = schemas.validate_structured(request.required_schema,
                                                  content)
        return ChatResponse(content=content, usage=entry.usage)


# -- HTTP backend -----------------------------------------------------------

class HttpBackend:
    """OpenAI-compatible chat-completions client with structured output.

    Uses native json_schema response format; if the returned text still fails
    validation, issues exactly one corrective re-ask embedding the error
    before raising SchemaViolation.
    """

    def __init__(self, base_url: str, api_key: str, model: str,
                 temperature: float = 0.2,
                 client: httpx.Client | None = None,
                 timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.temperature = temperature
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = {"Authorization": f"Bearer {api_key}"}

    def _payload(self, request: ChatRequest,
                 extra_messages: list[dict[str, str]]) -> dict[str, Any]:
        messages = [{"role": "system", "content": request.role_prompt}]
        for msg in request.messages:
            messages.append({"role": msg.speaker, "content": msg.content})
        messages.extend(extra_messages)
        payload: dict[str, Any] = {
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        }
        if request.required_schema is not None:
            payload["response_format"] = {
                "type": "json_schema",
                "json_schema": {
                    "name": request.required_schema.replace(":", "_"),
                    "schema": schemas.json_schema(request.required_schema),
                },
            }
        if request.tool_declarations:
            payload["tools"] = request.tool_declarations
        return payload

    def _post(self, payload: dict[str, Any]) -> dict[str, Any]:
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions", json=payload,
                headers=self._headers)
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if response.status_code == 429:
            raise RateLimited("rate limited by endpoint")
        if response.status_code >= 500:
            raise TransportError(f"server error {response.status_code}")
        if response.status_code != 200:
            raise TransportError(
                f"unexpected status {response.status_code}: {response.text}")
        return response.json()

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = self._payload(request, [])
        body = self._post(payload)
        usage_in, usage_out, content, tool_calls = _parse_completion(body)
        if request.required_schema is None:
            return ChatResponse(content=content, tool_calls=tool_calls,
                                usage=Usage(usage_in, usage_out))
        try:
            return ChatResponse(
                content=_validated(request.required_schema, content),
                usage=Usage(usage_in, usage_out))
        except SchemaViolation as exc:
            # One corrective re-ask embedding the validation error.
            retry_payload = self._payload(request, [
                {"role": "assistant", "content": str(content)},
                {"role": "user",
                 "content": ("Your previous reply failed validation: "
                             f"{exc}. Reply again with only a JSON object "
                             "matching the required schema.")},
            ])
            body = self._post(retry_payload)
            in2, out2, content, _ = _parse_completion(body)
            return ChatResponse(
                content=_validated(request.required_schema, content),
                usage=Usage(usage_in + in2, usage_out + out2))


def _parse_completion(body: dict[str, Any]):
    try:
        message = body["choices"][0]["message"]
    except (KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"malformed completion body: {exc}") from exc
    usage = body.get("usage", {})
    tool_calls = None
    if message.get("tool_calls"):
        tool_calls = [(tc["function"]["name"],
                       json.loads(tc["function"]["arguments"]))
                      for tc in message["tool_calls"]]
    return (int(usage.get("prompt_tokens", 0)),
            int(usage.get("completion_tokens", 0)),
            message.get("content") or "", tool_calls)


def _validated(schema_id: str, content: Any) -> dict[str, Any]:
    if isinstance(content, str):
        try:
            content = json.loads(content)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"{schema_id}: not valid JSON: {exc}") \
                from exc
    return schemas.validate_structured(schema_id, content)


# -- retry policy -----------------------------------------------------------

def with_retry(backend: Backend, request: ChatRequest, max_attempts: int = 3,
               base_delay: float = 0.5,
               sleep: Callable[[float], None] = time.sleep,
               rng: random.Random | None = None) -> ChatResponse:
    """Retry transport-level failures with exponential backoff plus jitter.

    Schema violations are not transport failures and are never retried here
    (the HTTP backend already performs its single corrective re-ask).
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    rng = rng or random.Random()
    last_error: Exception | None = None
    for attempt in range(1, max_attempts + 1):
        try:
            response = backend.complete(request)
            response.attempts = attempt
            return response
        except (TransportError, RateLimited) as exc:
            last_error = exc
            if attempt < max_attempts:
                sleep(base_delay * (2 ** (attempt - 1)) * (1 + rng.random()))
    raise type(last_error)(
        f"{last_error} (after {max_attempts} attempts)") from last_error


# -- usage metering ---------------------------------------------------------

class MeteredBackend:
    """Wraps a backend, accumulating token usage across calls."""

    def __init__(self, inner: Backend):
        self._inner = inner
        self.input_tokens = 0
        self.output_tokens = 0
        self.calls = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self._inner.complete(request)
        self.input_tokens += response.usage.input_tokens
        self.output_tokens += response.usage.output_tokens
        self.calls += 1
        return response
