"""Chat-completions client and the model variant registry.

Every benchmarked model sits behind the same wire format: POST
``{base_url}/v1/chat/completions`` with ``model``, ``messages``,
``temperature``, and ``max_tokens``; the answer is read from
``choices[0].message.content``. Local runtimes that expose this endpoint
and hosted services both work unchanged.

Failures split into two families. Transient ones (connection errors,
timeouts, 5xx) are retried with exponential backoff up to a total
attempt budget. Anything else (4xx, malformed response bodies) fails
immediately: a 429 means the caller should lower parallelism, not hammer
the endpoint harder.

API keys are never configured in files. A variant named ``LLM-q-rag``
reads ``RAGWB_API_KEY_LLM_Q_RAG`` from the environment and sends it as a
bearer token when present.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import requests

from .errors import EndpointError, UserInputError

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_TOKENS = 512
DEFAULT_TIMEOUT = 60.0
DEFAULT_RETRY_MAX = 3
DEFAULT_BACKOFF_BASE = 0.5
DEFAULT_MAX_INFLIGHT = 4

_ROLES = ("system", "user", "assistant")
_KEY_SANITIZE_RE = re.compile(r"[^A-Za-z0-9]")


class GatewayError(EndpointError):
    """Endpoint interaction failed for one variant."""

    def __init__(self, variant_name: str, message: str) -> None:
        super().__init__(f"{variant_name}: {message}")
        self.variant_name = variant_name


class GatewayConnectionError(GatewayError):
    """Could not reach the endpoint."""


class GatewayTimeoutError(GatewayError):
    """Endpoint did not answer within the timeout."""


class GatewayHTTPError(GatewayError):
    """Endpoint answered with a non-success status."""

    def __init__(self, variant_name: str, status: int, message: str) -> None:
        super().__init__(variant_name, message)
        self.status = status


class GatewayProtocolError(GatewayError):
    """Endpoint body did not follow the chat-completions shape."""


class RegistryError(UserInputError):
    """Malformed registry file."""


@dataclass(frozen=True)
class ModelVariant:
    """One benchmarked configuration: endpoint, model, and RAG wiring."""

    name: str
    base_url: str
    model_id: str
    uses_rag: bool = False
    context_budget_chars: int = 16000
    index_dir: str | None = None
    provenance: Mapping[str, object] = field(default_factory=dict)

    def api_key_env(self) -> str:
        return "RAGWB_API_KEY_" + _KEY_SANITIZE_RE.sub("_", self.name).upper()


@dataclass
class ChatRequest:
    messages: list[dict[str, str]]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        if not self.messages:
            raise UserInputError("chat request needs at least one message")
        for msg in self.messages:
            if set(msg) != {"role", "content"}:
                raise UserInputError(
                    "each message must have exactly 'role' and 'content'"
                )
            if msg["role"] not in _ROLES:
                raise UserInputError(f"unknown message role {msg['role']!r}")
            if not isinstance(msg["content"], str):
                raise UserInputError("message content must be a string")
        if not any(m["role"] == "user" for m in self.messages):
            raise UserInputError("chat request needs at least one user message")
        if self.temperature < 0.0:
            raise UserInputError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise UserInputError("max_tokens must be >= 1")
        if self.timeout <= 0.0:
            raise UserInputError("timeout must be positive")


@dataclass
class ChatResponse:
    content: str
    finish_reason: str | None
    latency_ms: float
    attempts: int


# Global in-flight bound shared by all worker threads; the benchmark
# runner never opens more concurrent requests than this.
_inflight = threading.BoundedSemaphore(DEFAULT_MAX_INFLIGHT)


def set_max_inflight(n: int) -> None:
    """Resize the global concurrent-request bound."""
    global _inflight
    if n < 1:
        raise UserInputError("parallelism must be >= 1")
    _inflight = threading.BoundedSemaphore(n)


def _parse_body(variant_name: str, payload: object) -> tuple[str, str | None]:
    if not isinstance(payload, dict):
        raise GatewayProtocolError(variant_name, "response body is not an object")
    choices = payload.get("choices")
    if not isinstance(choices, list) or not choices:
        raise GatewayProtocolError(variant_name, "response has no choices")
    first = choices[0]
    if not isinstance(first, dict):
        raise GatewayProtocolError(variant_name, "first choice is not an object")
    message = first.get("message")
    if not isinstance(message, dict):
        raise GatewayProtocolError(variant_name, "first choice has no message")
    content = message.get("content")
    if not isinstance(content, str):
        raise GatewayProtocolError(variant_name, "message content is not a string")
    finish = first.get("finish_reason")
    if finish is not None and not isinstance(finish, str):
        finish = None
    return content, finish


def chat_complete(
    variant: ModelVariant,
    request: ChatRequest,
    retry_max: int = DEFAULT_RETRY_MAX,
    backoff_base: float = DEFAULT_BACKOFF_BASE,
    session: requests.Session | None = None,
) -> ChatResponse:
    """Send one chat request, retrying transient failures.

    *retry_max* bounds total attempts, so 3 means at most two retries.
    Only connection failures, timeouts, and 5xx answers are retried; 4xx
    and malformed bodies raise immediately.
    """
    if retry_max < 1:
        raise UserInputError("retry_max must be >= 1")
    url = variant.base_url.rstrip("/") + "/v1/chat/completions"
    body = {
        "model": variant.model_id,
        "messages": request.messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(variant.api_key_env())
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    post = (session or requests).post
    last_error: GatewayError | None = None
    for attempt in range(1, retry_max + 1):
        if attempt > 1:
            delay = backoff_base * 2 ** (attempt - 2)
            if delay > 0:
                time.sleep(delay)
            logger.info(
                "%s: retrying (attempt %d of %d)", variant.name, attempt, retry_max
            )
        started = time.perf_counter()
        try:
            with _inflight:
                response = post(
                    url, json=body, headers=headers, timeout=request.timeout
                )
        except requests.Timeout:
            last_error = GatewayTimeoutError(
                variant.name, f"no answer within {request.timeout}s"
            )
            continue
        except requests.ConnectionError as exc:
            last_error = GatewayConnectionError(
                variant.name, f"cannot reach {url}: {exc}"
            )
            continue
        except requests.RequestException as exc:
            raise GatewayError(variant.name, f"request failed: {exc}") from exc

        latency_ms = (time.perf_counter() - started) * 1000.0
        if 500 <= response.status_code < 600:
            last_error = GatewayHTTPError(
                variant.name,
                response.status_code,
                f"server error {response.status_code}",
            )
            continue
        if not 200 <= response.status_code < 300:
            raise GatewayHTTPError(
                variant.name,
                response.status_code,
                f"endpoint returned {response.status_code}",
            )
        try:
            payload = response.json()
        except ValueError as exc:
            raise GatewayProtocolError(variant.name, "response is not JSON") from exc
        content, finish = _parse_body(variant.name, payload)
        return ChatResponse(
            content=content,
            finish_reason=finish,
            latency_ms=latency_ms,
            attempts=attempt,
        )

    assert last_error is not None
    last_error.args = (f"{last_error.args[0]} (after {retry_max} attempts)",)
    raise last_error


# --- registry ---------------------------------------------------------------

def parse_registry(raw: str, source: str = "<registry>") -> dict[str, ModelVariant]:
    """Parse a registry JSON array into name -> variant, preserving order."""
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RegistryError(f"malformed registry {source}: {exc.msg}") from exc
    if not isinstance(payload, list):
        raise RegistryError(f"registry {source} must be a JSON array")

    variants: dict[str, ModelVariant] = {}
    for i, item in enumerate(payload):
        if not isinstance(item, dict):
            raise RegistryError(f"{source}: entry {i} is not an object")
        try:
            name = item["name"]
            base_url = item["base_url"]
            model_id = item["model_id"]
        except KeyError as exc:
            raise RegistryError(f"{source}: entry {i} is missing field {exc}") from None
        for label, value in (("name", name), ("base_url", base_url), ("model_id", model_id)):
            if not isinstance(value, str) or not value:
                raise RegistryError(
                    f"{source}: entry {i} field {label!r} must be a non-empty string"
                )
        uses_rag = item.get("uses_rag", False)
        if not isinstance(uses_rag, bool):
            raise RegistryError(f"{source}: entry {i} field 'uses_rag' must be a boolean")
        budget = item.get("context_budget_chars", 16000)
        if not isinstance(budget, int) or isinstance(budget, bool) or budget < 1:
            raise RegistryError(
                f"{source}: entry {i} field 'context_budget_chars' must be a positive integer"
            )
        index_dir = item.get("index_dir")
        if uses_rag and (not isinstance(index_dir, str) or not index_dir):
            raise RegistryError(
                f"{source}: variant {name!r} uses retrieval but has no index_dir"
            )
        if index_dir is not None and not isinstance(index_dir, str):
            raise RegistryError(f"{source}: entry {i} field 'index_dir' must be a string")
        provenance = item.get("provenance", {})
        if not isinstance(provenance, dict):
            raise RegistryError(f"{source}: entry {i} field 'provenance' must be an object")
        if name in variants:
            raise RegistryError(f"{source}: duplicate variant name {name!r}")
        variants[name] = ModelVariant(
            name=name,
            base_url=base_url,
            model_id=model_id,
            uses_rag=uses_rag,
            context_budget_chars=budget,
            index_dir=index_dir,
            provenance=provenance,
        )

    if not variants:
        logger.warning("registry %s lists no variants", source)
    return variants


def load_registry(path: str | Path) -> dict[str, ModelVariant]:
    """Read a registry file from disk."""
    p = Path(path)
    try:
        raw = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise RegistryError(f"registry file not found: {p}") from None
    return parse_registry(raw, source=str(p))


def default_registry() -> dict[str, ModelVariant]:
    """The packaged ten-variant registry."""
    raw = resources.files("ragwb").joinpath("data/registry.json").read_text("utf-8")
    return parse_registry(raw, source="ragwb/data/registry.json")
