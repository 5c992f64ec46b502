"""Chat-completion transport with bounded retries and a scriptable mock.

The gateway layers retry/backoff policy over a transport. The HTTP transport
speaks the industry-standard chat shape (model, messages, temperature,
max_tokens; reply in choices[0].message.content); the mock transport consumes
a script and records every call for assertions. Constrained-decoding hints
are forwarded when the endpoint is configured for them and ignored otherwise;
callers always re-validate locally.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Protocol, Sequence

import requests

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def to_json_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class Constraint:
    """Hint that the completion should be one of these exact strings."""

    allowed_completions: tuple[str, ...]


@dataclass(frozen=True)
class CompletionRequest:
    model_id: str
    messages: tuple[Message, ...]
    constraint: Constraint | None = None
    max_tokens: int = 64
    temperature: float = 0.0
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a completion request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def prompt_text(self) -> str:
        return "\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class GatewayPolicy:
    """Retry policy: total attempts = retries + 1, exponential backoff."""

    timeout: float = 30.0
    retries: int = 2
    backoff: float = 0.5


@dataclass(frozen=True)
class CompletionResult:
    text: str
    attempts: int


class TransportFailure(Exception):
    """A retryable transport-level failure (connection, timeout, 5xx)."""


class TransportError(Exception):
    """Raised once the retry budget is exhausted; carries the attempt log."""

    def __init__(self, attempts: list[str]) -> None:
        super().__init__(f"transport failed after {len(attempts)} attempts: {attempts}")
        self.attempts = attempts


class ConfigurationError(Exception):
    """Non-retryable endpoint error (4xx / bad configuration)."""


class Transport(Protocol):
    def send(self, request: CompletionRequest, timeout: float) -> str: ...


class TokenBucket:
    """Shared, thread-safe rate limiter; None capacity disables limiting."""

    def __init__(self, rate_per_sec: float | None = None, capacity: int = 1) -> None:
        self._rate = rate_per_sec
        self._capacity = capacity
        self._tokens = float(capacity)
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self._rate is None:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(self._capacity, self._tokens + (now - self._last) * self._rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            time.sleep(wait)


class HttpTransport:
    """POSTs chat-completion requests to a configured endpoint.

    The credential is read from an environment variable and only ever placed
    in the Authorization header, never in logs or errors.
    """

    def __init__(
        self,
        endpoint_url: str,
        api_key_env: str = "HYPERSTATE_API_KEY",
        constraint_field: str | None = None,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint_url = endpoint_url
        self.api_key_env = api_key_env
        self.constraint_field = constraint_field
        self._session = session or requests.Session()

    def send(self, request: CompletionRequest, timeout: float) -> str:
        body: dict[str, Any] = {
            "model": request.model_id,
            "messages": [m.to_json_dict() for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            body["seed"] = request.seed
        if request.constraint is not None and self.constraint_field:
            body[self.constraint_field] = list(request.constraint.allowed_completions)
        headers = {}
        api_key = os.environ.get(self.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            response = self._session.post(
                self.endpoint_url, json=body, headers=headers, timeout=timeout
            )
        except requests.RequestException as exc:
            raise TransportFailure(f"{type(exc).__name__}") from exc
        if 400 <= response.status_code < 500:
            raise ConfigurationError(f"endpoint rejected request: HTTP {response.status_code}")
        if response.status_code >= 500:
            raise TransportFailure(f"HTTP {response.status_code}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise TransportFailure(f"malformed response body: {type(exc).__name__}") from exc


@dataclass
class MockRule:
    """One scripted mock behavior, optionally gated on a prompt substring."""

    reply: str | None = None
    failure: str | None = None
    match: str | None = None
    consumed: bool = False


class MockExhaustedError(AssertionError):
    """The scripted mock ran out of applicable rules (a test error)."""


class MockTransport:
    """Consumes a script of rules in order; records every request."""

    def __init__(self, script: Sequence[MockRule] = ()) -> None:
        self.script: list[MockRule] = list(script)
        self.calls: list[CompletionRequest] = []

    def send(self, request: CompletionRequest, timeout: float) -> str:
        self.calls.append(request)
        prompt = request.prompt_text()
        for rule in self.script:
            if rule.consumed:
                continue
            if rule.match is not None and rule.match not in prompt:
                continue
            rule.consumed = True
            if rule.failure is not None:
                raise TransportFailure(rule.failure)
            assert rule.reply is not None
            return rule.reply
        raise MockExhaustedError("mock exhausted: no unconsumed rule matches the request")


class Gateway:
    """Retry/backoff layer over a transport; safe for concurrent callers."""

    def __init__(
        self,
        transport: Transport,
        policy: GatewayPolicy | None = None,
        rate_limiter: TokenBucket | None = None,
    ) -> None:
        self.transport = transport
        self.policy = policy or GatewayPolicy()
        self._limiter = rate_limiter or TokenBucket(None)

    def complete(self, request: CompletionRequest, policy: GatewayPolicy | None = None) -> CompletionResult:
        """Return the first successful completion within the retry budget.

        Transport failures retry with exponential backoff; configuration
        errors surface immediately.
        """
        policy = policy or self.policy
        failures: list[str] = []
        for attempt in range(policy.retries + 1):
            if attempt:
                time.sleep(policy.backoff * (2 ** (attempt - 1)))
            self._limiter.acquire()
            try:
                text = self.transport.send(request, timeout=policy.timeout)
            except TransportFailure as exc:
                failures.append(str(exc))
                logger.debug("completion attempt %d failed: %s", attempt + 1, exc)
                continue
            logger.debug("completion ok on attempt %d (%d bytes)", attempt + 1, len(text.encode("utf-8")))
            return CompletionResult(text=text, attempts=attempt + 1)
        raise TransportError(failures)


def install_mock(script: Sequence[MockRule], policy: GatewayPolicy | None = None) -> tuple[Gateway, MockTransport]:
    """Build a gateway over a scripted mock; returns (gateway, handle).

    The handle exposes .calls and the remaining script for assertions.
    """
    transport = MockTransport(script)
    return Gateway(transport, policy=policy or GatewayPolicy(backoff=0.0)), transport


def reply(text: str, match: str | None = None) -> MockRule:
    return MockRule(reply=text, match=match)


def failure(reason: str = "scripted failure", match: str | None = None) -> MockRule:
    return MockRule(failure=reason, match=match)
