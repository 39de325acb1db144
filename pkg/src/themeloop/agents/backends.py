"""Text-generation backends.

Every agent call goes through ``Backend.complete``.  The mock backend reads
the structured ``context`` attached to each request and answers
deterministically; the remote backend only sees the rendered prompt.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol

import httpx

from ..errors import BackendUnavailable

logger = logging.getLogger(__name__)

API_KEY_ENV = "THEMELOOP_API_KEY"


@dataclass(frozen=True)
class AgentRequest:
    task: str  # "code" | "theme" | "critique" | "polish"
    identity: str
    system: str
    prompt: str
    ref: str
    seed: int = 0
    context: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.task, self.identity, self.ref)


class Backend(Protocol):
    config: BackendConfig
    deterministic: bool

    def complete(self, request: AgentRequest) -> str: ...


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "mock"
    model: str = "mock-keyword"
    temperature: float = 0.0
    endpoint: str | None = None
    api_key_env: str = API_KEY_ENV
    timeout: float = 120.0
    # mock only: number of keyword codes emitted per chunk and agent
    top_n: int = 5

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"unknown backend kind {self.kind!r}")

    def to_dict(self) -> dict:
        # credentials never leave the environment
        return {
            "kind": self.kind,
            "model": self.model,
            "temperature": self.temperature,
            "endpoint": self.endpoint,
            "top_n": self.top_n,
        }


class MockBackend:
    """Deterministic offline backend; see ``themeloop.agents.mock``."""

    deterministic = True

    def __init__(self, config: BackendConfig | None = None):
        self.config = config or BackendConfig()

    def complete(self, request: AgentRequest) -> str:
        from . import mock

        handler = mock.HANDLERS.get(request.task)
        if handler is None:
            raise BackendUnavailable(f"mock backend has no handler for task {request.task!r}")
        return handler(request, self.config)


class RemoteBackend:
    """Chat-completion style HTTPS endpoint.

    Sends ``{"model", "temperature", "messages"}`` and reads
    ``choices[0].message.content``.  The bearer token comes from the
    ``THEMELOOP_API_KEY`` environment variable.
    """

    deterministic = False

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None):
        if not config.endpoint:
            raise BackendUnavailable("remote backend needs an endpoint")
        self.config = config
        api_key = os.environ.get(config.api_key_env)
        if not api_key:
            raise BackendUnavailable(f"environment variable {config.api_key_env} is not set")
        self._client = client or httpx.Client(timeout=config.timeout)
        self._headers = {"Authorization": f"Bearer {api_key}"}

    def payload(self, request: AgentRequest) -> dict:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.prompt})
        return {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        }

    def complete(self, request: AgentRequest) -> str:
        try:
            resp = self._client.post(self.config.endpoint, json=self.payload(request), headers=self._headers)
            resp.raise_for_status()
            content = resp.json()["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendUnavailable(f"{request.task} call for {request.ref} failed: {exc}") from exc
        if not content or not content.strip():
            raise BackendUnavailable(f"{request.task} call for {request.ref} returned an empty response")
        return content


class ReplayBackend:
    """Answers from recorded exchanges, keyed by (task, identity, ref)."""

    deterministic = True

    def __init__(self, exchanges, config: BackendConfig | None = None):
        self.config = config or BackendConfig()
        self._responses = {(x.task, x.identity, x.ref): x.response for x in exchanges}
        self._lock = threading.Lock()
        self.misses: list[tuple[str, str, str]] = []

    def complete(self, request: AgentRequest) -> str:
        try:
            return self._responses[request.key]
        except KeyError:
            with self._lock:
                self.misses.append(request.key)
            raise BackendUnavailable(f"no recorded response for {request.key}") from None


def make_backend(config: BackendConfig) -> Backend:
    if config.kind == "mock":
        return MockBackend(config)
    return RemoteBackend(config)
