"""The LLM that sits inside the environment.

Two implementations share one calling convention, ``executor(prompt, kind)``:

* :class:`RemoteExecutor` talks to a chat-completions endpoint over HTTP.
* :class:`ScriptedExecutor` answers from a fixed rule table, for tests and
  desk-scale runs where no model is available.
"""

from __future__ import annotations

import logging
import os
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import httpx

from qplanner.errors import ExecutorMalformed, ExecutorTimeout, ExecutorTransport

log = logging.getLogger(__name__)

RETRY_BACKOFF = 0.5
# Reserved for connection setup and timer slack inside the overall budget.
DEADLINE_MARGIN = 0.15


@dataclass(frozen=True)
class ExecutorConfig:
    endpoint_url: str
    model_name: str
    api_key_ref: Optional[str] = None
    timeout: float = 6.0
    max_retries: int = 2
    temperature: float = 0.0
    max_tokens: int = 256

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.max_retries < 0:
            raise ValueError("max_retries must be non-negative")


def _request_body(prompt: str, config: ExecutorConfig) -> dict:
    return {
        "model": config.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }


def _headers(api_key_ref: Optional[str]) -> dict:
    key = os.environ.get(api_key_ref) if api_key_ref else None
    return {"Authorization": f"Bearer {key}"} if key else {}


def _message_text(payload) -> str:
    try:
        content = payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as exc:
        raise ExecutorMalformed("response has no assistant message") from exc
    if not isinstance(content, str):
        raise ExecutorMalformed("assistant message content is not text")
    return content


def time_budget(config: ExecutorConfig) -> float:
    """Upper bound on how long :func:`execute` may block."""
    return (config.max_retries + 1) * config.timeout + config.max_retries * RETRY_BACKOFF


def execute(
    prompt: str,
    config: ExecutorConfig,
    client: Optional[httpx.Client] = None,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Run one chat completion and return the assistant text.

    Timeouts and transport failures are retried ``config.max_retries`` times
    with a fixed backoff; 4xx responses are not retried. Each attempt gets
    ``config.timeout`` seconds, clipped so the whole call finishes within
    :func:`time_budget`.
    """
    # Start the clock first: building a client loads TLS state and is not free.
    deadline = time.monotonic() + time_budget(config) - DEADLINE_MARGIN
    own_client = client is None
    if own_client:
        client = httpx.Client(timeout=httpx.Timeout(config.timeout))
    last_exc: Exception | None = None
    try:
        for attempt in range(config.max_retries + 1):
            if attempt:
                sleep(RETRY_BACKOFF)
            budget = min(config.timeout, deadline - time.monotonic())
            if budget <= 0:
                break
            try:
                resp = client.post(
                    config.endpoint_url,
                    json=_request_body(prompt, config),
                    headers=_headers(config.api_key_ref),
                    timeout=budget,
                )
            except httpx.TimeoutException as exc:
                log.warning("executor attempt %d timed out", attempt + 1)
                last_exc = ExecutorTimeout(f"no response within {config.timeout}s")
                last_exc.__cause__ = exc
                continue
            except httpx.TransportError as exc:
                log.warning("executor attempt %d failed: %s", attempt + 1, exc)
                last_exc = ExecutorTransport(str(exc))
                last_exc.__cause__ = exc
                continue
            if resp.status_code >= 400:
                err = ExecutorTransport(f"HTTP {resp.status_code} from executor endpoint")
                if resp.status_code < 500 and resp.status_code != 429:
                    raise err
                last_exc = err
                continue
            try:
                payload = resp.json()
            except ValueError as exc:
                raise ExecutorMalformed("response body is not JSON") from exc
            return _message_text(payload)
    finally:
        if own_client:
            client.close()
    raise last_exc or ExecutorTimeout("executor time budget exhausted")


class RemoteExecutor:
    def __init__(self, config: ExecutorConfig, client: Optional[httpx.Client] = None):
        self.config = config
        self._client = client or httpx.Client(timeout=httpx.Timeout(config.timeout))

    def __call__(self, prompt: str, kind=None) -> str:
        return execute(prompt, self.config, client=self._client)

    def close(self) -> None:
        self._client.close()


Response = Union[str, Callable[[str], str]]


@dataclass(frozen=True)
class ScriptRule:
    """``pattern`` is a regular expression searched in the prompt.

    ``kind`` of None matches every task kind. ``response`` may be a callable
    of the prompt, for oracle executors in tests.
    """

    pattern: str
    response: Response
    kind: Optional[str] = None

    def matches(self, prompt: str, kind) -> bool:
        if self.kind is not None and kind is not None and str(kind) != str(self.kind):
            return False
        return re.search(self.pattern, prompt) is not None


@dataclass(frozen=True)
class ScriptedExecutor:
    rules: Sequence[ScriptRule] = field(default_factory=tuple)
    default: Response = "Answer:"

    @classmethod
    def from_dict(cls, spec: dict) -> "ScriptedExecutor":
        rules = tuple(
            ScriptRule(r["pattern"], r["response"], r.get("kind"))
            for r in spec.get("rules", [])
        )
        return cls(rules, spec.get("default", "Answer:"))

    def __call__(self, prompt: str, kind=None) -> str:
        return execute_scripted(prompt, self, kind)


def execute_scripted(prompt: str, script: ScriptedExecutor, kind=None) -> str:
    for rule in script.rules:
        if rule.matches(prompt, kind):
            resp = rule.response
            break
    else:
        resp = script.default
    return resp(prompt) if callable(resp) else resp
