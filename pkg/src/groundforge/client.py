"""Chat-completion clients used to turn fine-tuning prompts into conversations.

The wire format is a minimal chat schema::

    POST <FORGE_LLM_ENDPOINT>
    Authorization: Bearer <FORGE_LLM_KEY>
    {"model": "...", "messages": [{"role": "user", "content": "..."}], "temperature": 0.7}

    -> {"choices": [{"message": {"role": "assistant", "content": "..."}}]}

which is what OpenAI-compatible ``/v1/chat/completions`` servers speak.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from typing import Callable, Iterable, Protocol, Sequence

import httpx

from .errors import ClientConfigError, EmptyResponseError, IngestError, TransientError, TransportError

logger = logging.getLogger(__name__)

ENDPOINT_ENV = "FORGE_LLM_ENDPOINT"
KEY_ENV = "FORGE_LLM_KEY"

Message = dict[str, str]


class ChatClient(Protocol):
    def complete(self, messages: Sequence[Message], *, request_id: str | None = None) -> str: ...


class HttpChatClient:
    RETRY_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}

    def __init__(
        self,
        endpoint: str,
        api_key: str,
        model: str = "gpt-4",
        temperature: float = 0.7,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        if not endpoint:
            raise ClientConfigError(f"{ENDPOINT_ENV} is not set")
        if not api_key:
            raise ClientConfigError(f"{KEY_ENV} is not set")
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self._http = httpx.Client(
            timeout=timeout,
            headers={"Authorization": f"Bearer {api_key}"},
            transport=transport,
        )

    @classmethod
    def from_env(cls, **kwargs) -> "HttpChatClient":
        """Build a client from ``FORGE_LLM_ENDPOINT`` / ``FORGE_LLM_KEY``.

        Raises ClientConfigError before any network activity when either is missing.
        """
        return cls(os.environ.get(ENDPOINT_ENV, ""), os.environ.get(KEY_ENV, ""), **kwargs)

    def complete(self, messages: Sequence[Message], *, request_id: str | None = None) -> str:
        body = {"model": self.model, "messages": list(messages), "temperature": self.temperature}
        try:
            resp = self._http.post(self.endpoint, json=body)
        except httpx.TimeoutException as exc:
            raise TransientError(f"timeout: {exc}") from exc
        except httpx.TransportError as exc:
            raise TransientError(f"network error: {exc}") from exc
        if resp.status_code in self.RETRY_STATUS:
            raise TransientError(f"HTTP {resp.status_code}")
        if resp.status_code in (401, 403):
            raise TransportError(f"authentication failed (HTTP {resp.status_code})")
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected response body: {exc}") from exc

    def close(self) -> None:
        self._http.close()


class StubChatClient:
    """Offline client that replays canned completions.

    Completions are looked up by ``request_id`` first and otherwise handed out
    in order.
    """

    def __init__(self, completions: Iterable[str] = (), by_id: dict[str, str] | None = None):
        self._queue = list(completions)
        self._by_id = dict(by_id or {})
        self._lock = threading.Lock()
        self.calls: list[list[Message]] = []

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "StubChatClient":
        """Read ``{"image_id": ..., "completion": ...}`` lines (``image_id`` optional)."""
        queue, by_id = [], {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    text = record["completion"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise IngestError(lineno, f"bad stub record ({exc})") from None
                if record.get("image_id") is not None:
                    by_id[str(record["image_id"])] = text
                else:
                    queue.append(text)
        return cls(queue, by_id)

    def complete(self, messages: Sequence[Message], *, request_id: str | None = None) -> str:
        with self._lock:
            self.calls.append(list(messages))
            if request_id is not None and request_id in self._by_id:
                return self._by_id[request_id]
            if not self._queue:
                raise TransportError(f"stub has no completion for {request_id!r}")
            return self._queue.pop(0)


def complete_with_retry(
    client: ChatClient,
    messages: Sequence[Message],
    *,
    request_id: str | None = None,
    attempts: int = 3,
    backoff: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> str:
    """Call ``client`` with exponential backoff on transient failures."""
    if attempts < 1:
        raise ValueError("attempts must be >= 1")
    for attempt in range(1, attempts + 1):
        try:
            text = client.complete(messages, request_id=request_id)
            break
        except TransientError as exc:
            if attempt == attempts:
                raise TransportError(f"giving up after {attempts} attempts: {exc}") from exc
            delay = backoff * 2 ** (attempt - 1)
            logger.warning("attempt %d/%d failed (%s); retrying in %.1fs", attempt, attempts, exc, delay)
            sleep(delay)
    if not text or not text.strip():
        raise EmptyResponseError(f"empty completion for {request_id!r}")
    return text
