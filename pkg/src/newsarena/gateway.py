"""Uniform chat-completion interface over two interchangeable backends.

LiveHttp talks to any OpenAI-compatible endpoint (POST {base_url}/chat/completions)
with retry, exponential backoff, and per-minute request pacing. Scripted answers
from a fixture file keyed by the canonical prompt digest, with an ordered
per-tag fallback for fixtures authored before digests are known; it is fully
deterministic and is what every test and replay run uses.

The clock, sleep function, and HTTP transport are injectable so retry and
pacing behavior can be verified under a virtual clock.
"""

from __future__ import annotations

import enum
import hashlib
import json
import os
import threading
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Protocol, Sequence

import httpx

from .core import canonical_json

RETRYABLE_STATUSES = frozenset({408, 429, 500, 502, 503, 504})
AUTH_STATUSES = frozenset({401, 403})


class GatewayError(Exception):
    """Base class for chat-backend failures."""


class AuthError(GatewayError):
    """Authentication rejected; never retried."""


class TransportError(GatewayError):
    """Request failed after exhausting retries (or a non-retryable status)."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class FixtureMissError(GatewayError):
    """Scripted fixture has no response for this request."""

    def __init__(self, digest: str, tag: str):
        super().__init__(f"no fixture response for digest {digest} (tag {tag!r})")
        self.digest = digest
        self.tag = tag


class Role(enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class Message:
    role: Role
    content: str

    def __post_init__(self) -> None:
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion call. request_tag names the agent role and stage
    for audit and fixture sequencing; it is not part of the digest."""

    messages: tuple[Message, ...]
    temperature: float
    max_output_tokens: int
    request_tag: str

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    def with_messages(self, messages: Sequence[Message]) -> "ChatRequest":
        return ChatRequest(
            messages=tuple(messages),
            temperature=self.temperature,
            max_output_tokens=self.max_output_tokens,
            request_tag=self.request_tag,
        )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    prompt_digest: str
    latency_ms: int


class CompletionClient(Protocol):
    """Anything that can answer a ChatRequest (Gateway, backends, wrappers)."""

    def complete(self, req: ChatRequest) -> ChatResponse: ...


class BackendKind(enum.Enum):
    LIVE_HTTP = "live_http"
    SCRIPTED = "scripted"


@dataclass(frozen=True)
class BackendConfig:
    kind: BackendKind
    base_url: str | None = None
    model_name: str | None = None
    api_key_env_var: str = "OPENAI_API_KEY"
    timeout_ms: int = 60_000
    max_retries: int = 3
    retry_backoff_ms: int = 500
    rate_limit_per_min: int | None = None
    fixture_path: str | None = None

    def __post_init__(self) -> None:
        if self.kind is BackendKind.LIVE_HTTP and not (self.base_url and self.model_name):
            raise ValueError("live_http backend requires base_url and model_name")
        if self.kind is BackendKind.SCRIPTED and not self.fixture_path:
            raise ValueError("scripted backend requires fixture_path")

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "base_url": self.base_url,
            "model_name": self.model_name,
            "api_key_env_var": self.api_key_env_var,
            "timeout_ms": self.timeout_ms,
            "max_retries": self.max_retries,
            "retry_backoff_ms": self.retry_backoff_ms,
            "rate_limit_per_min": self.rate_limit_per_min,
            "fixture_path": self.fixture_path,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BackendConfig":
        return cls(
            kind=BackendKind(d["kind"]),
            base_url=d.get("base_url"),
            model_name=d.get("model_name"),
            api_key_env_var=d.get("api_key_env_var", "OPENAI_API_KEY"),
            timeout_ms=d.get("timeout_ms", 60_000),
            max_retries=d.get("max_retries", 3),
            retry_backoff_ms=d.get("retry_backoff_ms", 500),
            rate_limit_per_min=d.get("rate_limit_per_min"),
            fixture_path=d.get("fixture_path"),
        )


def canonical_digest(req: ChatRequest) -> str:
    """Content hash of the canonicalized request.

    Hashes the ordered (role, content) pairs plus temperature and
    max_output_tokens. JSON encoding frames every field, so adjacent values
    can never merge ("ab","c" and "a","bc" hash differently).
    """
    payload = canonical_json({
        "messages": [[m.role.value, m.content] for m in req.messages],
        "temperature": req.temperature,
        "max_output_tokens": req.max_output_tokens,
    })
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# A transport takes (url, headers, json_payload, timeout_s) and returns
# (status_code, parsed_body). Raising TimeoutError marks a retryable timeout.
Transport = Callable[[str, Mapping[str, str], Mapping[str, Any], float], tuple[int, Any]]


def _httpx_transport(url: str, headers: Mapping[str, str], payload: Mapping[str, Any],
                     timeout_s: float) -> tuple[int, Any]:
    try:
        resp = httpx.post(url, headers=dict(headers), json=dict(payload), timeout=timeout_s)
    except httpx.TimeoutException as exc:
        raise TimeoutError(str(exc)) from exc
    try:
        body = resp.json()
    except ValueError:
        body = resp.text
    return resp.status_code, body


class _RateLimiter:
    """Sliding-window pacer: at most ``limit`` requests per 60 s window."""

    def __init__(self, limit: int, clock: Callable[[], float], sleep: Callable[[float], None]):
        self.limit = limit
        self.clock = clock
        self.sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                while self._stamps and now - self._stamps[0] >= 60.0:
                    self._stamps.popleft()
                if len(self._stamps) < self.limit:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            self.sleep(max(wait, 0.0))


class ScriptedBackend:
    """Deterministic fixture-driven stand-in for a live model.

    Lookup order: explicit or learned digest entries first, then the next
    unused per-tag sequence entry. A sequence hit is memoized under the
    request digest, so repeating a request always returns the same text and
    ``export_digest_entries`` can freeze a sequenced run into a digest-keyed
    fixture for replay tests.
    """

    backend_id = "scripted"

    def __init__(self, fixture_path: str | Path):
        self._digest_map: dict[str, str] = {}
        self._sequences: dict[str, deque[str]] = {}
        self._lock = threading.Lock()
        self._served: dict[str, str] = {}
        path = Path(fixture_path)
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                entry = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid fixture line: {exc}") from exc
            if "response" not in entry:
                raise ValueError(f"{path}:{lineno}: fixture entry missing 'response'")
            if entry.get("digest"):
                self._digest_map[entry["digest"]] = entry["response"]
            elif entry.get("tag"):
                self._sequences.setdefault(entry["tag"], deque()).append(entry["response"])
            else:
                raise ValueError(f"{path}:{lineno}: fixture entry needs 'digest' or 'tag'")

    def complete(self, req: ChatRequest) -> ChatResponse:
        digest = canonical_digest(req)
        with self._lock:
            text = self._digest_map.get(digest)
            if text is None:
                queue = self._sequences.get(req.request_tag)
                if not queue:
                    raise FixtureMissError(digest, req.request_tag)
                text = queue.popleft()
                self._digest_map[digest] = text
            self._served[digest] = text
        return ChatResponse(text=text, backend_id=self.backend_id,
                            prompt_digest=digest, latency_ms=0)

    def export_digest_entries(self) -> list[dict[str, str]]:
        """Digest-keyed fixture lines for every request served so far."""
        with self._lock:
            return [{"digest": d, "response": r} for d, r in self._served.items()]


class LiveHttpBackend:
    """OpenAI-compatible chat-completions client with retry and pacing."""

    def __init__(self, cfg: BackendConfig, *, transport: Transport | None = None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        self.transport = transport or _httpx_transport
        self.clock = clock
        self.sleep = sleep
        self.backend_id = cfg.model_name or "live"
        self._limiter = (
            _RateLimiter(cfg.rate_limit_per_min, clock, sleep)
            if cfg.rate_limit_per_min else None
        )

    def complete(self, req: ChatRequest) -> ChatResponse:
        api_key = os.environ.get(self.cfg.api_key_env_var, "")
        if not api_key:
            raise AuthError(f"environment variable {self.cfg.api_key_env_var} is not set")
        url = (self.cfg.base_url or "").rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {api_key}", "Content-Type": "application/json"}
        payload = {
            "model": self.cfg.model_name,
            "messages": [{"role": m.role.value, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        digest = canonical_digest(req)
        started = self.clock()
        last_status: int | None = None
        last_detail = ""
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                self.sleep(self.cfg.retry_backoff_ms / 1000.0 * 2 ** (attempt - 1))
            if self._limiter:
                self._limiter.acquire()
            try:
                status, body = self.transport(url, headers, payload, self.cfg.timeout_ms / 1000.0)
            except TimeoutError as exc:
                last_status, last_detail = None, f"timeout: {exc}"
                continue
            if status in AUTH_STATUSES:
                raise AuthError(f"backend rejected credentials (HTTP {status})")
            if status in RETRYABLE_STATUSES:
                last_status, last_detail = status, f"HTTP {status}"
                continue
            if status != 200:
                raise TransportError(f"backend returned HTTP {status}: {body}", status=status)
            try:
                text = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion body: {body!r}") from exc
            latency_ms = int((self.clock() - started) * 1000)
            return ChatResponse(text=text, backend_id=self.backend_id,
                                prompt_digest=digest, latency_ms=latency_ms)
        raise TransportError(
            f"retries exhausted after {self.cfg.max_retries + 1} attempts ({last_detail})",
            status=last_status,
        )


class Gateway:
    """Shareable handle over one configured backend."""

    def __init__(self, cfg: BackendConfig, *, transport: Transport | None = None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.cfg = cfg
        if cfg.kind is BackendKind.SCRIPTED:
            self.backend: ScriptedBackend | LiveHttpBackend = ScriptedBackend(cfg.fixture_path)
        else:
            self.backend = LiveHttpBackend(cfg, transport=transport, clock=clock, sleep=sleep)

    def complete(self, req: ChatRequest) -> ChatResponse:
        return self.backend.complete(req)


_gateway_cache: dict[BackendConfig, Gateway] = {}
_cache_lock = threading.Lock()


def complete(cfg: BackendConfig, req: ChatRequest) -> ChatResponse:
    """Module-level convenience; reuses one Gateway per config so pacing and
    fixture state survive across calls."""
    with _cache_lock:
        gw = _gateway_cache.get(cfg)
        if gw is None:
            gw = Gateway(cfg)
            _gateway_cache[cfg] = gw
    return gw.complete(req)


def write_fixture(path: str | Path, entries: Sequence[Mapping[str, Any]]) -> None:
    """Write fixture entries ({"digest"|"tag", "response"}) as JSONL."""
    lines = [json.dumps(dict(e), ensure_ascii=False) for e in entries]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
