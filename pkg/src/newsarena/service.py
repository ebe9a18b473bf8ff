"""HTTP detection service: submit news, get verdict + explanation, browse
history.

Every accepted submission is appended to a JSONL log before the response
goes out; an in-memory index over that log serves the history endpoint, so
replaying the file reconstructs exactly what clients were told. Strategy
state is a read-only snapshot loaded from a training checkpoint; the service
never trains.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import agents
from .agents import AgentConfig, AgentRole, ReflectMode
from .config import RunConfig
from .core import NewsItem, StrategySet
from .dataset import load_corpus, sample_demos
from .gateway import CompletionClient, Gateway, GatewayError
from .orchestrator import RunState
from .prompts import ParseError

DEFAULT_MAX_TEXT_CHARS = 10_000

# Wire names for the detection methods a client can pick.
METHOD_LLM_GAN = "llm-gan"
BASELINE_METHODS = {
    "zero-shot": ReflectMode.ZERO_SHOT,
    "few-shot": ReflectMode.FEW_SHOT,
    "zero-shot-cot": ReflectMode.ZERO_SHOT_COT,
    "few-shot-cot": ReflectMode.FEW_SHOT_COT,
}


@dataclass(frozen=True)
class ServiceConfig:
    run: RunConfig
    history_path: str
    strategies_path: str | None = None  # RunState checkpoint; None = baseline-only
    demo_corpus_manifest: str | None = None  # enables few-shot baseline methods
    demo_count: int = 4
    max_text_chars: int = DEFAULT_MAX_TEXT_CHARS
    max_concurrency: int = 8
    queue_over_limit: bool = True  # False rejects excess requests with 429
    admin_token: str | None = None
    cors_origins: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be at least 1")
        if self.max_text_chars < 1:
            raise ValueError("max_text_chars must be at least 1")


@dataclass(frozen=True)
class SubmissionRecord:
    """One immutable history entry; error submissions carry no verdict."""

    submission_id: str
    received_at: float
    text: str
    method: str
    label: str | None
    explanation: str | None
    strategy_version: int | None
    elapsed_ms: int
    error: str | None = None
    client_tag: str | None = None

    def __post_init__(self) -> None:
        if (self.label is None) == (self.error is None):
            raise ValueError("a record carries exactly one of label or error")

    def to_dict(self) -> dict[str, Any]:
        return {
            "submission_id": self.submission_id,
            "received_at": self.received_at,
            "text": self.text,
            "method": self.method,
            "label": self.label,
            "explanation": self.explanation,
            "strategy_version": self.strategy_version,
            "elapsed_ms": self.elapsed_ms,
            "error": self.error,
            "client_tag": self.client_tag,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SubmissionRecord":
        return cls(**{k: d.get(k) for k in (
            "submission_id", "received_at", "text", "method", "label",
            "explanation", "strategy_version", "elapsed_ms", "error", "client_tag",
        )})


class SubmissionStore:
    """Append-only JSONL store with a startup-rebuilt in-memory index."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: list[SubmissionRecord] = []
        self._position: dict[str, int] = {}
        if self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        record = SubmissionRecord.from_dict(json.loads(line))
                    except (json.JSONDecodeError, TypeError, ValueError) as err:
                        raise ValueError(
                            f"{self.path}:{lineno}: bad submission record: {err}"
                        ) from err
                    self._index(record)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = self.path.open("a", encoding="utf-8")

    def _index(self, record: SubmissionRecord) -> None:
        if record.submission_id in self._position:
            raise ValueError(f"duplicate submission_id {record.submission_id!r}")
        self._position[record.submission_id] = len(self._records)
        self._records.append(record)

    def append(self, record: SubmissionRecord) -> None:
        with self._lock:
            self._fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
            self._fh.flush()
            self._index(record)

    def page(self, limit: int, before: str | None) -> tuple[list[SubmissionRecord], str | None]:
        """Newest-first page. The cursor names the newest record of the next
        page (pass a response's next_cursor back verbatim to continue)."""
        with self._lock:
            end = len(self._records)
            if before is not None:
                if before not in self._position:
                    raise KeyError(before)
                end = self._position[before] + 1
            start = max(end - limit, 0)
            page = list(reversed(self._records[start:end]))
            next_cursor = self._records[start - 1].submission_id if start > 0 else None
            return page, next_cursor

    def __len__(self) -> int:
        with self._lock:
            return len(self._records)

    def get(self, submission_id: str) -> SubmissionRecord:
        with self._lock:
            return self._records[self._position[submission_id]]

    def close(self) -> None:
        self._fh.close()


def load_strategy_snapshot(path: str | Path) -> StrategySet:
    """Detector strategies from a training checkpoint file."""
    state = RunState.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    return state.s_d


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


class _ServiceState:
    """Mutable pieces shared by the endpoint closures."""

    def __init__(self, cfg: ServiceConfig, gateway: CompletionClient | None):
        self.cfg = cfg
        self.detector: AgentConfig = cfg.run.agent(AgentRole.DETECTOR)
        self.gateway = gateway if gateway is not None else Gateway(cfg.run.backend)
        self.store = SubmissionStore(cfg.history_path)
        self.strategy_lock = threading.Lock()
        self.strategies: StrategySet | None = (
            load_strategy_snapshot(cfg.strategies_path) if cfg.strategies_path else None
        )
        self.demos: tuple[NewsItem, ...] = ()
        if cfg.demo_corpus_manifest:
            corpus = load_corpus(cfg.demo_corpus_manifest)
            self.demos = tuple(sample_demos(corpus, cfg.demo_count,
                                            cfg.run.loop.seed))
        self.semaphore = threading.Semaphore(cfg.max_concurrency)

    def allowed_methods(self) -> list[str]:
        methods = []
        if self.strategies is not None:
            methods.append(METHOD_LLM_GAN)
        for name, mode in BASELINE_METHODS.items():
            if mode.few_shot and not self.demos:
                continue
            methods.append(name)
        return methods

    def current_strategies(self) -> StrategySet | None:
        with self.strategy_lock:
            return self.strategies

    def reload_strategies(self) -> StrategySet:
        if not self.cfg.strategies_path:
            raise FileNotFoundError("no strategies_path configured")
        snapshot = load_strategy_snapshot(self.cfg.strategies_path)
        with self.strategy_lock:
            self.strategies = snapshot
        return snapshot


def create_app(cfg: ServiceConfig, *,
               gateway: CompletionClient | None = None) -> FastAPI:
    state = _ServiceState(cfg, gateway)
    app = FastAPI(title="newsarena detection service", docs_url=None, redoc_url=None)
    app.state.service = state  # tests reach the store through here

    if cfg.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(cfg.cors_origins),
            allow_methods=["GET", "POST"],
            allow_headers=["*"],
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_handler(request: Request, exc: RequestValidationError):
        return _error(400, "bad_request", "malformed request")

    @app.post("/v1/detect")
    def detect_endpoint(payload: dict | None = None):
        if not isinstance(payload, dict):
            return _error(400, "bad_request", "JSON body required")
        text = payload.get("text")
        method = payload.get("method", METHOD_LLM_GAN)
        client_tag = payload.get("client_tag")
        if not isinstance(text, str) or not text.strip():
            return _error(400, "empty_text", "text must be a non-empty string")
        if len(text) > cfg.max_text_chars:
            return _error(400, "text_too_long",
                          f"text exceeds {cfg.max_text_chars} characters")
        allowed = state.allowed_methods()
        if method not in allowed:
            return _error(400, "unknown_method",
                          f"method {method!r} not available; allowed: {allowed}")

        if cfg.queue_over_limit:
            state.semaphore.acquire()
        elif not state.semaphore.acquire(blocking=False):
            return _error(429, "over_capacity",
                          f"more than {cfg.max_concurrency} requests in flight")
        try:
            submission_id = uuid.uuid4().hex
            received_at = time.time()
            started = time.perf_counter()
            item = NewsItem(id=submission_id, text=text)
            try:
                if method == METHOD_LLM_GAN:
                    snapshot = state.current_strategies()
                    assert snapshot is not None  # guarded by allowed_methods
                    prediction = agents.detect(state.detector, item, snapshot,
                                               gateway=state.gateway)
                    version: int | None = snapshot.version
                else:
                    prediction = agents.detect_baseline(
                        state.detector, item, BASELINE_METHODS[method],
                        state.demos, gateway=state.gateway)
                    version = None
            except ParseError:
                elapsed = int((time.perf_counter() - started) * 1000)
                state.store.append(SubmissionRecord(
                    submission_id=submission_id, received_at=received_at,
                    text=text, method=method, label=None, explanation=None,
                    strategy_version=None, elapsed_ms=elapsed,
                    error="unparseable", client_tag=client_tag))
                return _error(422, "unparseable",
                              "detector output could not be parsed after re-asks")
            except GatewayError as err:
                elapsed = int((time.perf_counter() - started) * 1000)
                state.store.append(SubmissionRecord(
                    submission_id=submission_id, received_at=received_at,
                    text=text, method=method, label=None, explanation=None,
                    strategy_version=None, elapsed_ms=elapsed,
                    error="backend_unavailable", client_tag=client_tag))
                return _error(503, "backend_unavailable", str(err))

            elapsed = int((time.perf_counter() - started) * 1000)
            record = SubmissionRecord(
                submission_id=submission_id, received_at=received_at, text=text,
                method=method, label=prediction.verdict.wire,
                explanation=prediction.explanation.text,
                strategy_version=version, elapsed_ms=elapsed,
                client_tag=client_tag)
            state.store.append(record)  # persist before responding
            return {
                "submission_id": submission_id,
                "label": record.label,
                "explanation": record.explanation,
                "strategy_version": version,
                "elapsed_ms": elapsed,
            }
        finally:
            state.semaphore.release()

    @app.get("/v1/history")
    def history_endpoint(limit: int = 50, before: str | None = None):
        if not 1 <= limit <= 200:
            return _error(400, "bad_limit", "limit must be between 1 and 200")
        try:
            page, next_cursor = state.store.page(limit, before)
        except KeyError:
            return _error(400, "bad_cursor", f"unknown cursor {before!r}")
        return {
            "records": [record.to_dict() for record in page],
            "next_cursor": next_cursor,
        }

    @app.get("/v1/strategies/current")
    def strategies_endpoint():
        snapshot = state.current_strategies()
        if snapshot is None:
            return _error(404, "baseline_only",
                          "no strategy snapshot loaded; baseline methods only")
        return {
            "owner": "detector",
            "version": snapshot.version,
            "rules": list(snapshot.rules),
        }

    @app.post("/v1/admin/reload-strategies")
    def reload_endpoint(request: Request):
        if not cfg.admin_token:
            return _error(403, "admin_disabled", "no admin token configured")
        auth = request.headers.get("authorization", "")
        if auth != f"Bearer {cfg.admin_token}":
            return _error(401, "unauthorized", "admin token required")
        try:
            snapshot = state.reload_strategies()
        except (FileNotFoundError, ValueError, KeyError, json.JSONDecodeError) as err:
            return _error(500, "reload_failed", str(err))
        return {"owner": "detector", "version": snapshot.version,
                "rules": list(snapshot.rules)}

    return app
