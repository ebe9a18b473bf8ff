"""Training orchestration: adversarial rounds, reflection passes, event log.

Every agent call and routing decision appends one EventRecord to an
append-only JSONL log. Strategy snapshots, cursors, and the config digest
live in RunState; a checkpoint is an atomic JSON dump of that state. Under
the scripted backend the whole loop is a pure function of (config, data,
seed), so an interrupted-and-resumed run reproduces the exact event log of
an uninterrupted one, timestamps aside.

Routing per adversarial round follows the binary rule: the detector catching
the forgery upgrades the generator; the detector being fooled upgrades the
detector. Exactly one upgrade attempt happens per round.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import random
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import agents
from .agents import AgentRole, ParseRetryHook, ReflectMode, with_created_from_event
from .config import RunConfig, Schedule
from .core import NewsItem, StrategyOwner, StrategySet, Verdict, canonical_json
from .gateway import (
    ChatRequest,
    ChatResponse,
    CompletionClient,
    Gateway,
    GatewayError,
    AuthError,
)
from .prompts import ParseError


class OrchestratorError(Exception):
    """Invalid orchestration request (bad stage order, corrupt log, ...)."""


class CheckpointMismatchError(OrchestratorError):
    """Checkpoint was produced under a different configuration."""


class RunAborted(OrchestratorError):
    """Too many consecutive skipped rounds; the backend is effectively down."""


class StopStage(Exception):
    """Raised by a round hook to interrupt training at a round boundary."""


class Stage(enum.Enum):
    ADVERSARY = "adversary"
    REFLECTION = "reflection"
    DONE = "done"


class EventKind(enum.Enum):
    FORGE = "forge"
    DETECT = "detect"
    UPGRADE_GEN = "upgrade_gen"
    UPGRADE_DET_ADV = "upgrade_det_adv"
    REFLECT = "reflect"
    UPGRADE_DET_REFL = "upgrade_det_refl"
    PARSE_RETRY = "parse_retry"
    SKIP = "skip"
    CHECKPOINT = "checkpoint"


class Outcome(enum.Enum):
    DETECTOR_CORRECT = "detector_correct"
    DETECTOR_WRONG = "detector_wrong"
    NOT_APPLICABLE = "not_applicable"
    ERROR = "error"


UPGRADE_KINDS = frozenset({
    EventKind.UPGRADE_GEN, EventKind.UPGRADE_DET_ADV, EventKind.UPGRADE_DET_REFL,
})


@dataclass(frozen=True)
class EventRecord:
    """One log line. Everything except the wall-clock timestamp is
    deterministic under the scripted backend and participates in digest()."""

    seq: int
    ts: float
    stage: Stage
    round: int
    kind: EventKind
    item_id: str | None
    prompt_digest: str | None
    response_digest: str | None
    outcome: Outcome
    payload: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        if self.seq < 1:
            raise ValueError("event seq starts at 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "ts": self.ts,
            "stage": self.stage.value,
            "round": self.round,
            "kind": self.kind.value,
            "item_id": self.item_id,
            "prompt_digest": self.prompt_digest,
            "response_digest": self.response_digest,
            "outcome": self.outcome.value,
            "payload": dict(self.payload) if self.payload is not None else None,
        }

    def hashed_fields(self) -> dict[str, Any]:
        d = self.to_dict()
        del d["ts"]
        return d

    def digest(self) -> str:
        return hashlib.sha256(
            canonical_json(self.hashed_fields()).encode("utf-8")
        ).hexdigest()

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "EventRecord":
        return cls(
            seq=d["seq"],
            ts=d["ts"],
            stage=Stage(d["stage"]),
            round=d["round"],
            kind=EventKind(d["kind"]),
            item_id=d.get("item_id"),
            prompt_digest=d.get("prompt_digest"),
            response_digest=d.get("response_digest"),
            outcome=Outcome(d["outcome"]),
            payload=d.get("payload"),
        )


class EventLog:
    """Append-only JSONL event log with gapless seq numbers.

    Appends flush immediately so a crash loses at most the line being
    written; resume truncates anything past the checkpointed offset.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.last_seq = 0
        if self.path.exists():
            for record in read_events(self.path):
                self.last_seq = record.seq
        self._fh = self.path.open("a", encoding="utf-8")

    def append(self, record: EventRecord) -> EventRecord:
        if record.seq != self.last_seq + 1:
            raise OrchestratorError(
                f"event seq {record.seq} breaks the gapless sequence "
                f"(expected {self.last_seq + 1})"
            )
        self._fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
        self._fh.flush()
        self.last_seq = record.seq
        return record

    def truncate_to(self, seq: int) -> None:
        """Drop every record with seq greater than the given offset."""
        if seq > self.last_seq:
            raise OrchestratorError(
                f"cannot truncate to seq {seq}: log ends at {self.last_seq}"
            )
        self._fh.close()
        kept = [r for r in read_events(self.path) if r.seq <= seq]
        tmp = self.path.with_suffix(self.path.suffix + ".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            for record in kept:
                fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
        tmp.replace(self.path)
        self.last_seq = seq
        self._fh = self.path.open("a", encoding="utf-8")

    def close(self) -> None:
        self._fh.close()


def read_events(path: str | Path) -> list[EventRecord]:
    """Load a full event log, enforcing the gapless-seq invariant."""
    records: list[EventRecord] = []
    path = Path(path)
    if not path.exists():
        return records
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = EventRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, ValueError) as err:
                raise OrchestratorError(f"{path}:{lineno}: bad event record: {err}") from err
            if record.seq != len(records) + 1:
                raise OrchestratorError(
                    f"{path}:{lineno}: seq {record.seq} breaks the gapless sequence"
                )
            records.append(record)
    return records


@dataclass(frozen=True)
class RunState:
    """Complete training position: strategies, cursors, and provenance."""

    run_id: str
    stage: Stage
    round_index: int  # completed adversarial rounds
    pool_epoch: int
    pool_cursor: int
    train_cursor: int
    s_g: StrategySet
    s_d: StrategySet
    seed: int
    config_digest: str
    event_log_offset: int  # seq of the last event written for this state

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "stage": self.stage.value,
            "round_index": self.round_index,
            "pool_epoch": self.pool_epoch,
            "pool_cursor": self.pool_cursor,
            "train_cursor": self.train_cursor,
            "s_g": self.s_g.to_dict(),
            "s_d": self.s_d.to_dict(),
            "seed": self.seed,
            "config_digest": self.config_digest,
            "event_log_offset": self.event_log_offset,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunState":
        return cls(
            run_id=d["run_id"],
            stage=Stage(d["stage"]),
            round_index=d["round_index"],
            pool_epoch=d["pool_epoch"],
            pool_cursor=d["pool_cursor"],
            train_cursor=d["train_cursor"],
            s_g=StrategySet.from_dict(d["s_g"]),
            s_d=StrategySet.from_dict(d["s_d"]),
            seed=d["seed"],
            config_digest=d["config_digest"],
            event_log_offset=d["event_log_offset"],
        )


def pool_permutation(seed: int, epoch: int, n: int) -> list[int]:
    """Item order for one pass over the pool; reshuffles differ per epoch."""
    return random.Random(f"{seed}:pool:{epoch}").sample(range(n), n)


def train_order(seed: int, n: int) -> list[int]:
    """Item order for the single reflection pass over the training set."""
    return random.Random(f"{seed}:train").sample(range(n), n)


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class _RecordingClient:
    """Wraps the completion path to remember the digests of the last call."""

    def __init__(self, complete: Callable[[ChatRequest], ChatResponse]):
        self._complete = complete
        self.last_prompt_digest: str | None = None
        self.last_response_digest: str | None = None

    def complete(self, req: ChatRequest) -> ChatResponse:
        resp = self._complete(req)
        self.last_prompt_digest = resp.prompt_digest
        self.last_response_digest = _sha256_text(resp.text)
        return resp


# Hook called after every completed (or skipped) round / reflection item;
# raising StopStage interrupts training at that boundary.
RoundHook = Callable[["RunState"], None]


class Trainer:
    """Drives both training stages against one event log.

    A Trainer owns no state between calls; RunState travels in and out of
    every stage method so tests and the CLI can checkpoint wherever they
    like.
    """

    def __init__(self, config: RunConfig, event_log: EventLog, *,
                 gateway: CompletionClient | None = None,
                 clock: Callable[[], float] = time.time,
                 round_hook: RoundHook | None = None):
        self.config = config
        self.log = event_log
        self.clock = clock
        self.round_hook = round_hook
        self._gen_cfg = config.agent(AgentRole.GENERATOR)
        self._det_cfg = config.agent(AgentRole.DETECTOR)
        self._ref_cfg = config.agent(AgentRole.REFLECTOR)
        if gateway is None:
            gateway = Gateway(config.backend)
        self._client = _RecordingClient(gateway.complete)
        self._consecutive_skips = 0

    # -- state management ---------------------------------------------------

    def new_state(self, run_id: str | None = None) -> RunState:
        return RunState(
            run_id=run_id or uuid.uuid4().hex[:12],
            stage=Stage.ADVERSARY,
            round_index=0,
            pool_epoch=0,
            pool_cursor=0,
            train_cursor=0,
            s_g=StrategySet.initial(StrategyOwner.GENERATOR),
            s_d=StrategySet.initial(StrategyOwner.DETECTOR),
            seed=self.config.loop.seed,
            config_digest=self.config.digest(),
            event_log_offset=0,
        )

    def checkpoint(self, state: RunState, path: str | Path) -> Path:
        """Atomically write the state file (write temp, then rename)."""
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(state.to_dict(), ensure_ascii=False, indent=2),
                       encoding="utf-8")
        tmp.replace(path)
        return path

    def resume(self, path: str | Path) -> RunState:
        """Reload a checkpoint, refusing config drift, and trim the log back
        to the checkpointed offset (dropping any partial work after it)."""
        state = RunState.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        current = self.config.digest()
        if state.config_digest != current:
            raise CheckpointMismatchError(
                f"checkpoint was written under config {state.config_digest[:12]}, "
                f"current config is {current[:12]}; refusing to resume"
            )
        if self.log.last_seq < state.event_log_offset:
            raise OrchestratorError(
                f"event log ends at seq {self.log.last_seq} but the checkpoint "
                f"expects {state.event_log_offset}; log is truncated or missing"
            )
        if self.log.last_seq > state.event_log_offset:
            self.log.truncate_to(state.event_log_offset)
        return state

    # -- event emission -----------------------------------------------------

    def _emit(self, state: RunState, stage: Stage, round_no: int, kind: EventKind,
              item_id: str | None, outcome: Outcome,
              payload: Mapping[str, Any] | None = None,
              prompt_digest: str | None = None,
              response_digest: str | None = None) -> tuple[RunState, EventRecord]:
        record = EventRecord(
            seq=self.log.last_seq + 1,
            ts=self.clock(),
            stage=stage,
            round=round_no,
            kind=kind,
            item_id=item_id,
            prompt_digest=prompt_digest,
            response_digest=response_digest,
            outcome=outcome,
            payload=payload,
        )
        self.log.append(record)
        state = dataclasses.replace(state, event_log_offset=record.seq)
        return state, record

    def _emit_call(self, state: RunState, stage: Stage, round_no: int,
                   kind: EventKind, item_id: str | None, outcome: Outcome,
                   payload: Mapping[str, Any] | None = None) -> tuple[RunState, EventRecord]:
        """Emit an event for the agent call that just went through the
        recording client, carrying its prompt/response digests."""
        return self._emit(
            state, stage, round_no, kind, item_id, outcome, payload,
            prompt_digest=self._client.last_prompt_digest,
            response_digest=self._client.last_response_digest,
        )

    def _retry_hook(self, state_ref: list[RunState], stage: Stage, round_no: int,
                    item_id: str | None) -> ParseRetryHook:
        def hook(req: ChatRequest, resp: ChatResponse, err: ParseError) -> None:
            state_ref[0], _ = self._emit(
                state_ref[0], stage, round_no, EventKind.PARSE_RETRY, item_id,
                Outcome.NOT_APPLICABLE,
                payload={"reason": err.reason},
                prompt_digest=resp.prompt_digest,
                response_digest=_sha256_text(resp.text),
            )
        return hook

    def _skip(self, state: RunState, stage: Stage, round_no: int,
              item_id: str | None, reason: str) -> RunState:
        state, _ = self._emit(state, stage, round_no, EventKind.SKIP, item_id,
                              Outcome.ERROR, payload={"reason": reason})
        self._consecutive_skips += 1
        if self._consecutive_skips > self.config.loop.max_consecutive_skips:
            raise RunAborted(
                f"{self._consecutive_skips} consecutive skipped steps "
                f"(budget {self.config.loop.max_consecutive_skips}); aborting run"
            )
        return state

    # -- adversarial stage --------------------------------------------------

    def _adversarial_round(self, state: RunState, pool: Sequence[NewsItem]) -> RunState:
        round_no = state.round_index + 1
        perm = pool_permutation(state.seed, state.pool_epoch, len(pool))
        x = pool[perm[state.pool_cursor]]
        state_ref = [state]
        retry = self._retry_hook(state_ref, Stage.ADVERSARY, round_no, x.id)

        def advance(s: RunState) -> RunState:
            cursor, epoch = s.pool_cursor + 1, s.pool_epoch
            if cursor >= len(pool):
                cursor, epoch = 0, epoch + 1
            return dataclasses.replace(s, round_index=round_no,
                                       pool_cursor=cursor, pool_epoch=epoch)

        try:
            forged, fake_expl = agents.generate_fake(
                self._gen_cfg, x, state.s_g,
                forged_id=f"{x.id}::r{round_no}",
                gateway=self._client, on_parse_retry=retry,
            )
        except ParseError:
            return advance(self._skip(state_ref[0], Stage.ADVERSARY, round_no, x.id,
                                      "forge unparseable after re-asks"))
        except AuthError:
            raise
        except GatewayError as err:
            return advance(self._skip(state_ref[0], Stage.ADVERSARY, round_no, x.id,
                                      f"forge failed: {err}"))
        state = state_ref[0]
        state, _ = self._emit_call(
            state, Stage.ADVERSARY, round_no, EventKind.FORGE, x.id,
            Outcome.NOT_APPLICABLE, payload={"forged_id": forged.id},
        )
        state_ref[0] = state

        retry = self._retry_hook(state_ref, Stage.ADVERSARY, round_no, forged.id)
        try:
            prediction = agents.detect(self._det_cfg, forged, state.s_d,
                                       gateway=self._client, on_parse_retry=retry)
        except ParseError:
            return advance(self._skip(state_ref[0], Stage.ADVERSARY, round_no,
                                      forged.id, "detect unparseable after re-asks"))
        except AuthError:
            raise
        except GatewayError as err:
            return advance(self._skip(state_ref[0], Stage.ADVERSARY, round_no,
                                      forged.id, f"detect failed: {err}"))
        state = state_ref[0]

        # Ground truth is Fake by construction, so the binary routing rule
        # reduces to: verdict Fake upgrades the generator, else the detector.
        correct = prediction.verdict is Verdict.FAKE
        outcome = Outcome.DETECTOR_CORRECT if correct else Outcome.DETECTOR_WRONG
        state, _ = self._emit_call(
            state, Stage.ADVERSARY, round_no, EventKind.DETECT, forged.id, outcome,
            payload={"verdict": prediction.verdict.wire,
                     "strategy_version": prediction.detector_strategy_version},
        )
        state_ref[0] = state

        if correct:
            retry = self._retry_hook(state_ref, Stage.ADVERSARY, round_no, x.id)
            try:
                upgraded = agents.upgrade_generator(
                    self._gen_cfg, x, prediction.explanation, state.s_g,
                    forgery=forged, gateway=self._client, on_parse_retry=retry,
                )
            except ParseError:
                return advance(self._skip(state_ref[0], Stage.ADVERSARY, round_no,
                                          x.id, "generator upgrade unparseable"))
            except AuthError:
                raise
            except GatewayError as err:
                return advance(self._skip(state_ref[0], Stage.ADVERSARY, round_no,
                                          x.id, f"generator upgrade failed: {err}"))
            state = state_ref[0]
            state, record = self._emit_call(
                state, Stage.ADVERSARY, round_no, EventKind.UPGRADE_GEN, x.id,
                Outcome.NOT_APPLICABLE,
                payload={"from_version": state.s_g.version,
                         "to_version": upgraded.version,
                         "rules": list(upgraded.rules)},
            )
            state = dataclasses.replace(
                state, s_g=with_created_from_event(upgraded, record.seq))
        else:
            retry = self._retry_hook(state_ref, Stage.ADVERSARY, round_no, forged.id)
            try:
                upgraded = agents.upgrade_detector_adversary(
                    self._det_cfg, x, forged, fake_expl, state.s_d,
                    gateway=self._client, on_parse_retry=retry,
                )
            except ParseError:
                return advance(self._skip(state_ref[0], Stage.ADVERSARY, round_no,
                                          forged.id, "detector upgrade unparseable"))
            except AuthError:
                raise
            except GatewayError as err:
                return advance(self._skip(state_ref[0], Stage.ADVERSARY, round_no,
                                          forged.id, f"detector upgrade failed: {err}"))
            state = state_ref[0]
            state, record = self._emit_call(
                state, Stage.ADVERSARY, round_no, EventKind.UPGRADE_DET_ADV, forged.id,
                Outcome.NOT_APPLICABLE,
                payload={"from_version": state.s_d.version,
                         "to_version": upgraded.version,
                         "rules": list(upgraded.rules)},
            )
            state = dataclasses.replace(
                state, s_d=with_created_from_event(upgraded, record.seq))

        self._consecutive_skips = 0
        return advance(state)

    def run_adversarial_stage(self, state: RunState, pool: Sequence[NewsItem],
                              rounds: int) -> RunState:
        """Run adversarial rounds until round_index reaches the target.

        `rounds` is the total target for the run, so resuming with the same
        target continues where the checkpoint left off. An empty pool (or a
        zero target) completes the stage immediately: that is the
        adversary-removed ablation, and it performs no Generator calls.
        """
        if rounds < 0:
            raise ValueError("rounds must be non-negative")
        for item in pool:
            if item.label is not Verdict.REAL:
                raise OrchestratorError(f"pool item {item.id!r} is not labeled real")
        if state.stage is not Stage.ADVERSARY:
            return state
        self._consecutive_skips = 0
        try:
            while pool and state.round_index < rounds:
                state = self._adversarial_round(state, pool)
                if self.round_hook is not None:
                    self.round_hook(state)
        except StopStage:
            return state
        state, _ = self._emit(
            state, Stage.ADVERSARY, state.round_index, EventKind.CHECKPOINT, None,
            Outcome.NOT_APPLICABLE,
            payload={"round_index": state.round_index,
                     "pool_epoch": state.pool_epoch,
                     "pool_cursor": state.pool_cursor},
        )
        return dataclasses.replace(state, stage=Stage.REFLECTION)

    # -- reflection stage ---------------------------------------------------

    def _reflection_item(self, state: RunState, item: NewsItem, position: int,
                         demos: Sequence[NewsItem]) -> RunState:
        if item.label is None:
            raise OrchestratorError(f"training item {item.id!r} has no label")
        state_ref = [state]
        retry = self._retry_hook(state_ref, Stage.REFLECTION, position, item.id)

        def advance(s: RunState) -> RunState:
            return dataclasses.replace(s, train_cursor=s.train_cursor + 1)

        try:
            prediction = agents.detect(self._det_cfg, item, state.s_d,
                                       gateway=self._client, on_parse_retry=retry)
        except ParseError:
            return advance(self._skip(state_ref[0], Stage.REFLECTION, position,
                                      item.id, "detect unparseable after re-asks"))
        except AuthError:
            raise
        except GatewayError as err:
            return advance(self._skip(state_ref[0], Stage.REFLECTION, position,
                                      item.id, f"detect failed: {err}"))
        state = state_ref[0]

        correct = prediction.verdict is item.label
        outcome = Outcome.DETECTOR_CORRECT if correct else Outcome.DETECTOR_WRONG
        state, _ = self._emit_call(
            state, Stage.REFLECTION, position, EventKind.DETECT, item.id, outcome,
            payload={"verdict": prediction.verdict.wire,
                     "strategy_version": prediction.detector_strategy_version},
        )
        state_ref[0] = state
        if correct:
            self._consecutive_skips = 0
            return advance(state)

        try:
            reflection = agents.reflect(
                self._ref_cfg, item, prediction, item.label,
                mode=self.config.reflection.mode, demos=demos,
                gateway=self._client, on_parse_retry=retry,
            )
        except ParseError:
            return advance(self._skip(state_ref[0], Stage.REFLECTION, position,
                                      item.id, "reflection unparseable after re-asks"))
        except AuthError:
            raise
        except GatewayError as err:
            return advance(self._skip(state_ref[0], Stage.REFLECTION, position,
                                      item.id, f"reflection failed: {err}"))
        state = state_ref[0]
        state, _ = self._emit_call(
            state, Stage.REFLECTION, position, EventKind.REFLECT, item.id,
            Outcome.NOT_APPLICABLE,
        )
        state_ref[0] = state

        try:
            upgraded = agents.upgrade_detector_reflection(
                self._det_cfg, item, reflection, state.s_d,
                gateway=self._client, on_parse_retry=retry,
            )
        except ParseError:
            return advance(self._skip(state_ref[0], Stage.REFLECTION, position,
                                      item.id, "detector upgrade unparseable"))
        except AuthError:
            raise
        except GatewayError as err:
            return advance(self._skip(state_ref[0], Stage.REFLECTION, position,
                                      item.id, f"detector upgrade failed: {err}"))
        state = state_ref[0]
        state, record = self._emit_call(
            state, Stage.REFLECTION, position, EventKind.UPGRADE_DET_REFL, item.id,
            Outcome.NOT_APPLICABLE,
            payload={"from_version": state.s_d.version,
                     "to_version": upgraded.version,
                     "rules": list(upgraded.rules)},
        )
        state = dataclasses.replace(
            state, s_d=with_created_from_event(upgraded, record.seq))
        self._consecutive_skips = 0
        return advance(state)

    def run_reflection_stage(self, state: RunState, train: Sequence[NewsItem],
                             demos: Sequence[NewsItem] = ()) -> RunState:
        """One seeded pass over the training items (after the adversarial
        stage). Disabled reflection completes the stage without any events."""
        if state.stage is Stage.DONE:
            return state
        if state.stage is not Stage.REFLECTION:
            raise OrchestratorError(
                "reflection runs after the adversarial stage has completed"
            )
        if not self.config.reflection.enabled:
            return dataclasses.replace(state, stage=Stage.DONE)
        if self.config.reflection.mode.few_shot and not demos:
            raise OrchestratorError(
                f"reflection mode {self.config.reflection.mode.value} needs demos"
            )
        order = train_order(state.seed, len(train))
        self._consecutive_skips = 0
        try:
            while state.train_cursor < len(train):
                position = state.train_cursor + 1
                item = train[order[state.train_cursor]]
                state = self._reflection_item(state, item, position, demos)
                if self.round_hook is not None:
                    self.round_hook(state)
        except StopStage:
            return state
        state, _ = self._emit(
            state, Stage.REFLECTION, state.train_cursor, EventKind.CHECKPOINT, None,
            Outcome.NOT_APPLICABLE, payload={"train_cursor": state.train_cursor},
        )
        return dataclasses.replace(state, stage=Stage.DONE)

    # -- full run -----------------------------------------------------------

    def train(self, state: RunState, pool: Sequence[NewsItem],
              train_items: Sequence[NewsItem], rounds: int | None = None,
              demos: Sequence[NewsItem] = ()) -> RunState:
        """Both stages under the configured schedule."""
        target = self.config.loop.rounds if rounds is None else rounds
        if self.config.loop.schedule is Schedule.SEQUENTIAL:
            state = self.run_adversarial_stage(state, pool, target)
            return self.run_reflection_stage(state, train_items, demos)
        return self._train_interleaved(state, pool, train_items, target, demos)

    def _train_interleaved(self, state: RunState, pool: Sequence[NewsItem],
                           train_items: Sequence[NewsItem], rounds: int,
                           demos: Sequence[NewsItem] = ()) -> RunState:
        """Alternate one adversarial round and one reflection item.

        The merge order is a pure function of the two cursors, so resuming
        mid-run continues the exact same interleaving. Reflection items
        processed before the adversarial stage completes are logged with
        their own stage, like any other reflection work.
        """
        for item in pool:
            if item.label is not Verdict.REAL:
                raise OrchestratorError(f"pool item {item.id!r} is not labeled real")
        reflection_on = self.config.reflection.enabled
        if reflection_on and self.config.reflection.mode.few_shot and not demos:
            raise OrchestratorError(
                f"reflection mode {self.config.reflection.mode.value} needs demos"
            )
        order = train_order(state.seed, len(train_items))
        self._consecutive_skips = 0
        try:
            while True:
                adversary_live = (state.stage is Stage.ADVERSARY and pool
                                  and state.round_index < rounds)
                reflection_live = (reflection_on
                                   and state.stage is not Stage.DONE
                                   and state.train_cursor < len(train_items))
                if not adversary_live and not reflection_live:
                    break
                if adversary_live:
                    state = self._adversarial_round(state, pool)
                    if self.round_hook is not None:
                        self.round_hook(state)
                if reflection_live and state.train_cursor < len(train_items):
                    position = state.train_cursor + 1
                    item = train_items[order[state.train_cursor]]
                    state = self._reflection_item(state, item, position, demos)
                    if self.round_hook is not None:
                        self.round_hook(state)
        except StopStage:
            return state
        if state.stage is Stage.ADVERSARY:
            state, _ = self._emit(
                state, Stage.ADVERSARY, state.round_index, EventKind.CHECKPOINT, None,
                Outcome.NOT_APPLICABLE,
                payload={"round_index": state.round_index,
                         "pool_epoch": state.pool_epoch,
                         "pool_cursor": state.pool_cursor},
            )
            state = dataclasses.replace(state, stage=Stage.REFLECTION)
        if state.stage is Stage.REFLECTION:
            if reflection_on:
                state, _ = self._emit(
                    state, Stage.REFLECTION, state.train_cursor, EventKind.CHECKPOINT,
                    None, Outcome.NOT_APPLICABLE,
                    payload={"train_cursor": state.train_cursor},
                )
            state = dataclasses.replace(state, stage=Stage.DONE)
        return state


# ---------------------------------------------------------------------------
# Event-log folding


@dataclass(frozen=True)
class FoldResult:
    """What the event log alone says the run state must be."""

    generator_version: int
    detector_version: int
    generator_rules: tuple[str, ...]
    detector_rules: tuple[str, ...]
    rounds_seen: int
    forge_count: int
    detect_count: int
    reflect_count: int
    skip_count: int
    detector_correct: int
    detector_wrong: int


def fold_events(events: Sequence[EventRecord]) -> FoldResult:
    """Reconstruct strategy versions and counters by replaying the log."""
    g_version = d_version = 0
    g_rules: tuple[str, ...] = ()
    d_rules: tuple[str, ...] = ()
    rounds = forge = detect = reflect = skip = correct = wrong = 0
    for event in events:
        if event.stage is Stage.ADVERSARY and event.kind is not EventKind.CHECKPOINT:
            rounds = max(rounds, event.round)
        if event.kind is EventKind.FORGE:
            forge += 1
        elif event.kind is EventKind.DETECT:
            detect += 1
            if event.outcome is Outcome.DETECTOR_CORRECT:
                correct += 1
            elif event.outcome is Outcome.DETECTOR_WRONG:
                wrong += 1
        elif event.kind is EventKind.REFLECT:
            reflect += 1
        elif event.kind is EventKind.SKIP:
            skip += 1
        elif event.kind is EventKind.UPGRADE_GEN:
            g_version += 1
            if event.payload:
                g_rules = tuple(event.payload.get("rules", ()))
        elif event.kind in (EventKind.UPGRADE_DET_ADV, EventKind.UPGRADE_DET_REFL):
            d_version += 1
            if event.payload:
                d_rules = tuple(event.payload.get("rules", ()))
    return FoldResult(
        generator_version=g_version,
        detector_version=d_version,
        generator_rules=g_rules,
        detector_rules=d_rules,
        rounds_seen=rounds,
        forge_count=forge,
        detect_count=detect,
        reflect_count=reflect,
        skip_count=skip,
        detector_correct=correct,
        detector_wrong=wrong,
    )


def event_digests(events: Sequence[EventRecord]) -> list[str]:
    """Per-event digests over the deterministic fields (everything but ts)."""
    return [event.digest() for event in events]
