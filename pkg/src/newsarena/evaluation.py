"""Test-split evaluation, pool-size ablation, and rubric-based judging.

Evaluation runs one detect call per labeled item with bounded parallelism
and folds the outcomes into a MetricsReport; unparseable items are excluded
from the confusion matrix and counted separately. The judge scores paired
explanation sets on the nine quality dimensions, always over identical item
sets so the comparison is fair.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import agents
from .agents import AgentConfig, AgentRole, ReflectMode
from .config import RunConfig
from .core import (
    Explanation,
    MetricsReport,
    NewsItem,
    Prediction,
    QUALITY_DIMENSIONS,
    QualityReport,
    StrategySet,
    Verdict,
    compute_metrics,
    confusion,
)
from .gateway import CompletionClient, Gateway, GatewayError
from .orchestrator import EventLog, RunState, StopStage, Trainer
from .prompts import ParseError

# Above this share of unscorable items a report cannot be trusted.
UNRELIABLE_ERROR_SHARE = 0.05

# Results reported for this system and the plain-prompt LLM baseline on the
# two benchmark corpora. Carried as report metadata for side-by-side context;
# desk-scale runs never assert against them.
PUBLISHED_REFERENCE: Mapping[str, Any] = {
    "detection": {
        "weibo21": {
            "llm-gan": {"macro_f1": 0.804, "accuracy": 0.806,
                        "f1_real": 0.812, "f1_fake": 0.796},
            "gpt-3.5-turbo": {"macro_f1": 0.725, "accuracy": 0.734,
                              "f1_real": 0.774, "f1_fake": 0.676},
        },
        "gossipcop": {
            "llm-gan": {"macro_f1": 0.823, "accuracy": 0.896,
                        "f1_real": 0.934, "f1_fake": 0.712},
            "gpt-3.5-turbo": {"macro_f1": 0.702, "accuracy": 0.813,
                              "f1_real": 0.884, "f1_fake": 0.519},
        },
    },
    "explanation_quality": {
        "gpt-3.5-turbo": {
            "Relevance to Detection": 4.1,
            "Fairness of Real & fake": 4.5,
            "Accuracy for Detection": 4.7,
            "Fact checking": 3.8,
            "Integrity": 4.0,
            "Contextual Understanding": 5.8,
            "Clarity & Coherence": 5.7,
            "Consistency of Information": 5.3,
            "Sensitivity to Updates": 4.3,
        },
        "llm-gan": {
            "Relevance to Detection": 5.7,
            "Fairness of Real & fake": 5.5,
            "Accuracy for Detection": 6.1,
            "Fact checking": 5.2,
            "Integrity": 5.3,
            "Contextual Understanding": 6.0,
            "Clarity & Coherence": 5.8,
            "Consistency of Information": 5.9,
            "Sensitivity to Updates": 5.5,
        },
    },
}


class EvaluationError(Exception):
    pass


@dataclass(frozen=True)
class StrategyDetector:
    """Evaluate with an evolved strategy snapshot."""

    strategies: StrategySet

    def __post_init__(self) -> None:
        if self.strategies.version < 0:
            raise ValueError("strategy snapshot version must be >= 0")


@dataclass(frozen=True)
class BaselinePrompt:
    """Evaluate with a plain prompting mode instead of evolved strategies."""

    mode: ReflectMode
    demos: tuple[NewsItem, ...] = ()

    def __post_init__(self) -> None:
        if self.mode.few_shot and not self.demos:
            raise ValueError(f"{self.mode.value} baseline requires demos")


@dataclass(frozen=True)
class EvalRunSpec:
    """One evaluation run: a detector setup over a labeled item set."""

    detector: AgentConfig
    items: tuple[NewsItem, ...]
    mode: StrategyDetector | BaselinePrompt
    parallelism: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.detector.role is not AgentRole.DETECTOR:
            raise ValueError("evaluation needs a detector agent config")
        if not self.items:
            raise ValueError("evaluation needs at least one item")
        for item in self.items:
            if item.label is None:
                raise ValueError(f"evaluation item {item.id!r} has no label")
        if self.parallelism < 1:
            raise ValueError("parallelism must be at least 1")


@dataclass(frozen=True)
class EvalOutcome:
    """Metrics plus everything needed to audit them.

    report is None when every item errored. unreliable flags an error share
    above UNRELIABLE_ERROR_SHARE; the metrics are still computed but should
    not be quoted.
    """

    report: MetricsReport | None
    predictions: tuple[Prediction, ...]
    error_count: int
    error_items: tuple[str, ...]
    unreliable: bool
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "report": self.report.to_dict() if self.report else None,
            "error_count": self.error_count,
            "error_items": list(self.error_items),
            "unreliable": self.unreliable,
            "metadata": dict(self.metadata),
        }


def _detect_one(spec: EvalRunSpec, item: NewsItem,
                gateway: CompletionClient | None) -> tuple[Prediction | None, str | None]:
    try:
        if isinstance(spec.mode, StrategyDetector):
            pred = agents.detect(spec.detector, item, spec.mode.strategies,
                                 gateway=gateway)
        else:
            pred = agents.detect_baseline(spec.detector, item, spec.mode.mode,
                                          spec.mode.demos, gateway=gateway)
        return pred, None
    except ParseError as err:
        return None, f"parse: {err.reason}"
    except GatewayError as err:
        return None, f"gateway: {err}"


def evaluate(spec: EvalRunSpec, *,
             gateway: CompletionClient | None = None) -> EvalOutcome:
    """Score every item and fold the results deterministically.

    Items run concurrently up to spec.parallelism, but aggregation follows
    the input item order, so the outcome is identical at any parallelism.
    """
    if spec.parallelism == 1:
        results = [_detect_one(spec, item, gateway) for item in spec.items]
    else:
        with ThreadPoolExecutor(max_workers=spec.parallelism) as pool:
            results = list(pool.map(lambda it: _detect_one(spec, it, gateway),
                                    spec.items))

    predictions: list[Prediction] = []
    verdicts: list[Verdict] = []
    labels: list[Verdict] = []
    error_items: list[str] = []
    for item, (pred, _reason) in zip(spec.items, results):
        if pred is None:
            error_items.append(item.id)
            continue
        predictions.append(pred)
        verdicts.append(pred.verdict)
        labels.append(item.label)  # type: ignore[arg-type]

    report = compute_metrics(confusion(verdicts, labels)) if verdicts else None
    error_count = len(error_items)
    return EvalOutcome(
        report=report,
        predictions=tuple(predictions),
        error_count=error_count,
        error_items=tuple(error_items),
        unreliable=error_count > UNRELIABLE_ERROR_SHARE * len(spec.items),
        metadata={"published_reference": PUBLISHED_REFERENCE["detection"]},
    )


def to_table(rows: Sequence[tuple[str, EvalOutcome]]) -> str:
    """Aligned-column text table over named evaluation outcomes."""
    header = ("method", "macF1", "Acc", "F1-real", "F1-fake", "n", "errors")
    body: list[tuple[str, ...]] = []
    for name, outcome in rows:
        if outcome.report is None:
            body.append((name, "-", "-", "-", "-", "0", str(outcome.error_count)))
            continue
        r = outcome.report
        flag = " (unreliable)" if outcome.unreliable else ""
        body.append((name, f"{r.macro_f1:.3f}", f"{r.accuracy:.3f}",
                     f"{r.f1_real:.3f}", f"{r.f1_fake:.3f}", str(r.n),
                     f"{outcome.error_count}{flag}"))
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
             for row in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def dump_predictions(path: str | Path, predictions: Sequence[Prediction]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(json.dumps(pred.to_dict(), ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Pool-size ablation


@dataclass(frozen=True)
class AblationPoint:
    pool_size: int
    outcome: EvalOutcome
    generator_version: int
    detector_version: int


def ablation_pool_curve(config: RunConfig, pool_sizes: Sequence[int],
                        pool: Sequence[NewsItem], train: Sequence[NewsItem],
                        test: Sequence[NewsItem], *, event_log_dir: str | Path,
                        rounds: int | None = None, parallelism: int = 1,
                        demos: Sequence[NewsItem] = (),
                        gateway_factory: Callable[[], CompletionClient] | None = None,
                        ) -> list[AblationPoint]:
    """One full train-then-evaluate cycle per pool size, shared seed.

    Size 0 removes the adversarial stage entirely (no Generator call can
    happen without pool items). Each cycle gets a fresh gateway and its own
    event log under event_log_dir.
    """
    if not pool_sizes:
        raise ValueError("pool_sizes must not be empty")
    if list(pool_sizes) != sorted(set(pool_sizes)):
        raise ValueError("pool_sizes must be strictly ascending")
    if pool_sizes[0] < 0:
        raise ValueError("pool sizes must be non-negative")
    if pool_sizes[-1] > len(pool):
        raise ValueError(f"pool size {pool_sizes[-1]} exceeds the pool ({len(pool)})")

    event_log_dir = Path(event_log_dir)
    event_log_dir.mkdir(parents=True, exist_ok=True)
    points: list[AblationPoint] = []
    for size in pool_sizes:
        gateway = gateway_factory() if gateway_factory else Gateway(config.backend)
        log = EventLog(event_log_dir / f"ablation_pool_{size}.jsonl")
        trainer = Trainer(config, log, gateway=gateway)
        state = trainer.new_state(f"ablation-{size}")
        state = trainer.train(state, list(pool[:size]), train, rounds, demos)
        log.close()
        spec = EvalRunSpec(
            detector=config.agent(AgentRole.DETECTOR),
            items=tuple(test),
            mode=StrategyDetector(state.s_d),
            parallelism=parallelism,
            seed=config.loop.seed,
        )
        outcome = evaluate(spec, gateway=gateway)
        points.append(AblationPoint(
            pool_size=size,
            outcome=outcome,
            generator_version=state.s_g.version,
            detector_version=state.s_d.version,
        ))
    return points


def ablation_table(points: Sequence[AblationPoint]) -> str:
    """Plot-ready table: one row per pool size."""
    header = ("pool_size", "macF1", "F1-real", "F1-fake")
    body: list[tuple[str, ...]] = []
    for point in points:
        r = point.outcome.report
        if r is None:
            body.append((str(point.pool_size), "-", "-", "-"))
        else:
            body.append((str(point.pool_size), f"{r.macro_f1:.3f}",
                         f"{r.f1_real:.3f}", f"{r.f1_fake:.3f}"))
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
             for row in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Explanation judging


@dataclass(frozen=True)
class JudgeSpec:
    judge: AgentConfig
    sample_size: int | None = None  # judge only the first N shared items

    def __post_init__(self) -> None:
        if self.judge.role is not AgentRole.JUDGE:
            raise ValueError("judging needs a judge agent config")
        if self.sample_size is not None and self.sample_size < 1:
            raise ValueError("sample_size must be positive")


@dataclass(frozen=True)
class JudgeResult:
    report: QualityReport | None
    unscored: tuple[str, ...]  # item ids that never produced a valid score


def judge_explanations(spec: JudgeSpec,
                       systems: Mapping[str, Sequence[tuple[NewsItem, Explanation]]],
                       *, gateway: CompletionClient | None = None,
                       ) -> dict[str, JudgeResult]:
    """Score each system's explanations on the nine dimensions.

    Every system must cover exactly the same item ids; otherwise the
    comparison would be unfair and the call is rejected.
    """
    if not systems:
        raise ValueError("at least one system is required")
    id_sets = {name: [item.id for item, _ in cases] for name, cases in systems.items()}
    reference = sorted(set(next(iter(id_sets.values()))))
    for name, ids in id_sets.items():
        if len(ids) != len(set(ids)):
            raise EvaluationError(f"system {name!r} lists an item twice")
        if sorted(set(ids)) != reference:
            raise EvaluationError(
                f"system {name!r} covers a different item set; all systems "
                "must be judged on identical items"
            )

    results: dict[str, JudgeResult] = {}
    for name, cases in systems.items():
        ordered = sorted(cases, key=lambda case: case[0].id)
        if spec.sample_size is not None:
            ordered = ordered[:spec.sample_size]
        totals = {dim: 0 for dim in QUALITY_DIMENSIONS}
        scored = 0
        unscored: list[str] = []
        for item, explanation in ordered:
            try:
                scores = agents.judge_explanation(spec.judge, item, explanation,
                                                  gateway=gateway)
            except (ParseError, GatewayError):
                unscored.append(item.id)
                continue
            scored += 1
            for dim in QUALITY_DIMENSIONS:
                totals[dim] += scores[dim]
        report = None
        if scored:
            report = QualityReport(
                n=scored,
                scores={dim: totals[dim] / scored for dim in QUALITY_DIMENSIONS},
            )
        results[name] = JudgeResult(report=report, unscored=tuple(unscored))
    return results


def judge_table(results: Mapping[str, JudgeResult]) -> str:
    names = list(results)
    header = ("dimension", *names)
    body: list[tuple[str, ...]] = []
    for dim in QUALITY_DIMENSIONS:
        row = [dim]
        for name in names:
            report = results[name].report
            row.append(f"{report.scores[dim]:.1f}" if report else "-")
        body.append(tuple(row))
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row))
             for row in [header, *body]]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Optional early stopping on validation score


class ValidationEarlyStop:
    """Round hook that stops a stage when validation macF1 plateaus.

    Evaluates every `every` rounds; after `patience` consecutive evaluations
    without improvement it raises StopStage through the hook protocol.
    """

    def __init__(self, spec_for_state: Callable[[RunState], EvalRunSpec], *,
                 every: int = 5, patience: int = 3,
                 gateway: CompletionClient | None = None):
        if every < 1 or patience < 1:
            raise ValueError("every and patience must be positive")
        self.spec_for_state = spec_for_state
        self.every = every
        self.patience = patience
        self.gateway = gateway
        self.best = float("-inf")
        self.stale = 0
        self.history: list[tuple[int, float]] = []

    def __call__(self, state: RunState) -> None:
        if state.round_index == 0 or state.round_index % self.every:
            return
        outcome = evaluate(self.spec_for_state(state), gateway=self.gateway)
        score = outcome.report.macro_f1 if outcome.report else float("-inf")
        self.history.append((state.round_index, score))
        if score > self.best:
            self.best = score
            self.stale = 0
        else:
            self.stale += 1
        if self.stale >= self.patience:
            raise StopStage(
                f"validation macF1 stalled at {self.best:.4f} "
                f"for {self.stale} evaluations"
            )
