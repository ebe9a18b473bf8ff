"""Domain types shared by every module, plus binary classification metrics.

All types here are immutable after construction and safe to share across
threads. Verdicts serialize as the wire strings "real"/"fake"; every type
offers ``to_dict``/``from_dict`` and a canonical JSON form.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

MAX_RULES = 20
MAX_RULE_CHARS = 280

# Explanation-quality rubric dimensions, scored 1-7 each.
QUALITY_DIMENSIONS: tuple[str, ...] = (
    "Relevance to Detection",
    "Fairness of Real & fake",
    "Accuracy for Detection",
    "Fact checking",
    "Integrity",
    "Contextual Understanding",
    "Clarity & Coherence",
    "Consistency of Information",
    "Sensitivity to Updates",
)


def canonical_json(data: Any) -> str:
    """Deterministic JSON encoding: sorted keys, no whitespace, raw UTF-8."""
    return json.dumps(data, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


class Verdict(enum.Enum):
    """Authenticity of a news item. Real encodes to 0, Fake to 1."""

    REAL = 0
    FAKE = 1

    @property
    def wire(self) -> str:
        return "real" if self is Verdict.REAL else "fake"

    @classmethod
    def from_wire(cls, value: str) -> "Verdict":
        norm = value.strip().lower()
        if norm == "real":
            return cls.REAL
        if norm == "fake":
            return cls.FAKE
        raise ValueError(f"unknown verdict {value!r}; expected 'real' or 'fake'")

    def flipped(self) -> "Verdict":
        return Verdict.FAKE if self is Verdict.REAL else Verdict.REAL


class Split(enum.Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"
    POOL = "pool"


class Origin(enum.Enum):
    CORPUS = "corpus"
    GENERATED = "generated"


class ExplanationKind(enum.Enum):
    DETECTION = "detection"
    FAKE = "fake"
    REFLECTION = "reflection"


class StrategyOwner(enum.Enum):
    GENERATOR = "generator"
    DETECTOR = "detector"


@dataclass(frozen=True)
class NewsItem:
    """A news text with optional ground truth.

    Generated items (forgeries) always carry label Fake, a source_id pointing
    at the real item they were forged from, and no corpus split.
    """

    id: str
    text: str
    label: Verdict | None = None
    split: Split | None = None
    origin: Origin = Origin.CORPUS
    source_id: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("news item id must be non-empty")
        if not self.text or not self.text.strip():
            raise ValueError(f"news item {self.id!r} has empty text")
        if self.origin is Origin.GENERATED:
            if self.label is not Verdict.FAKE:
                raise ValueError(f"generated item {self.id!r} must be labeled fake")
            if not self.source_id:
                raise ValueError(f"generated item {self.id!r} must carry source_id")
        if self.split is Split.POOL and self.label is not Verdict.REAL:
            raise ValueError(f"pool item {self.id!r} must be labeled real")

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "label": self.label.wire if self.label is not None else None,
            "split": self.split.value if self.split is not None else None,
            "origin": self.origin.value,
            "source_id": self.source_id,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "NewsItem":
        return cls(
            id=d["id"],
            text=d["text"],
            label=Verdict.from_wire(d["label"]) if d.get("label") else None,
            split=Split(d["split"]) if d.get("split") else None,
            origin=Origin(d.get("origin", "corpus")),
            source_id=d.get("source_id"),
        )


@dataclass(frozen=True)
class Explanation:
    text: str
    kind: ExplanationKind

    def __post_init__(self) -> None:
        if not self.text or not self.text.strip():
            raise ValueError("explanation text must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Explanation":
        return cls(text=d["text"], kind=ExplanationKind(d["kind"]))


@dataclass(frozen=True)
class StrategySet:
    """Versioned ordered list of natural-language rules for one agent.

    Version 0 is the null initialization and must have no rules; every
    successful upgrade produces a new snapshot with version + 1.
    """

    owner: StrategyOwner
    version: int
    rules: tuple[str, ...] = ()
    created_from_event: int | None = None

    def __post_init__(self) -> None:
        if self.version < 0:
            raise ValueError("strategy version must be non-negative")
        if (self.version == 0) != (len(self.rules) == 0):
            raise ValueError("version 0 iff rules empty (null initialization)")
        if len(self.rules) > MAX_RULES:
            raise ValueError(f"at most {MAX_RULES} rules allowed, got {len(self.rules)}")
        for rule in self.rules:
            if not rule or not rule.strip():
                raise ValueError("strategy rules must be non-empty")
            if len(rule) > MAX_RULE_CHARS:
                raise ValueError(f"rule exceeds {MAX_RULE_CHARS} chars: {rule[:40]!r}...")

    @classmethod
    def initial(cls, owner: StrategyOwner) -> "StrategySet":
        return cls(owner=owner, version=0, rules=())

    def upgraded(self, rules: Sequence[str], created_from_event: int | None = None) -> "StrategySet":
        return StrategySet(
            owner=self.owner,
            version=self.version + 1,
            rules=tuple(rules),
            created_from_event=created_from_event,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "owner": self.owner.value,
            "version": self.version,
            "rules": list(self.rules),
            "created_from_event": self.created_from_event,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "StrategySet":
        return cls(
            owner=StrategyOwner(d["owner"]),
            version=d["version"],
            rules=tuple(d["rules"]),
            created_from_event=d.get("created_from_event"),
        )


@dataclass(frozen=True)
class Prediction:
    item_id: str
    verdict: Verdict
    explanation: Explanation
    detector_strategy_version: int
    elapsed_ms: int

    def __post_init__(self) -> None:
        if self.explanation.kind is not ExplanationKind.DETECTION:
            raise ValueError("prediction explanation must have kind Detection")
        if self.elapsed_ms < 0:
            raise ValueError("elapsed_ms must be non-negative")

    def to_dict(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "verdict": self.verdict.wire,
            "explanation": self.explanation.to_dict(),
            "detector_strategy_version": self.detector_strategy_version,
            "elapsed_ms": self.elapsed_ms,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Prediction":
        return cls(
            item_id=d["item_id"],
            verdict=Verdict.from_wire(d["verdict"]),
            explanation=Explanation.from_dict(d["explanation"]),
            detector_strategy_version=d["detector_strategy_version"],
            elapsed_ms=d["elapsed_ms"],
        )


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion counts with Fake as the positive class."""

    tp_fake: int
    fn_fake: int
    fp_fake: int
    tn_fake: int

    def __post_init__(self) -> None:
        for name in ("tp_fake", "fn_fake", "fp_fake", "tn_fake"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def total(self) -> int:
        return self.tp_fake + self.fn_fake + self.fp_fake + self.tn_fake

    def to_dict(self) -> dict[str, Any]:
        return {
            "tp_fake": self.tp_fake,
            "fn_fake": self.fn_fake,
            "fp_fake": self.fp_fake,
            "tn_fake": self.tn_fake,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ConfusionMatrix":
        return cls(d["tp_fake"], d["fn_fake"], d["fp_fake"], d["tn_fake"])


@dataclass(frozen=True)
class MetricsReport:
    """Headline scores: accuracy, per-class F1, and their unweighted mean."""

    n: int
    accuracy: float
    macro_f1: float
    f1_real: float
    f1_fake: float
    precision_real: float
    recall_real: float
    precision_fake: float
    recall_fake: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("report requires n >= 1")
        if self.macro_f1 != (self.f1_real + self.f1_fake) / 2:
            raise ValueError("macro_f1 must equal the mean of the per-class F1 scores")
        for name in (
            "accuracy", "macro_f1", "f1_real", "f1_fake",
            "precision_real", "recall_real", "precision_fake", "recall_fake",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "f1_real": self.f1_real,
            "f1_fake": self.f1_fake,
            "precision_real": self.precision_real,
            "recall_real": self.recall_real,
            "precision_fake": self.precision_fake,
            "recall_fake": self.recall_fake,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "MetricsReport":
        return cls(**{k: d[k] for k in (
            "n", "accuracy", "macro_f1", "f1_real", "f1_fake",
            "precision_real", "recall_real", "precision_fake", "recall_fake",
        )})


@dataclass(frozen=True)
class QualityReport:
    """Mean judge scores over the nine rubric dimensions, each in [1, 7]."""

    n: int
    scores: Mapping[str, float]

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("quality report requires n >= 1 scored items")
        if set(self.scores) != set(QUALITY_DIMENSIONS):
            missing = set(QUALITY_DIMENSIONS) - set(self.scores)
            extra = set(self.scores) - set(QUALITY_DIMENSIONS)
            raise ValueError(f"dimension keys mismatch: missing={missing}, extra={extra}")
        for dim, value in self.scores.items():
            if not 1.0 <= value <= 7.0:
                raise ValueError(f"mean for {dim!r} is {value}, outside [1, 7]")
        object.__setattr__(self, "scores", dict(self.scores))

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "scores": {d: self.scores[d] for d in QUALITY_DIMENSIONS}}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "QualityReport":
        return cls(n=d["n"], scores=d["scores"])


def confusion(predictions: Sequence[Verdict], labels: Sequence[Verdict]) -> ConfusionMatrix:
    """Count the four confusion cells over parallel verdict vectors.

    Fake is the positive class. Raises ValueError on length mismatch or
    empty input.
    """
    if len(predictions) != len(labels):
        raise ValueError(f"length mismatch: {len(predictions)} predictions vs {len(labels)} labels")
    if not predictions:
        raise ValueError("cannot build a confusion matrix from empty input")
    tp = fn = fp = tn = 0
    for pred, label in zip(predictions, labels):
        if label is Verdict.FAKE:
            if pred is Verdict.FAKE:
                tp += 1
            else:
                fn += 1
        else:
            if pred is Verdict.FAKE:
                fp += 1
            else:
                tn += 1
    return ConfusionMatrix(tp_fake=tp, fn_fake=fn, fp_fake=fp, tn_fake=tn)


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    # Any 0/0 ratio is defined as 0 so reports stay total.
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Standard per-class precision/recall/F1 plus accuracy and macro F1.

    Each class is treated as positive for its own F1; macro F1 is the
    unweighted mean of the two.
    """
    n = cm.total
    if n == 0:
        raise ValueError("cannot compute metrics over an empty confusion matrix")
    p_fake, r_fake, f1_fake = _prf(cm.tp_fake, cm.fp_fake, cm.fn_fake)
    # Real as positive: real correctly kept = tn_fake, real predicted fake = fp_fake,
    # fake predicted real = fn_fake (a false "real" prediction).
    p_real, r_real, f1_real = _prf(cm.tn_fake, cm.fn_fake, cm.fp_fake)
    return MetricsReport(
        n=n,
        accuracy=(cm.tp_fake + cm.tn_fake) / n,
        macro_f1=(f1_real + f1_fake) / 2,
        f1_real=f1_real,
        f1_fake=f1_fake,
        precision_real=p_real,
        recall_real=r_real,
        precision_fake=p_fake,
        recall_fake=r_fake,
    )


def verdicts_from_predictions(predictions: Iterable[Prediction]) -> list[Verdict]:
    return [p.verdict for p in predictions]
