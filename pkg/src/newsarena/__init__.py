"""Adversarial strategy training and explainable fake news detection.

A Generator forges deceptive variants of real news while a Detector learns
versioned natural-language detection strategies from being fooled; a
Reflector turns the Detector's training mistakes into further strategy
upgrades. The package covers the full loop: agents, orchestration with an
auditable event log, dataset handling, evaluation and judging, and an HTTP
detection service.
"""

from .core import (
    ConfusionMatrix,
    Explanation,
    ExplanationKind,
    MetricsReport,
    NewsItem,
    Origin,
    Prediction,
    QualityReport,
    Split,
    StrategyOwner,
    StrategySet,
    Verdict,
    compute_metrics,
    confusion,
)

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix",
    "Explanation",
    "ExplanationKind",
    "MetricsReport",
    "NewsItem",
    "Origin",
    "Prediction",
    "QualityReport",
    "Split",
    "StrategyOwner",
    "StrategySet",
    "Verdict",
    "compute_metrics",
    "confusion",
    "__version__",
]
