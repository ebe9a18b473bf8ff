"""Prompt-template rendering and strict parsing of structured agent outputs.

Templates live as UTF-8 text files with ``{{slot}}`` markers under
``<template_dir>/<language>/<template_id>.txt``; that directory layout is part
of the public contract. Parsers are total functions: any input yields either a
domain value or a ParseError, never a fabricated verdict.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from .core import (
    MAX_RULES,
    MAX_RULE_CHARS,
    QUALITY_DIMENSIONS,
    Explanation,
    ExplanationKind,
    NewsItem,
    StrategyOwner,
    Verdict,
)

PACKAGED_TEMPLATE_DIR = Path(__file__).parent / "templates"

# Rendered into strategy slots while a strategy set is still at version 0.
NO_STRATEGY_SENTINEL = "(no strategies yet; rely on your own judgment)"

# Whitespace-token approximation; generous headroom over the longest pool item.
PROMPT_TOKEN_BUDGET = 3000

JSON_REMINDER = (
    "Your previous reply could not be parsed. Respond again, strictly in the "
    "required JSON shape and with no surrounding prose."
)


class ParseError(Exception):
    """Agent output could not be interpreted; carries the raw text."""

    def __init__(self, reason: str, raw: str):
        super().__init__(f"{reason}: {raw[:120]!r}")
        self.reason = reason
        self.raw = raw


class TemplateError(Exception):
    """Template missing, malformed, or rendered with bad slots."""


class Language(enum.Enum):
    EN = "en"
    ZH = "zh"


class TemplateId(enum.Enum):
    GEN_FORGE = "gen_forge"
    GEN_UPGRADE = "gen_upgrade"
    DET_PREDICT = "det_predict"
    DET_UPGRADE_ADVERSARY = "det_upgrade_adversary"
    DET_UPGRADE_REFLECT = "det_upgrade_reflect"
    REFLECT = "reflect"
    JUDGE_RUBRIC = "judge_rubric"
    BASELINE_ZERO_SHOT = "baseline_zero_shot"
    BASELINE_FEW_SHOT = "baseline_few_shot"
    BASELINE_ZERO_SHOT_COT = "baseline_zero_shot_cot"
    BASELINE_FEW_SHOT_COT = "baseline_few_shot_cot"


# slot contract per template: required slot names, and optional slots with the
# default text used when the caller omits the slot or passes an empty value.
_SLOT_CONTRACT: dict[TemplateId, tuple[frozenset[str], dict[str, str]]] = {
    TemplateId.GEN_FORGE: (frozenset({"news"}), {"strategy": NO_STRATEGY_SENTINEL}),
    TemplateId.GEN_UPGRADE: (
        frozenset({"news", "detection_explanation"}),
        {"strategy": NO_STRATEGY_SENTINEL, "forgery": "(forgery unavailable)"},
    ),
    TemplateId.DET_PREDICT: (frozenset({"news"}), {"strategy": NO_STRATEGY_SENTINEL}),
    TemplateId.DET_UPGRADE_ADVERSARY: (
        frozenset({"news", "forgery", "fake_explanation"}),
        {"strategy": NO_STRATEGY_SENTINEL},
    ),
    TemplateId.DET_UPGRADE_REFLECT: (
        frozenset({"news", "reflection"}),
        {"strategy": NO_STRATEGY_SENTINEL},
    ),
    TemplateId.REFLECT: (
        frozenset({"news", "wrong_explanation", "truth_label"}),
        {"demos": "", "cot": ""},
    ),
    TemplateId.JUDGE_RUBRIC: (frozenset({"news", "explanation"}), {}),
    TemplateId.BASELINE_ZERO_SHOT: (frozenset({"news"}), {}),
    TemplateId.BASELINE_FEW_SHOT: (frozenset({"news", "demos"}), {}),
    TemplateId.BASELINE_ZERO_SHOT_COT: (frozenset({"news"}), {}),
    TemplateId.BASELINE_FEW_SHOT_COT: (frozenset({"news", "demos"}), {}),
}

_SLOT_MARKER = re.compile(r"\{\{([a-z_]+)\}\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: TemplateId
    body: str
    required_slots: frozenset[str]
    optional_defaults: Mapping[str, str]


@dataclass(frozen=True)
class ParsedDetectorOutput:
    verdict: Verdict
    explanation: Explanation

    def __post_init__(self) -> None:
        if self.explanation.kind is not ExplanationKind.DETECTION:
            raise ValueError("detector explanation must have kind Detection")


@dataclass(frozen=True)
class ParsedGeneratorOutput:
    fake_text: str
    fake_explanation: Explanation

    def __post_init__(self) -> None:
        if not self.fake_text.strip():
            raise ValueError("fake_text must be non-empty")
        if self.fake_explanation.kind is not ExplanationKind.FAKE:
            raise ValueError("generator explanation must have kind Fake")


def load_template(template_id: TemplateId, language: Language = Language.EN,
                  template_dir: str | Path | None = None) -> PromptTemplate:
    base = Path(template_dir) if template_dir else PACKAGED_TEMPLATE_DIR
    path = base / language.value / f"{template_id.value}.txt"
    if not path.is_file():
        raise TemplateError(f"template file not found: {path}")
    body = path.read_text(encoding="utf-8")
    required, optional = _SLOT_CONTRACT[template_id]
    in_body = set(_SLOT_MARKER.findall(body))
    known = required | set(optional)
    if in_body - known:
        raise TemplateError(f"{path}: unknown slots {sorted(in_body - known)}")
    if required - in_body:
        raise TemplateError(f"{path}: required slots missing from body {sorted(required - in_body)}")
    return PromptTemplate(id=template_id, body=body,
                          required_slots=required, optional_defaults=optional)


def render(template: PromptTemplate, slots: Mapping[str, str]) -> str:
    """Fill every slot deterministically.

    Required slots must be provided and non-empty. Optional slots fall back to
    their declared default when omitted or empty. Unknown slot names are
    rejected.
    """
    known = template.required_slots | set(template.optional_defaults)
    unknown = set(slots) - known
    if unknown:
        raise TemplateError(f"unknown slots for {template.id.value}: {sorted(unknown)}")
    values: dict[str, str] = {}
    for name in template.required_slots:
        value = slots.get(name)
        if value is None:
            raise TemplateError(f"missing required slot {name!r} for {template.id.value}")
        if not value.strip():
            raise TemplateError(f"required slot {name!r} is empty for {template.id.value}")
        values[name] = value
    for name, default in template.optional_defaults.items():
        provided = slots.get(name)
        values[name] = provided if provided and provided.strip() else default
    return _SLOT_MARKER.sub(lambda m: values[m.group(1)], template.body)


class TemplateLibrary:
    """Loads and caches templates for one language and template directory."""

    def __init__(self, language: Language = Language.EN,
                 template_dir: str | Path | None = None):
        self.language = language
        self.template_dir = Path(template_dir) if template_dir else PACKAGED_TEMPLATE_DIR
        self._cache: dict[TemplateId, PromptTemplate] = {}

    def get(self, template_id: TemplateId) -> PromptTemplate:
        if template_id not in self._cache:
            self._cache[template_id] = load_template(
                template_id, self.language, self.template_dir
            )
        return self._cache[template_id]

    def render(self, template_id: TemplateId, slots: Mapping[str, str]) -> str:
        return render(self.get(template_id), slots)


def approx_token_count(text: str) -> int:
    """Whitespace-token approximation used for prompt budgets and pool stats."""
    return len(text.split())


def format_rules(rules: Sequence[str]) -> str:
    """Numbered rule block, or empty string for a null strategy (the
    template's sentinel takes over)."""
    return "\n".join(f"{i}. {rule}" for i, rule in enumerate(rules, start=1))


def format_demos(demos: Sequence[NewsItem], heading: str = "Labeled examples:") -> str:
    if not demos:
        return ""
    parts = [heading]
    for i, item in enumerate(demos, start=1):
        label = item.label.wire if item.label is not None else "unknown"
        parts.append(f"Example {i} [{label}]:\n{item.text}")
    return "\n\n".join(parts)


# ---------------------------------------------------------------------------
# Output parsing


def _balanced_span(text: str, start: int, open_ch: str, close_ch: str) -> str | None:
    depth = 0
    in_str = False
    escaped = False
    for j in range(start, len(text)):
        ch = text[j]
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
        else:
            if ch == '"':
                in_str = True
            elif ch == open_ch:
                depth += 1
            elif ch == close_ch:
                depth -= 1
                if depth == 0:
                    return text[start: j + 1]
    return None


_FENCE = re.compile(r"```[a-zA-Z]*\s*\n?(.*?)```", re.DOTALL)


def _scan_json(text: str, open_ch: str = "{", close_ch: str = "}") -> Iterator[Any]:
    i = 0
    while i < len(text):
        if text[i] == open_ch:
            candidate = _balanced_span(text, i, open_ch, close_ch)
            if candidate is not None:
                try:
                    yield json.loads(candidate)
                    i += len(candidate)
                    continue
                except json.JSONDecodeError:
                    pass
        i += 1


def _json_objects(text: str) -> Iterator[dict[str, Any]]:
    """JSON objects from fenced blocks first, then bare braces, in order."""
    for match in _FENCE.finditer(text):
        for obj in _scan_json(match.group(1)):
            if isinstance(obj, dict):
                yield obj
    for obj in _scan_json(text):
        if isinstance(obj, dict):
            yield obj


def _norm_key(key: str) -> str:
    return re.sub(r"[\s_]+", " ", key).strip().lower()


def _lookup(obj: Mapping[str, Any], *names: str) -> Any:
    wanted = {_norm_key(n) for n in names}
    for key, value in obj.items():
        if isinstance(key, str) and _norm_key(key) in wanted:
            return value
    return None


def _as_verdict(value: Any) -> Verdict | None:
    if not isinstance(value, str):
        return None
    norm = value.strip().strip(".!").strip().lower()
    if norm in ("real", "fake"):
        return Verdict.from_wire(norm)
    return None


_VERDICT_LINE = re.compile(
    r"^[\s>#*_\-]*(?:final\s+)?(?:label|verdict|prediction|answer)\b[\s*_]*[:\-–][\s*_]*(.+)$",
    re.IGNORECASE,
)
_VERDICT_WORD = re.compile(r"\b(real|fake)\b", re.IGNORECASE)
_EXPL_LINE = re.compile(
    r"^[\s>#*_\-]*(?:explanation|reason|reasoning|rationale)\b[\s*_]*[:\-–][\s*_]*(.*)$",
    re.IGNORECASE,
)


def _join_nonempty(lines: Sequence[str]) -> str:
    return "\n".join(l.strip() for l in lines if l.strip()).strip()


def parse_detector(text: str) -> ParsedDetectorOutput:
    """Extract (verdict, explanation) from a detector reply.

    Ladder: fenced or bare JSON with "label" and "explanation" fields, then a
    label:/verdict: line pattern with the remainder as explanation, then
    ParseError.
    """
    for obj in _json_objects(text):
        verdict = _as_verdict(_lookup(obj, "label", "verdict"))
        explanation = _lookup(obj, "explanation", "reason", "reasoning")
        if verdict is not None and isinstance(explanation, str) and explanation.strip():
            return ParsedDetectorOutput(
                verdict=verdict,
                explanation=Explanation(explanation.strip(), ExplanationKind.DETECTION),
            )
    lines = text.splitlines()
    verdict = None
    verdict_idx = -1
    tail_of_verdict_line = ""
    for idx, line in enumerate(lines):
        match = _VERDICT_LINE.match(line)
        if not match:
            continue
        word = _VERDICT_WORD.search(match.group(1))
        if word:
            verdict = Verdict.from_wire(word.group(1).lower())
            verdict_idx = idx
            tail_of_verdict_line = match.group(1)[word.end():].strip(" \t.,:;*-")
            break
    if verdict is None:
        raise ParseError("no verdict label found", text)
    explanation_text = ""
    for idx, line in enumerate(lines):
        match = _EXPL_LINE.match(line)
        if match and idx != verdict_idx:
            explanation_text = _join_nonempty([match.group(1), *lines[idx + 1:]])
            break
    if not explanation_text:
        explanation_text = tail_of_verdict_line
    if not explanation_text:
        explanation_text = _join_nonempty(lines[verdict_idx + 1:])
    if not explanation_text:
        explanation_text = _join_nonempty(lines[:verdict_idx])
    if not explanation_text:
        raise ParseError("verdict found but no explanation text", text)
    return ParsedDetectorOutput(
        verdict=verdict,
        explanation=Explanation(explanation_text, ExplanationKind.DETECTION),
    )


_GEN_FAKE_HDR = re.compile(
    r"^[\s>#*_\-]*fake\s*news[\s*_]*[:\-–][\s*_]*(.*)$", re.IGNORECASE
)
_GEN_WHY_HDR = re.compile(
    r"^[\s>#*_\-]*(?:why\s+it\s+misleads|fabrication\s+explanation)[\s*_]*[:\-–][\s*_]*(.*)$",
    re.IGNORECASE,
)


def parse_generator(text: str) -> ParsedGeneratorOutput:
    """Extract a forged text plus its fabrication explanation.

    Same ladder as parse_detector, over the fields "fake_news" and
    "fabrication_explanation"; prose fallback accepts FAKE NEWS: /
    WHY IT MISLEADS: section headers.
    """
    for obj in _json_objects(text):
        fake = _lookup(obj, "fake_news", "fake news")
        why = _lookup(obj, "fabrication_explanation", "fabrication explanation")
        if isinstance(fake, str) and fake.strip() and isinstance(why, str) and why.strip():
            return ParsedGeneratorOutput(
                fake_text=fake.strip(),
                fake_explanation=Explanation(why.strip(), ExplanationKind.FAKE),
            )
    lines = text.splitlines()
    fake_start: int | None = None
    why_start: int | None = None
    fake_inline = why_inline = ""
    for idx, line in enumerate(lines):
        if fake_start is None:
            match = _GEN_FAKE_HDR.match(line)
            if match:
                fake_start = idx
                fake_inline = match.group(1)
                continue
        if fake_start is not None and why_start is None:
            match = _GEN_WHY_HDR.match(line)
            if match:
                why_start = idx
                why_inline = match.group(1)
    if fake_start is None or why_start is None:
        raise ParseError("generator sections not found", text)
    fake_text = _join_nonempty([fake_inline, *lines[fake_start + 1: why_start]])
    why_text = _join_nonempty([why_inline, *lines[why_start + 1:]])
    if not fake_text or not why_text:
        raise ParseError("generator sections empty", text)
    return ParsedGeneratorOutput(
        fake_text=fake_text,
        fake_explanation=Explanation(why_text, ExplanationKind.FAKE),
    )


_RULE_LINE = re.compile(r"^\s*(?:\d{1,3}[.)]\s+|[-*•]\s+)(.+)$")


def parse_strategies(text: str, owner: StrategyOwner) -> list[str]:
    """Extract a rule list from a numbered or bulleted reply.

    Rules are trimmed to the per-rule character cap, the list is truncated to
    the rule cap, and exact duplicates are dropped keeping the first
    occurrence. The whole operation is idempotent.
    """
    del owner  # rules are owner-agnostic text; ownership is applied by the caller
    rules: list[str] = []
    for line in text.splitlines():
        match = _RULE_LINE.match(line)
        if match and match.group(1).strip():
            rules.append(match.group(1).strip())
    if not rules:
        for obj in _scan_json(text, "[", "]"):
            if isinstance(obj, list) and obj and all(isinstance(r, str) for r in obj):
                rules = [r.strip() for r in obj if r.strip()]
                break
    if not rules:
        raise ParseError("no strategy rules found", text)
    trimmed = [rule[:MAX_RULE_CHARS] for rule in rules][:MAX_RULES]
    seen: set[str] = set()
    unique: list[str] = []
    for rule in trimmed:
        if rule not in seen:
            seen.add(rule)
            unique.append(rule)
    return unique


def parse_reflection(text: str) -> Explanation:
    """The whole trimmed reply is the reflection feedback, preserved verbatim."""
    stripped = text.strip()
    if not stripped:
        raise ParseError("empty reflection feedback", text)
    return Explanation(stripped, ExplanationKind.REFLECTION)


def parse_judge(text: str) -> dict[str, int]:
    """JSON object with all nine rubric dimensions, integer scores in [1, 7]."""
    for obj in _json_objects(text):
        normalized: dict[str, Any] = {}
        for dim in QUALITY_DIMENSIONS:
            value = _lookup(obj, dim)
            if value is None:
                break
            normalized[dim] = value
        else:
            for dim, value in normalized.items():
                if isinstance(value, bool) or not isinstance(value, int):
                    raise ParseError(f"score for {dim!r} is not an integer", text)
                if not 1 <= value <= 7:
                    raise ParseError(f"score for {dim!r} out of range: {value}", text)
            return normalized
    raise ParseError("no judge object with all nine dimensions", text)
