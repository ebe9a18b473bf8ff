"""The three agent roles and their seven operations.

Generator forges fake news from a real item, Detector predicts with an
integrated explanation, Reflector turns detector mistakes into feedback.
Every operation is one template render, one gateway call (plus bounded
re-asks on parse failure), and one parse into a domain value.

Each operation has a matching build_*_request helper that returns the exact
ChatRequest the operation would send. Tests and fixture authors use these to
precompute prompt digests; the operations call them too, so the two can never
drift apart.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

from .core import (
    Explanation,
    ExplanationKind,
    NewsItem,
    Origin,
    Prediction,
    StrategyOwner,
    StrategySet,
    Verdict,
)
from .gateway import ChatRequest, ChatResponse, CompletionClient, Message, Role
from .gateway import BackendConfig
from .gateway import complete as shared_complete
from .prompts import (
    JSON_REMINDER,
    Language,
    ParseError,
    TemplateId,
    TemplateLibrary,
    format_demos,
    format_rules,
    parse_detector,
    parse_generator,
    parse_judge,
    parse_reflection,
    parse_strategies,
)

# A third parse failure on the same call gives up; never guess a verdict.
MAX_PARSE_RETRIES = 2

DEFAULT_MAX_OUTPUT_TOKENS = 1024


class AgentRole(enum.Enum):
    GENERATOR = "generator"
    DETECTOR = "detector"
    REFLECTOR = "reflector"
    JUDGE = "judge"


class ReflectMode(enum.Enum):
    ZERO_SHOT = "zero-shot"
    FEW_SHOT = "few-shot"
    ZERO_SHOT_COT = "zero-shot-cot"
    FEW_SHOT_COT = "few-shot-cot"

    @property
    def few_shot(self) -> bool:
        return self in (ReflectMode.FEW_SHOT, ReflectMode.FEW_SHOT_COT)

    @property
    def chain_of_thought(self) -> bool:
        return self in (ReflectMode.ZERO_SHOT_COT, ReflectMode.FEW_SHOT_COT)


# The generator runs hot so forgeries vary; judgment-style calls run cold.
DEFAULT_TEMPERATURES = {
    AgentRole.GENERATOR: 0.9,
    AgentRole.DETECTOR: 0.1,
    AgentRole.REFLECTOR: 0.1,
    AgentRole.JUDGE: 0.1,
}

_COT_LINE = {
    Language.EN: "Let's think step by step about the evidence before writing the feedback.",
    Language.ZH: "让我们先一步一步分析证据，再写出反思反馈。",
}

_BASELINE_TEMPLATE = {
    ReflectMode.ZERO_SHOT: TemplateId.BASELINE_ZERO_SHOT,
    ReflectMode.FEW_SHOT: TemplateId.BASELINE_FEW_SHOT,
    ReflectMode.ZERO_SHOT_COT: TemplateId.BASELINE_ZERO_SHOT_COT,
    ReflectMode.FEW_SHOT_COT: TemplateId.BASELINE_FEW_SHOT_COT,
}


@dataclass(frozen=True)
class AgentConfig:
    """One agent role bound to a backend and a template language.

    temperature None means the role default; max_output_tokens bounds every
    reply from this agent.
    """

    role: AgentRole
    backend: BackendConfig
    temperature: float | None = None
    language: Language = Language.EN
    template_dir: str | None = None
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS

    def __post_init__(self) -> None:
        if self.temperature is not None and not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    @property
    def resolved_temperature(self) -> float:
        if self.temperature is not None:
            return self.temperature
        return DEFAULT_TEMPERATURES[self.role]

    def library(self) -> TemplateLibrary:
        return _library(self.language, self.template_dir)


_libraries: dict[tuple[Language, str | None], TemplateLibrary] = {}


def _library(language: Language, template_dir: str | None) -> TemplateLibrary:
    key = (language, template_dir)
    if key not in _libraries:
        _libraries[key] = TemplateLibrary(language, template_dir)
    return _libraries[key]


def _request(cfg: AgentConfig, prompt: str, tag: str) -> ChatRequest:
    return ChatRequest(
        messages=(Message(Role.USER, prompt),),
        temperature=cfg.resolved_temperature,
        max_output_tokens=cfg.max_output_tokens,
        request_tag=tag,
    )


# ---------------------------------------------------------------------------
# Request builders (public: fixture authors key scripted replies on these)


def build_forge_request(gen: AgentConfig, x: NewsItem, s_g: StrategySet) -> ChatRequest:
    if gen.role is not AgentRole.GENERATOR:
        raise ValueError(f"forge requires a generator config, got {gen.role.value}")
    if s_g.owner is not StrategyOwner.GENERATOR:
        raise ValueError("forge requires generator-owned strategies")
    prompt = gen.library().render(
        TemplateId.GEN_FORGE,
        {"news": x.text, "strategy": format_rules(s_g.rules)},
    )
    return _request(gen, prompt, "generator:forge")


def build_predict_request(det: AgentConfig, item: NewsItem, s_d: StrategySet) -> ChatRequest:
    if det.role is not AgentRole.DETECTOR:
        raise ValueError(f"predict requires a detector config, got {det.role.value}")
    if s_d.owner is not StrategyOwner.DETECTOR:
        raise ValueError("predict requires detector-owned strategies")
    prompt = det.library().render(
        TemplateId.DET_PREDICT,
        {"news": item.text, "strategy": format_rules(s_d.rules)},
    )
    return _request(det, prompt, "detector:predict")


def build_baseline_request(det: AgentConfig, item: NewsItem, mode: ReflectMode,
                           demos: Sequence[NewsItem] = ()) -> ChatRequest:
    if det.role is not AgentRole.DETECTOR:
        raise ValueError(f"baseline predict requires a detector config, got {det.role.value}")
    if mode.few_shot and not demos:
        raise ValueError(f"{mode.value} baseline requires at least one demo")
    slots = {"news": item.text}
    if mode.few_shot:
        slots["demos"] = format_demos(demos)
    prompt = det.library().render(_BASELINE_TEMPLATE[mode], slots)
    return _request(det, prompt, f"detector:baseline:{mode.value}")


def build_generator_upgrade_request(gen: AgentConfig, x: NewsItem,
                                    detector_expl: Explanation, prev: StrategySet,
                                    forgery: NewsItem | None = None) -> ChatRequest:
    if gen.role is not AgentRole.GENERATOR:
        raise ValueError(f"generator upgrade requires a generator config, got {gen.role.value}")
    if prev.owner is not StrategyOwner.GENERATOR:
        raise ValueError("generator upgrade requires generator-owned strategies")
    if detector_expl.kind is not ExplanationKind.DETECTION:
        raise ValueError("generator upgrade feedback must be a detection explanation")
    slots = {
        "news": x.text,
        "detection_explanation": detector_expl.text,
        "strategy": format_rules(prev.rules),
    }
    if forgery is not None:
        slots["forgery"] = forgery.text
    prompt = gen.library().render(TemplateId.GEN_UPGRADE, slots)
    return _request(gen, prompt, "generator:upgrade")


def build_detector_adversary_upgrade_request(det: AgentConfig, x: NewsItem,
                                             forged: NewsItem, fake_expl: Explanation,
                                             prev: StrategySet) -> ChatRequest:
    if det.role is not AgentRole.DETECTOR:
        raise ValueError(f"detector upgrade requires a detector config, got {det.role.value}")
    if prev.owner is not StrategyOwner.DETECTOR:
        raise ValueError("detector upgrade requires detector-owned strategies")
    if fake_expl.kind is not ExplanationKind.FAKE:
        raise ValueError("adversary upgrade feedback must be a fake explanation")
    prompt = det.library().render(
        TemplateId.DET_UPGRADE_ADVERSARY,
        {
            "news": x.text,
            "forgery": forged.text,
            "fake_explanation": fake_expl.text,
            "strategy": format_rules(prev.rules),
        },
    )
    return _request(det, prompt, "detector:upgrade-adversary")


def build_reflect_request(ref: AgentConfig, x: NewsItem, prediction: Prediction,
                          truth: Verdict, mode: ReflectMode,
                          demos: Sequence[NewsItem] = ()) -> ChatRequest:
    if ref.role is not AgentRole.REFLECTOR:
        raise ValueError(f"reflect requires a reflector config, got {ref.role.value}")
    if prediction.verdict is truth:
        raise ValueError("reflect is only defined for incorrect predictions")
    if mode.few_shot and not demos:
        raise ValueError(f"{mode.value} reflection requires at least one demo")
    slots = {
        "news": x.text,
        "wrong_explanation": prediction.explanation.text,
        "truth_label": truth.wire,
    }
    if mode.few_shot:
        slots["demos"] = format_demos(demos)
    if mode.chain_of_thought:
        slots["cot"] = _COT_LINE[ref.language]
    prompt = ref.library().render(TemplateId.REFLECT, slots)
    return _request(ref, prompt, f"reflector:reflect:{mode.value}")


def build_detector_reflection_upgrade_request(det: AgentConfig, x: NewsItem,
                                              reflection: Explanation,
                                              prev: StrategySet) -> ChatRequest:
    if det.role is not AgentRole.DETECTOR:
        raise ValueError(f"detector upgrade requires a detector config, got {det.role.value}")
    if prev.owner is not StrategyOwner.DETECTOR:
        raise ValueError("detector upgrade requires detector-owned strategies")
    if reflection.kind is not ExplanationKind.REFLECTION:
        raise ValueError("reflection upgrade feedback must be a reflection explanation")
    prompt = det.library().render(
        TemplateId.DET_UPGRADE_REFLECT,
        {
            "news": x.text,
            "reflection": reflection.text,
            "strategy": format_rules(prev.rules),
        },
    )
    return _request(det, prompt, "detector:upgrade-reflect")


def build_judge_request(judge: AgentConfig, item: NewsItem,
                        explanation: Explanation) -> ChatRequest:
    if judge.role is not AgentRole.JUDGE:
        raise ValueError(f"judging requires a judge config, got {judge.role.value}")
    prompt = judge.library().render(
        TemplateId.JUDGE_RUBRIC,
        {"news": item.text, "explanation": explanation.text},
    )
    return _request(judge, prompt, "judge:rubric")


# ---------------------------------------------------------------------------
# Call-and-parse core

T = TypeVar("T")

# Called before each re-ask with the failed request, the raw reply, and the
# parse error; lets the orchestrator log ParseRetry events.
ParseRetryHook = Callable[[ChatRequest, ChatResponse, ParseError], None]


def _complete(cfg: AgentConfig, req: ChatRequest, gateway: CompletionClient | None) -> ChatResponse:
    if gateway is not None:
        return gateway.complete(req)
    return shared_complete(cfg.backend, req)


def _ask(cfg: AgentConfig, req: ChatRequest, parse: Callable[[str], T],
         gateway: CompletionClient | None,
         on_parse_retry: ParseRetryHook | None) -> tuple[T, ChatResponse, int]:
    """Send req, parse the reply, re-ask at most MAX_PARSE_RETRIES times.

    Returns (parsed value, last response, total elapsed ms). Raises the final
    ParseError when every attempt fails to parse.
    """
    elapsed = 0
    for attempt in range(MAX_PARSE_RETRIES + 1):
        resp = _complete(cfg, req, gateway)
        elapsed += resp.latency_ms
        try:
            return parse(resp.text), resp, elapsed
        except ParseError as err:
            if attempt == MAX_PARSE_RETRIES:
                raise
            if on_parse_retry is not None:
                on_parse_retry(req, resp, err)
            req = req.with_messages(
                req.messages
                + (
                    Message(Role.ASSISTANT, resp.text or "(empty reply)"),
                    Message(Role.USER, JSON_REMINDER),
                )
            )
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# Operations


def generate_fake(gen: AgentConfig, x: NewsItem, s_g: StrategySet, *,
                  forged_id: str | None = None, gateway: CompletionClient | None = None,
                  on_parse_retry: ParseRetryHook | None = None,
                  ) -> tuple[NewsItem, Explanation]:
    """Forge a fake variant of real item x under the generator's strategies."""
    if x.label is not Verdict.REAL:
        raise ValueError(f"can only forge from real items, {x.id!r} is not labeled real")
    req = build_forge_request(gen, x, s_g)

    def parse(text: str):
        out = parse_generator(text)
        # A forgery identical to the source is useless as an adversarial
        # example; treat it like any other malformed reply and re-ask.
        if out.fake_text.strip() == x.text.strip():
            raise ParseError("forgery identical to source text", text)
        return out

    out, _, _ = _ask(gen, req, parse, gateway, on_parse_retry)
    forged = NewsItem(
        id=forged_id or f"{x.id}::forged",
        text=out.fake_text,
        label=Verdict.FAKE,
        origin=Origin.GENERATED,
        source_id=x.id,
    )
    return forged, out.fake_explanation


def detect(det: AgentConfig, item: NewsItem, s_d: StrategySet, *,
           gateway: CompletionClient | None = None,
           on_parse_retry: ParseRetryHook | None = None) -> Prediction:
    """Predict real/fake with an integrated explanation (strategy-guided)."""
    req = build_predict_request(det, item, s_d)
    out, _, elapsed = _ask(det, req, parse_detector, gateway, on_parse_retry)
    return Prediction(
        item_id=item.id,
        verdict=out.verdict,
        explanation=out.explanation,
        detector_strategy_version=s_d.version,
        elapsed_ms=elapsed,
    )


def detect_baseline(det: AgentConfig, item: NewsItem, mode: ReflectMode,
                    demos: Sequence[NewsItem] = (), *,
                    gateway: CompletionClient | None = None,
                    on_parse_retry: ParseRetryHook | None = None) -> Prediction:
    """Plain-prompt prediction without evolved strategies (version -1)."""
    req = build_baseline_request(det, item, mode, demos)
    out, _, elapsed = _ask(det, req, parse_detector, gateway, on_parse_retry)
    return Prediction(
        item_id=item.id,
        verdict=out.verdict,
        explanation=out.explanation,
        detector_strategy_version=-1,
        elapsed_ms=elapsed,
    )


def upgrade_generator(gen: AgentConfig, x: NewsItem, detector_expl: Explanation,
                      prev: StrategySet, *, forgery: NewsItem | None = None,
                      gateway: CompletionClient | None = None,
                      on_parse_retry: ParseRetryHook | None = None) -> StrategySet:
    """Upgrade generator strategies after the detector caught the forgery."""
    req = build_generator_upgrade_request(gen, x, detector_expl, prev, forgery)
    rules, _, _ = _ask(
        gen, req,
        lambda text: parse_strategies(text, StrategyOwner.GENERATOR),
        gateway, on_parse_retry,
    )
    return prev.upgraded(rules)


def upgrade_detector_adversary(det: AgentConfig, x: NewsItem, forged: NewsItem,
                               fake_expl: Explanation, prev: StrategySet, *,
                               gateway: CompletionClient | None = None,
                               on_parse_retry: ParseRetryHook | None = None) -> StrategySet:
    """Upgrade detector strategies after it missed a forgery."""
    req = build_detector_adversary_upgrade_request(det, x, forged, fake_expl, prev)
    rules, _, _ = _ask(
        det, req,
        lambda text: parse_strategies(text, StrategyOwner.DETECTOR),
        gateway, on_parse_retry,
    )
    return prev.upgraded(rules)


def reflect(ref: AgentConfig, x: NewsItem, prediction: Prediction, truth: Verdict,
            mode: ReflectMode = ReflectMode.ZERO_SHOT,
            demos: Sequence[NewsItem] = (), *,
            gateway: CompletionClient | None = None,
            on_parse_retry: ParseRetryHook | None = None) -> Explanation:
    """Explain where a wrong prediction went astray, given the ground truth."""
    req = build_reflect_request(ref, x, prediction, truth, mode, demos)
    reflection, _, _ = _ask(ref, req, parse_reflection, gateway, on_parse_retry)
    return reflection


def upgrade_detector_reflection(det: AgentConfig, x: NewsItem,
                                reflection: Explanation, prev: StrategySet, *,
                                gateway: CompletionClient | None = None,
                                on_parse_retry: ParseRetryHook | None = None) -> StrategySet:
    """Fold reflection feedback into the detector's strategies."""
    req = build_detector_reflection_upgrade_request(det, x, reflection, prev)
    rules, _, _ = _ask(
        det, req,
        lambda text: parse_strategies(text, StrategyOwner.DETECTOR),
        gateway, on_parse_retry,
    )
    return prev.upgraded(rules)


def judge_explanation(judge: AgentConfig, item: NewsItem, explanation: Explanation, *,
                      gateway: CompletionClient | None = None,
                      on_parse_retry: ParseRetryHook | None = None) -> dict[str, int]:
    """Score one explanation on the nine quality dimensions (1 to 7 each)."""
    req = build_judge_request(judge, item, explanation)
    scores, _, _ = _ask(judge, req, parse_judge, gateway, on_parse_retry)
    return scores


def with_created_from_event(strategies: StrategySet, event_seq: int) -> StrategySet:
    """Attach the event-log seq that produced this snapshot (audit trail)."""
    return dataclasses.replace(strategies, created_from_event=event_seq)
