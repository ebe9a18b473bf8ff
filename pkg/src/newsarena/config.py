"""Run configuration: one JSON document covering backend, agents, and loop.

The canonical digest of a config is embedded in every checkpoint so a run can
never be resumed under different settings without noticing.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .agents import AgentConfig, AgentRole, ReflectMode
from .core import canonical_json
from .gateway import BackendConfig
from .prompts import Language


class Schedule(enum.Enum):
    # Sequential: full adversarial stage, then full reflection pass.
    # Interleaved: alternate one adversarial round and one reflection item.
    SEQUENTIAL = "sequential"
    INTERLEAVED = "interleaved"


@dataclass(frozen=True)
class ReflectionConfig:
    enabled: bool = True
    mode: ReflectMode = ReflectMode.ZERO_SHOT
    demo_count: int = 4

    def __post_init__(self) -> None:
        if self.demo_count < 1:
            raise ValueError("demo_count must be at least 1")

    def to_dict(self) -> dict[str, Any]:
        return {"enabled": self.enabled, "mode": self.mode.value,
                "demo_count": self.demo_count}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ReflectionConfig":
        return cls(
            enabled=d.get("enabled", True),
            mode=ReflectMode(d.get("mode", "zero-shot")),
            demo_count=d.get("demo_count", 4),
        )


@dataclass(frozen=True)
class LoopConfig:
    rounds: int = 20
    seed: int = 0
    max_consecutive_skips: int = 10
    schedule: Schedule = Schedule.SEQUENTIAL

    def __post_init__(self) -> None:
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if self.max_consecutive_skips < 1:
            raise ValueError("max_consecutive_skips must be at least 1")

    def to_dict(self) -> dict[str, Any]:
        return {"rounds": self.rounds, "seed": self.seed,
                "max_consecutive_skips": self.max_consecutive_skips,
                "schedule": self.schedule.value}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "LoopConfig":
        return cls(
            rounds=d.get("rounds", 20),
            seed=d.get("seed", 0),
            max_consecutive_skips=d.get("max_consecutive_skips", 10),
            schedule=Schedule(d.get("schedule", "sequential")),
        )


def _role_map(d: Mapping[str, Any] | None, convert) -> dict[AgentRole, Any]:
    out: dict[AgentRole, Any] = {}
    for key, value in (d or {}).items():
        out[AgentRole(key)] = convert(value)
    return out


@dataclass(frozen=True)
class RunConfig:
    """Everything a training or evaluation run needs, minus the data files.

    All agents share one backend and language by default; temperatures and
    backends can be overridden per role.
    """

    backend: BackendConfig
    language: Language = Language.EN
    template_dir: str | None = None
    loop: LoopConfig = field(default_factory=LoopConfig)
    reflection: ReflectionConfig = field(default_factory=ReflectionConfig)
    max_output_tokens: int = 1024
    temperature_overrides: Mapping[AgentRole, float] = field(default_factory=dict)
    backend_overrides: Mapping[AgentRole, BackendConfig] = field(default_factory=dict)

    def agent(self, role: AgentRole) -> AgentConfig:
        return AgentConfig(
            role=role,
            backend=self.backend_overrides.get(role, self.backend),
            temperature=self.temperature_overrides.get(role),
            language=self.language,
            template_dir=self.template_dir,
            max_output_tokens=self.max_output_tokens,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "backend": self.backend.to_dict(),
            "language": self.language.value,
            "template_dir": self.template_dir,
            "loop": self.loop.to_dict(),
            "reflection": self.reflection.to_dict(),
            "max_output_tokens": self.max_output_tokens,
            "temperature_overrides": {
                role.value: temp for role, temp in sorted(
                    self.temperature_overrides.items(), key=lambda kv: kv[0].value
                )
            },
            "backend_overrides": {
                role.value: cfg.to_dict() for role, cfg in sorted(
                    self.backend_overrides.items(), key=lambda kv: kv[0].value
                )
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RunConfig":
        return cls(
            backend=BackendConfig.from_dict(d["backend"]),
            language=Language(d.get("language", "en")),
            template_dir=d.get("template_dir"),
            loop=LoopConfig.from_dict(d.get("loop", {})),
            reflection=ReflectionConfig.from_dict(d.get("reflection", {})),
            max_output_tokens=d.get("max_output_tokens", 1024),
            temperature_overrides=_role_map(d.get("temperature_overrides"), float),
            backend_overrides=_role_map(d.get("backend_overrides"),
                                        BackendConfig.from_dict),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()
