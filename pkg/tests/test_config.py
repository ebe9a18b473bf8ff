import json

import pytest

from newsarena.agents import AgentRole, ReflectMode
from newsarena.config import LoopConfig, ReflectionConfig, RunConfig, Schedule
from newsarena.prompts import Language
from helpers import scripted_backend


def run_config(**overrides) -> RunConfig:
    base = dict(backend=scripted_backend("/tmp/fixture.jsonl"))
    base.update(overrides)
    return RunConfig(**base)


class TestValidation:
    def test_negative_rounds_rejected(self):
        with pytest.raises(ValueError):
            LoopConfig(rounds=-1)

    def test_zero_skip_budget_rejected(self):
        with pytest.raises(ValueError):
            LoopConfig(max_consecutive_skips=0)

    def test_zero_demo_count_rejected(self):
        with pytest.raises(ValueError):
            ReflectionConfig(demo_count=0)


class TestAgentDerivation:
    def test_shared_defaults(self):
        cfg = run_config(max_output_tokens=512, language=Language.ZH)
        det = cfg.agent(AgentRole.DETECTOR)
        assert det.backend == cfg.backend
        assert det.language is Language.ZH
        assert det.max_output_tokens == 512
        assert det.temperature is None  # falls back to the role default

    def test_temperature_override_applies_to_one_role(self):
        cfg = run_config(temperature_overrides={AgentRole.GENERATOR: 0.5})
        assert cfg.agent(AgentRole.GENERATOR).resolved_temperature == 0.5
        assert cfg.agent(AgentRole.DETECTOR).resolved_temperature == 0.1

    def test_backend_override_applies_to_one_role(self):
        judge_backend = scripted_backend("/tmp/judge.jsonl")
        cfg = run_config(backend_overrides={AgentRole.JUDGE: judge_backend})
        assert cfg.agent(AgentRole.JUDGE).backend == judge_backend
        assert cfg.agent(AgentRole.DETECTOR).backend == cfg.backend


class TestSerialization:
    def full_config(self) -> RunConfig:
        return run_config(
            language=Language.ZH,
            loop=LoopConfig(rounds=7, seed=42, schedule=Schedule.INTERLEAVED),
            reflection=ReflectionConfig(enabled=False,
                                        mode=ReflectMode.FEW_SHOT_COT,
                                        demo_count=2),
            temperature_overrides={AgentRole.GENERATOR: 0.8,
                                   AgentRole.DETECTOR: 0.0},
            backend_overrides={AgentRole.JUDGE:
                               scripted_backend("/tmp/judge.jsonl")},
        )

    def test_round_trip(self):
        cfg = self.full_config()
        assert RunConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_file(self, tmp_path):
        cfg = self.full_config()
        path = tmp_path / "run.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert RunConfig.from_file(path) == cfg

    def test_defaults_fill_missing_sections(self):
        minimal = {"backend": scripted_backend("/tmp/f.jsonl").to_dict()}
        cfg = RunConfig.from_dict(minimal)
        assert cfg.loop.rounds == 20
        assert cfg.reflection.enabled is True
        assert cfg.loop.schedule is Schedule.SEQUENTIAL


class TestDigest:
    def test_stable_for_equal_configs(self):
        assert run_config().digest() == run_config().digest()

    def test_changes_with_any_field(self):
        base = run_config()
        assert base.digest() != run_config(loop=LoopConfig(seed=1)).digest()
        assert base.digest() != run_config(language=Language.ZH).digest()

    def test_override_insertion_order_irrelevant(self):
        a = run_config(temperature_overrides={AgentRole.GENERATOR: 0.5,
                                              AgentRole.DETECTOR: 0.2})
        b = run_config(temperature_overrides={AgentRole.DETECTOR: 0.2,
                                              AgentRole.GENERATOR: 0.5})
        assert a.digest() == b.digest()
