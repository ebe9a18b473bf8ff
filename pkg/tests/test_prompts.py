import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from newsarena.core import (
    MAX_RULES,
    MAX_RULE_CHARS,
    QUALITY_DIMENSIONS,
    ExplanationKind,
    NewsItem,
    Split,
    StrategyOwner,
    Verdict,
)
from newsarena.prompts import (
    Language,
    NO_STRATEGY_SENTINEL,
    PROMPT_TOKEN_BUDGET,
    ParseError,
    TemplateError,
    TemplateId,
    TemplateLibrary,
    approx_token_count,
    format_demos,
    format_rules,
    load_template,
    parse_detector,
    parse_generator,
    parse_judge,
    parse_reflection,
    parse_strategies,
    render,
)
from corpus_cases import detector_cases

NEWS = ("The transport ministry confirmed on Monday that the new rail line "
        "will open in March after final safety inspections.")


class TestTemplates:
    @pytest.mark.parametrize("language", list(Language))
    @pytest.mark.parametrize("template_id", list(TemplateId))
    def test_every_packaged_template_loads(self, template_id, language):
        template = load_template(template_id, language)
        assert template.body.strip()
        for slot in template.required_slots:
            assert f"{{{{{slot}}}}}" in template.body

    def test_missing_file_raises(self, tmp_path):
        with pytest.raises(TemplateError, match="not found"):
            load_template(TemplateId.DET_PREDICT, Language.EN, tmp_path)

    def test_unknown_slot_in_body_rejected(self, tmp_path):
        (tmp_path / "en").mkdir()
        (tmp_path / "en" / "det_predict.txt").write_text(
            "Judge this: {{news}} using {{bogus}}.")
        with pytest.raises(TemplateError, match="unknown slots"):
            load_template(TemplateId.DET_PREDICT, Language.EN, tmp_path)

    def test_required_slot_absent_from_body_rejected(self, tmp_path):
        (tmp_path / "en").mkdir()
        (tmp_path / "en" / "det_predict.txt").write_text("No slots here.")
        with pytest.raises(TemplateError, match="required slots missing"):
            load_template(TemplateId.DET_PREDICT, Language.EN, tmp_path)

    def test_library_caches_instances(self):
        lib = TemplateLibrary(Language.EN)
        assert lib.get(TemplateId.GEN_FORGE) is lib.get(TemplateId.GEN_FORGE)


class TestRender:
    def test_deterministic(self):
        lib = TemplateLibrary(Language.EN)
        slots = {"news": NEWS, "strategy": "1. Check dates."}
        assert lib.render(TemplateId.DET_PREDICT, slots) == \
            lib.render(TemplateId.DET_PREDICT, slots)

    def test_null_strategy_renders_sentinel(self):
        lib = TemplateLibrary(Language.EN)
        text = lib.render(TemplateId.GEN_FORGE, {"news": NEWS})
        assert NO_STRATEGY_SENTINEL in text
        assert NEWS in text
        assert "{{" not in text

    def test_empty_optional_slot_falls_back_to_default(self):
        lib = TemplateLibrary(Language.EN)
        explicit = lib.render(TemplateId.DET_PREDICT, {"news": NEWS, "strategy": "  "})
        omitted = lib.render(TemplateId.DET_PREDICT, {"news": NEWS})
        assert explicit == omitted
        assert NO_STRATEGY_SENTINEL in explicit

    def test_provided_strategy_replaces_sentinel(self):
        lib = TemplateLibrary(Language.EN)
        text = lib.render(TemplateId.DET_PREDICT,
                          {"news": NEWS, "strategy": "1. Check the byline."})
        assert "1. Check the byline." in text
        assert NO_STRATEGY_SENTINEL not in text

    def test_unknown_slot_rejected(self):
        lib = TemplateLibrary(Language.EN)
        with pytest.raises(TemplateError, match="unknown slots"):
            lib.render(TemplateId.DET_PREDICT, {"news": NEWS, "mystery": "x"})

    def test_missing_required_slot_rejected(self):
        lib = TemplateLibrary(Language.EN)
        with pytest.raises(TemplateError, match="missing required"):
            lib.render(TemplateId.DET_PREDICT, {})

    def test_empty_required_slot_rejected(self):
        lib = TemplateLibrary(Language.EN)
        with pytest.raises(TemplateError, match="is empty"):
            lib.render(TemplateId.DET_PREDICT, {"news": "   "})

    def test_longest_template_stays_within_token_budget(self):
        # A 700-word article through the busiest template must leave headroom.
        article = " ".join(f"word{i}" for i in range(700))
        rules = format_rules([f"Watch for pattern number {i} in the body text."
                              for i in range(20)])
        lib = TemplateLibrary(Language.EN)
        text = lib.render(TemplateId.DET_UPGRADE_ADVERSARY, {
            "news": article, "forgery": article,
            "fake_explanation": "Swapped the opening figure.",
            "strategy": rules,
        })
        assert approx_token_count(text) < PROMPT_TOKEN_BUDGET


class TestFormatting:
    def test_format_rules_numbering(self):
        assert format_rules(["a", "b"]) == "1. a\n2. b"
        assert format_rules([]) == ""

    def test_format_demos_labels_and_order(self):
        demos = [
            NewsItem(id="d1", text="Alpha story.", label=Verdict.REAL,
                     split=Split.TRAIN),
            NewsItem(id="d2", text="Beta story.", label=Verdict.FAKE,
                     split=Split.TRAIN),
        ]
        block = format_demos(demos)
        assert block.index("[real]") < block.index("[fake]")
        assert "Alpha story." in block and "Beta story." in block
        assert format_demos([]) == ""

    def test_approx_token_count(self):
        assert approx_token_count("one two  three\nfour") == 4
        assert approx_token_count("") == 0


class TestParseDetector:
    def test_clean_json(self):
        out = parse_detector(json.dumps({"label": "fake", "explanation": "why"}))
        assert out.verdict is Verdict.FAKE
        assert out.explanation.text == "why"
        assert out.explanation.kind is ExplanationKind.DETECTION

    def test_fenced_json_with_prose(self):
        text = "Here you go:\n```json\n{\"label\": \"real\", \"explanation\": \"solid sourcing\"}\n```\nDone."
        out = parse_detector(text)
        assert out.verdict is Verdict.REAL
        assert out.explanation.text == "solid sourcing"

    def test_label_line_fallback(self):
        out = parse_detector("Label: fake\nExplanation: recycled rumor")
        assert out.verdict is Verdict.FAKE
        assert out.explanation.text == "recycled rumor"

    def test_reasoning_before_label(self):
        out = parse_detector("The dates do not line up at all.\nAnswer: fake")
        assert out.verdict is Verdict.FAKE
        assert "dates do not line up" in out.explanation.text

    def test_json_without_explanation_falls_through(self):
        text = '{"label": "real"}\nverdict: real\nreason: matches the record'
        out = parse_detector(text)
        assert out.verdict is Verdict.REAL
        assert out.explanation.text == "matches the record"

    def test_no_verdict_raises(self):
        with pytest.raises(ParseError):
            parse_detector("I am not sure about this one.")

    def test_verdict_without_any_explanation_raises(self):
        with pytest.raises(ParseError):
            parse_detector("label: fake")

    def test_authored_corpus_accuracy(self):
        cases = detector_cases()
        assert len(cases) == 200
        hits = 0
        for text, intended in cases:
            if intended is None:
                with pytest.raises(ParseError):
                    parse_detector(text)
                continue
            out = parse_detector(text)
            assert out.verdict is intended, text
            assert out.explanation.text.strip()
            hits += 1
        assert hits >= 198  # >= 99% of 200

    @given(st.text(max_size=300))
    @settings(max_examples=200)
    def test_total_over_arbitrary_text(self, text):
        try:
            out = parse_detector(text)
            assert out.verdict in (Verdict.REAL, Verdict.FAKE)
            assert out.explanation.text.strip()
        except ParseError:
            pass


class TestParseGenerator:
    def test_clean_json(self):
        reply = json.dumps({"fake_news": "Forged body.",
                            "fabrication_explanation": "Swapped the agency name."})
        out = parse_generator(reply)
        assert out.fake_text == "Forged body."
        assert out.fake_explanation.text == "Swapped the agency name."
        assert out.fake_explanation.kind is ExplanationKind.FAKE

    def test_section_header_fallback(self):
        reply = ("FAKE NEWS:\nThe ministry denied everything on Friday.\n\n"
                 "WHY IT MISLEADS:\nThe denial never happened; the quote is invented.")
        out = parse_generator(reply)
        assert out.fake_text.startswith("The ministry denied")
        assert "never happened" in out.fake_explanation.text

    def test_inline_section_values(self):
        reply = ("Fake news: Officials admit the figures were invented.\n"
                 "Fabrication explanation: Attributes a confession nobody made.")
        out = parse_generator(reply)
        assert out.fake_text == "Officials admit the figures were invented."
        assert out.fake_explanation.text == "Attributes a confession nobody made."

    def test_missing_sections_raise(self):
        with pytest.raises(ParseError):
            parse_generator("Here is a fake story with no structure at all.")

    def test_empty_sections_raise(self):
        with pytest.raises(ParseError):
            parse_generator("FAKE NEWS:\n\nWHY IT MISLEADS:\n")

    @given(st.text(max_size=300))
    @settings(max_examples=150)
    def test_total_over_arbitrary_text(self, text):
        try:
            out = parse_generator(text)
            assert out.fake_text.strip()
        except ParseError:
            pass


class TestParseStrategies:
    def test_numbered_list(self):
        rules = parse_strategies("1. Check dates.\n2. Check sources.",
                                 StrategyOwner.DETECTOR)
        assert rules == ["Check dates.", "Check sources."]

    def test_bulleted_list(self):
        rules = parse_strategies("- Verify bylines\n* Cross-check figures\n• Watch tone",
                                 StrategyOwner.GENERATOR)
        assert rules == ["Verify bylines", "Cross-check figures", "Watch tone"]

    def test_json_array_fallback(self):
        rules = parse_strategies('["Keep numbers plausible", "Reuse real names"]',
                                 StrategyOwner.GENERATOR)
        assert rules == ["Keep numbers plausible", "Reuse real names"]

    def test_duplicates_dropped_keeping_first(self):
        rules = parse_strategies("1. Same rule\n2. Other rule\n3. Same rule",
                                 StrategyOwner.DETECTOR)
        assert rules == ["Same rule", "Other rule"]

    def test_overlong_rule_trimmed_to_cap(self):
        long_rule = "x" * 400
        rules = parse_strategies(f"1. {long_rule}", StrategyOwner.DETECTOR)
        assert len(rules[0]) == MAX_RULE_CHARS

    def test_list_truncated_to_cap(self):
        text = "\n".join(f"{i}. Rule number {i}" for i in range(1, 31))
        rules = parse_strategies(text, StrategyOwner.DETECTOR)
        assert len(rules) == MAX_RULES
        assert rules[0] == "Rule number 1"

    def test_no_rules_raises(self):
        with pytest.raises(ParseError):
            parse_strategies("I would focus on sourcing and tone.",
                             StrategyOwner.DETECTOR)

    def test_idempotent_through_round_trip(self):
        text = "\n".join(f"{i}. Rule {i} " + "y" * 300 for i in range(1, 26))
        first = parse_strategies(text, StrategyOwner.DETECTOR)
        again = parse_strategies(format_rules(first), StrategyOwner.DETECTOR)
        assert first == again

    @given(st.lists(st.text(alphabet=st.characters(codec="ascii",
                                                   exclude_characters="\n\r"),
                            min_size=1, max_size=40)
                    .map(str.strip).filter(bool),
                    min_size=1, max_size=25))
    @settings(max_examples=100)
    def test_round_trip_property(self, rules):
        parsed = parse_strategies(format_rules(rules), StrategyOwner.DETECTOR)
        reparsed = parse_strategies(format_rules(parsed), StrategyOwner.DETECTOR)
        assert parsed == reparsed


class TestParseReflection:
    def test_verbatim_trimmed(self):
        text = "  You ignored that the agency never publishes on weekends. \n"
        refl = parse_reflection(text)
        assert refl.text == text.strip()
        assert refl.kind is ExplanationKind.REFLECTION

    def test_empty_raises(self):
        with pytest.raises(ParseError):
            parse_reflection("   \n  ")


class TestParseJudge:
    def full_scores(self, value: int = 5) -> dict[str, int]:
        return {dim: value for dim in QUALITY_DIMENSIONS}

    def test_clean_json(self):
        scores = parse_judge(json.dumps(self.full_scores(6)))
        assert scores == self.full_scores(6)

    def test_key_normalization(self):
        raw = {dim.replace(" ", "_"): 4 for dim in QUALITY_DIMENSIONS}
        assert parse_judge(json.dumps(raw)) == self.full_scores(4)

    def test_fenced_with_prose(self):
        text = "Scores below.\n```json\n" + json.dumps(self.full_scores(3)) + "\n```"
        assert parse_judge(text) == self.full_scores(3)

    def test_missing_dimension_raises(self):
        scores = self.full_scores()
        scores.pop("Integrity")
        with pytest.raises(ParseError):
            parse_judge(json.dumps(scores))

    def test_out_of_range_raises(self):
        scores = self.full_scores()
        scores["Integrity"] = 9
        with pytest.raises(ParseError):
            parse_judge(json.dumps(scores))

    def test_non_integer_raises(self):
        scores: dict = self.full_scores()
        scores["Integrity"] = "seven"
        with pytest.raises(ParseError):
            parse_judge(json.dumps(scores))

    def test_boolean_rejected(self):
        scores: dict = self.full_scores()
        scores["Integrity"] = True
        with pytest.raises(ParseError):
            parse_judge(json.dumps(scores))

    @given(st.text(max_size=200))
    @settings(max_examples=100)
    def test_total_over_arbitrary_text(self, text):
        try:
            scores = parse_judge(text)
            assert set(scores) == set(QUALITY_DIMENSIONS)
        except ParseError:
            pass
