#!/usr/bin/env python3
"""Offline end-to-end walkthrough on the bundled synthetic corpus.

Runs the full pipeline against a scripted backend, so it needs no network
and no API key: six adversarial rounds plus a reflection pass, then a test
split evaluation of the trained strategies against a zero-shot baseline,
and finally a rubric comparison of both systems' explanations. Every model
reply is authored below as a fixture, which makes the run deterministic and
the expected numbers checkable; the script asserts them at the end.

Artifacts (event log, checkpoint, reports, prediction dumps, judge scores)
land in --out. Run scripts/gen_synthetic_corpus.py first if data/synthetic
is missing.
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from newsarena.cli import main as newsarena  # noqa: E402
from newsarena.core import QUALITY_DIMENSIONS, Split  # noqa: E402
from newsarena.dataset import load_corpus, load_pool  # noqa: E402
from newsarena.gateway import write_fixture  # noqa: E402
from newsarena.orchestrator import (  # noqa: E402
    fold_events,
    pool_permutation,
    read_events,
    train_order,
)

SEED = 0
ROUND_PLAN = "CCWCWW"  # C: detector catches the forgery, W: it is fooled
REFLECT_WRONG = {4, 11, 17}  # 1-based positions the detector misses in reflection
STRATEGY_MISSES = {17}  # test item indices the trained detector still gets wrong
BASELINE_MISSES = {2, 5, 9, 11, 14, 18}

FINAL_RULES = (
    "Cross-check dramatic reversals against the cited agency's published records.",
    "Treat unattributed insider claims as a fabrication signal.",
    "Weigh document trails over emotional tone.",
)

# Rubric scores are integers in [1, 7].
ARENA_SCORES = dict(zip(QUALITY_DIMENSIONS, (7, 6, 7, 6, 7, 6, 7, 7, 5)))
ZERO_SHOT_SCORES = dict(zip(QUALITY_DIMENSIONS, (5, 5, 4, 3, 5, 4, 6, 5, 3)))


def det(label: str, explanation: str) -> str:
    return json.dumps({"label": label, "explanation": explanation})


def forged(text: str, explanation: str) -> str:
    return json.dumps({"fake_news": text, "fabrication_explanation": explanation})


def rules(*lines: str) -> str:
    return "\n".join(f"{i}. {line}" for i, line in enumerate(lines, start=1))


def tag(name: str, response: str) -> dict[str, str]:
    return {"tag": name, "response": response}


def train_fixture(pool_items, train_items) -> list[dict[str, str]]:
    entries = []
    visit = pool_permutation(SEED, 0, len(pool_items))
    for rnd, outcome in enumerate(ROUND_PLAN, start=1):
        source = pool_items[visit[rnd - 1]]
        entries.append(tag("generator:forge", forged(
            f"{source.text} Hours later, insiders say the decision was "
            "quietly reversed and the records sealed.",
            f"Round {rnd}: kept the verifiable opening, appended an "
            "unsourced overnight reversal.")))
        if outcome == "C":
            entries.append(tag("detector:predict", det(
                "fake", f"Round {rnd}: the reversal claim has no record "
                        "trail behind it.")))
            entries.append(tag("generator:upgrade", rules(
                f"Generator lesson {rnd}: blend the fabricated turn into "
                "the sourced part of the story.")))
        else:
            entries.append(tag("detector:predict", det(
                "real", f"Round {rnd}: reads like routine follow-up "
                        "coverage.")))
            entries.append(tag("detector:upgrade-adversary", rules(
                f"Detector lesson {rnd}: late reversals need a matching "
                "official record.")))

    order = train_order(SEED, len(train_items))
    for pos, idx in enumerate(order, start=1):
        item = train_items[idx]
        wrong = pos in REFLECT_WRONG
        verdict = item.label.flipped() if wrong else item.label
        entries.append(tag("detector:predict", det(
            verdict.wire, f"Reflection check of {item.id}.")))
        if wrong:
            entries.append(tag("reflector:reflect:zero-shot",
                               f"The call on {item.id} ignored the sourcing; "
                               "anchor the verdict in the document trail."))
            if pos == max(REFLECT_WRONG):
                entries.append(tag("detector:upgrade-reflect", rules(*FINAL_RULES)))
            else:
                entries.append(tag("detector:upgrade-reflect", rules(
                    f"Reflection lesson {pos}: weigh official records over tone.")))
    return entries


def eval_fixture(test_items) -> list[dict[str, str]]:
    entries = []
    for i, item in enumerate(test_items):
        verdict = item.label.flipped() if i in STRATEGY_MISSES else item.label
        entries.append(tag("detector:predict", det(
            verdict.wire,
            f"Checked {item.id} against the agency record trail; the claim "
            f"pattern matches {verdict.wire} coverage.")))
    for i, item in enumerate(test_items):
        verdict = item.label.flipped() if i in BASELINE_MISSES else item.label
        entries.append(tag("detector:baseline:zero-shot", det(
            verdict.wire, f"On first read {item.id} sounds {verdict.wire}.")))
    return entries


def judge_fixture(n_cases: int) -> list[dict[str, str]]:
    entries = [tag("judge:rubric", json.dumps(ARENA_SCORES))
               for _ in range(n_cases)]
    entries += [tag("judge:rubric", json.dumps(ZERO_SHOT_SCORES))
                for _ in range(n_cases)]
    return entries


def write_systems(out: Path, cases) -> list[Path]:
    """One {id,text,explanation} JSONL per system over the same items."""
    arena = out / "arena.jsonl"
    zero_shot = out / "zero-shot.jsonl"
    with arena.open("w", encoding="utf-8") as fh:
        for item in cases:
            fh.write(json.dumps({
                "id": item.id, "text": item.text,
                "explanation": f"The verdict on {item.id} rests on the record "
                               "trail: the cited agency's published schedule "
                               "does not contain the claimed reversal.",
            }, ensure_ascii=False) + "\n")
    with zero_shot.open("w", encoding="utf-8") as fh:
        for item in cases:
            fh.write(json.dumps({
                "id": item.id, "text": item.text,
                "explanation": f"{item.id} feels exaggerated, so it is "
                               "probably not trustworthy.",
            }, ensure_ascii=False) + "\n")
    return [arena, zero_shot]


def scripted_config(fixture_path: Path, **loop) -> dict:
    return {
        "backend": {"kind": "scripted", "fixture_path": str(fixture_path)},
        "loop": {"seed": SEED, **loop},
    }


def run(argv: list[str], banner: str) -> None:
    print(f"\n=== {banner} ===")
    code = newsarena(argv)
    if code != 0:
        sys.exit(f"step failed ({banner}): exit {code}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data", default="data/synthetic",
                        help="corpus directory with manifest.json and pool.jsonl")
    parser.add_argument("--out", default="demo_out")
    args = parser.parse_args()

    data = Path(args.data)
    manifest = data / "manifest.json"
    pool_path = data / "pool.jsonl"
    corpus = load_corpus(manifest)
    pool_items = load_pool(pool_path).items
    train_items = corpus.items(Split.TRAIN)
    test_items = corpus.items(Split.TEST)

    out = Path(args.out).resolve()
    fixtures = out / "fixtures"
    fixtures.mkdir(parents=True, exist_ok=True)
    judge_cases = sorted(test_items, key=lambda item: item.id)[:6]

    write_fixture(fixtures / "train.jsonl", train_fixture(pool_items, train_items))
    write_fixture(fixtures / "eval.jsonl", eval_fixture(test_items))
    write_fixture(fixtures / "judge.jsonl", judge_fixture(len(judge_cases)))
    configs = {}
    for name, loop in [("train", {"rounds": len(ROUND_PLAN)}),
                       ("eval", {}), ("judge", {})]:
        path = out / f"{name}_config.json"
        path.write_text(json.dumps(
            scripted_config(fixtures / f"{name}.jsonl", **loop), indent=2) + "\n",
            encoding="utf-8")
        configs[name] = str(path)

    run(["train", "--config", configs["train"], "--pool", str(pool_path),
         "--train", str(manifest), "--out", str(out / "run")],
        "train: adversarial rounds + reflection pass")
    run(["eval", "--config", configs["eval"], "--mode", "strategy",
         "--strategies", str(out / "run" / "checkpoint.json"),
         "--corpus", str(manifest), "--split", "test",
         "--out", str(out / "eval-strategy")],
        "eval: trained strategies on the test split")
    run(["eval", "--config", configs["eval"], "--mode", "zero-shot",
         "--corpus", str(manifest), "--split", "test",
         "--out", str(out / "eval-zero-shot")],
        "eval: zero-shot baseline on the test split")
    systems = write_systems(out, judge_cases)
    run(["judge", "--config", configs["judge"],
         "--systems", *[str(path) for path in systems],
         "--out", str(out / "judge.json")],
        "judge: explanation quality rubric")

    fold = fold_events(read_events(out / "run" / "events.jsonl"))
    print("\n=== event log fold ===")
    print(f"rounds: {fold.rounds_seen}, forgeries: {fold.forge_count}, "
          f"detections: {fold.detect_count}, reflections: {fold.reflect_count}")
    print(f"detector record in the arena: {fold.detector_correct} caught, "
          f"{fold.detector_wrong} fooled")
    print(f"final versions: generator v{fold.generator_version}, "
          f"detector v{fold.detector_version}")

    # The fixtures fully determine the run; catch any drift loudly.
    expected_detector = ROUND_PLAN.count("W") + len(REFLECT_WRONG)
    assert fold.generator_version == ROUND_PLAN.count("C"), fold
    assert fold.detector_version == expected_detector, fold
    assert tuple(fold.detector_rules) == FINAL_RULES, fold.detector_rules
    strategy = json.loads((out / "eval-strategy" / "report.json").read_text())
    baseline = json.loads((out / "eval-zero-shot" / "report.json").read_text())
    assert strategy["report"]["accuracy"] == 0.95, strategy["report"]
    assert baseline["report"]["accuracy"] == 0.70, baseline["report"]
    judged = json.loads((out / "judge.json").read_text())
    for name, scores in [("arena", ARENA_SCORES), ("zero-shot", ZERO_SHOT_SCORES)]:
        assert not judged[name]["unscored"], judged[name]
        assert judged[name]["report"]["scores"] == {
            dim: float(value) for dim, value in scores.items()}, judged[name]

    print(f"\nall checks passed; artifacts in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
