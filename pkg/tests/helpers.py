"""Shared builders for scripted fixtures, synthetic corpora, and agent configs."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Mapping, Sequence

from newsarena.agents import AgentConfig, AgentRole
from newsarena.core import NewsItem, QUALITY_DIMENSIONS, Split, Verdict
from newsarena.gateway import BackendConfig, BackendKind, write_fixture


def det_reply(label: str, explanation: str) -> str:
    return json.dumps({"label": label, "explanation": explanation})


def gen_reply(fake_text: str, explanation: str) -> str:
    return json.dumps({"fake_news": fake_text,
                       "fabrication_explanation": explanation})


def rules_reply(*rules: str) -> str:
    return "\n".join(f"{i}. {rule}" for i, rule in enumerate(rules, start=1))


def judge_reply(scores: int | Mapping[str, int]) -> str:
    if isinstance(scores, int):
        scores = {dim: scores for dim in QUALITY_DIMENSIONS}
    return json.dumps(dict(scores))


def scripted_backend(fixture_path: str | Path) -> BackendConfig:
    return BackendConfig(kind=BackendKind.SCRIPTED, fixture_path=str(fixture_path))


def tag_entries(tag: str, responses: Sequence[str]) -> list[dict[str, str]]:
    return [{"tag": tag, "response": response} for response in responses]


def agent_cfg(role: AgentRole, backend: BackendConfig, **kwargs) -> AgentConfig:
    return AgentConfig(role=role, backend=backend, **kwargs)


def make_pool(n: int, prefix: str = "P") -> list[NewsItem]:
    return [
        NewsItem(
            id=f"{prefix}{i}",
            text=f"Verified report {i}: the city council approved the annual "
                 f"budget of {100 + i} million after a public vote.",
            label=Verdict.REAL,
            split=Split.POOL,
        )
        for i in range(1, n + 1)
    ]


def make_labeled(n_real: int, n_fake: int, split: Split,
                 prefix: str) -> list[NewsItem]:
    items = []
    for i in range(1, n_real + 1):
        items.append(NewsItem(
            id=f"{prefix}R{i}",
            text=f"Official statement {i}: the ministry published audited "
                 f"figures confirming {i} new schools opened this year.",
            label=Verdict.REAL, split=split))
    for i in range(1, n_fake + 1):
        items.append(NewsItem(
            id=f"{prefix}F{i}",
            text=f"Shocking claim {i}: a secret memo proves the moon base "
                 f"cover-up involved {i} officials, insiders say.",
            label=Verdict.FAKE, split=split))
    return items


def write_corpus(directory: Path, *, name: str = "synthetic",
                 train: tuple[int, int] = (4, 4), val: tuple[int, int] = (2, 2),
                 test: tuple[int, int] = (2, 2)) -> Path:
    """Write a manifest plus three split files; returns the manifest path."""
    directory.mkdir(parents=True, exist_ok=True)
    split_specs = {
        Split.TRAIN: (train, "tr"),
        Split.VAL: (val, "va"),
        Split.TEST: (test, "te"),
    }
    manifest: dict = {"name": name, "language": "en", "splits": {}}
    for split, ((n_real, n_fake), prefix) in split_specs.items():
        items = make_labeled(n_real, n_fake, split, prefix)
        file_name = f"{split.value}.jsonl"
        with (directory / file_name).open("w", encoding="utf-8") as fh:
            for item in items:
                fh.write(json.dumps({
                    "id": item.id, "text": item.text,
                    "label": item.label.wire, "split": split.value,
                }, ensure_ascii=False) + "\n")
        manifest["splits"][split.value] = {
            "file": file_name, "real": n_real, "fake": n_fake,
        }
    manifest_path = directory / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return manifest_path


def adversary_entries(plan: Sequence[str], start: int = 1) -> list[dict[str, str]]:
    """Scripted replies for adversarial rounds.

    plan is one letter per round: "C" means the detector catches the forgery
    (generator upgrade follows), "W" means it is fooled (detector upgrade
    follows). Rounds must visit distinct pool items or evolved strategies so
    requests stay unique and the per-tag queues are consumed in order.
    """
    entries: list[dict[str, str]] = []
    for i, outcome in enumerate(plan, start=start):
        entries += tag_entries("generator:forge", [gen_reply(
            f"Forged variant {i}: the council canceled the budget overnight.",
            f"Round {i} fabrication swaps approval for cancellation.")])
        if outcome == "C":
            entries += tag_entries("detector:predict", [det_reply(
                "fake", f"Caught the round {i} forgery: cancellation is unsourced.")])
            entries += tag_entries("generator:upgrade", [rules_reply(
                f"Generator lesson {i}: keep one verifiable detail intact.")])
        else:
            entries += tag_entries("detector:predict", [det_reply(
                "real", f"Round {i} text looked routine and well sourced.")])
            entries += tag_entries("detector:upgrade-adversary", [rules_reply(
                f"Detector lesson {i}: verify overnight reversals with records.")])
    return entries


def ordered_train(items: Sequence[NewsItem], seed: int) -> list[NewsItem]:
    """Training items in the seeded order the reflection pass will visit."""
    from newsarena.orchestrator import train_order

    return [items[i] for i in train_order(seed, len(items))]


def reflection_entries(ordered_items: Sequence[NewsItem],
                       wrong_positions: Sequence[int],
                       mode: str = "zero-shot") -> list[dict[str, str]]:
    """Scripted replies for one reflection pass over pre-ordered train items.

    wrong_positions are 1-based positions (in the given order) where the
    detector answers with the flipped label, triggering reflect + upgrade.
    """
    wrong = set(wrong_positions)
    entries: list[dict[str, str]] = []
    for pos, item in enumerate(ordered_items, start=1):
        assert item.label is not None
        verdict = item.label.flipped() if pos in wrong else item.label
        entries += tag_entries("detector:predict", [det_reply(
            verdict.wire, f"Position {pos} assessment of {item.id}.")])
        if pos in wrong:
            entries += tag_entries(f"reflector:reflect:{mode}", [
                f"Feedback for position {pos}: re-check the sourcing of {item.id}."])
            entries += tag_entries("detector:upgrade-reflect", [rules_reply(
                f"Reflection lesson {pos}: weigh official records over tone.")])
    return entries


def write_pool_file(path: Path, items: Sequence[NewsItem]) -> Path:
    with path.open("w", encoding="utf-8") as fh:
        for item in items:
            fh.write(json.dumps({"id": item.id, "text": item.text},
                                ensure_ascii=False) + "\n")
    return path


__all__ = [
    "adversary_entries", "agent_cfg", "det_reply", "gen_reply", "judge_reply",
    "make_labeled", "make_pool", "ordered_train", "reflection_entries",
    "rules_reply", "scripted_backend", "tag_entries", "write_corpus",
    "write_fixture", "write_pool_file",
]
