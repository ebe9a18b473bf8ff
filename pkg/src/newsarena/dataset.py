"""Loading and validation of labeled corpora and the real-news pool.

A corpus is described by a JSON manifest naming one JSONL file per split plus
the expected per-class counts; loading validates schema line by line and
enforces corpus-wide id uniqueness so no item can leak across splits. The
pool is a flat JSONL of real items with whitespace-token statistics.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .core import NewsItem, Origin, Split, Verdict
from .prompts import Language, approx_token_count


class DatasetError(Exception):
    """Schema or file-level problem; message carries path and line number."""


class IntegrityError(DatasetError):
    """Structurally valid data that violates a corpus-level invariant."""


_CORPUS_SPLITS = (Split.TRAIN, Split.VAL, Split.TEST)


@dataclass(frozen=True)
class Corpus:
    name: str
    language: Language
    splits: Mapping[Split, tuple[NewsItem, ...]]

    def items(self, split: Split) -> tuple[NewsItem, ...]:
        return self.splits[split]

    def class_counts(self, split: Split) -> dict[Verdict, int]:
        counts = {Verdict.REAL: 0, Verdict.FAKE: 0}
        for item in self.splits[split]:
            assert item.label is not None  # guaranteed by load validation
            counts[item.label] += 1
        return counts


@dataclass(frozen=True)
class TokenStats:
    minimum: int
    maximum: int
    mean: float

    def to_dict(self) -> dict[str, Any]:
        return {"min": self.minimum, "max": self.maximum, "mean": self.mean}


@dataclass(frozen=True)
class Pool:
    items: tuple[NewsItem, ...]
    token_stats: TokenStats


def _read_records(path: Path) -> list[tuple[int, dict[str, Any]]]:
    """Parse a JSONL file into (line number, record) pairs, skipping blanks."""
    if not path.is_file():
        raise DatasetError(f"{path}: file not found")
    records: list[tuple[int, dict[str, Any]]] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({err.msg})") from err
            if not isinstance(record, dict):
                raise DatasetError(f"{path}:{lineno}: record must be a JSON object")
            records.append((lineno, record))
    return records


def _item_from_record(path: Path, lineno: int, record: Mapping[str, Any],
                      split: Split, require_label: bool) -> NewsItem:
    item_id = record.get("id")
    text = record.get("text")
    if not isinstance(item_id, str) or not item_id:
        raise DatasetError(f"{path}:{lineno}: missing or empty 'id'")
    if not isinstance(text, str) or not text.strip():
        raise DatasetError(f"{path}:{lineno}: missing or empty 'text'")
    raw_label = record.get("label")
    if raw_label is None:
        if require_label:
            raise DatasetError(f"{path}:{lineno}: missing 'label'")
        label = Verdict.REAL  # pool records default to real
    else:
        try:
            label = Verdict.from_wire(raw_label)
        except (ValueError, AttributeError) as err:
            raise DatasetError(f"{path}:{lineno}: unknown label {raw_label!r}") from err
    declared_split = record.get("split")
    if declared_split is not None and declared_split != split.value:
        raise IntegrityError(
            f"{path}:{lineno}: record declares split {declared_split!r} "
            f"but the manifest places it in {split.value!r}"
        )
    try:
        return NewsItem(id=item_id, text=text, label=label, split=split,
                        origin=Origin.CORPUS)
    except ValueError as err:
        raise DatasetError(f"{path}:{lineno}: {err}") from err


def load_corpus(manifest_path: str | Path) -> Corpus:
    """Load and validate a three-split corpus from its manifest.

    The manifest is JSON: {"name", "language", "splits": {"train"|"val"|"test":
    {"file", "real", "fake"}}} with file paths relative to the manifest.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DatasetError(f"{manifest_path}: manifest not found")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise DatasetError(f"{manifest_path}: invalid JSON ({err.msg})") from err

    name = manifest.get("name")
    if not isinstance(name, str) or not name:
        raise DatasetError(f"{manifest_path}: missing corpus 'name'")
    try:
        language = Language(manifest.get("language", "en"))
    except ValueError as err:
        raise DatasetError(f"{manifest_path}: unknown language "
                           f"{manifest.get('language')!r}") from err
    declared = manifest.get("splits")
    if not isinstance(declared, dict):
        raise DatasetError(f"{manifest_path}: missing 'splits' table")
    for split in _CORPUS_SPLITS:
        if split.value not in declared:
            raise DatasetError(f"{manifest_path}: split {split.value!r} not declared "
                               "(train, val, and test are all required)")

    base = manifest_path.parent
    seen_ids: dict[str, str] = {}  # id -> "path:line" of first occurrence
    splits: dict[Split, tuple[NewsItem, ...]] = {}
    for split in _CORPUS_SPLITS:
        entry = declared[split.value]
        if not isinstance(entry, dict) or "file" not in entry:
            raise DatasetError(f"{manifest_path}: split {split.value!r} needs a 'file'")
        path = base / entry["file"]
        items: list[NewsItem] = []
        for lineno, record in _read_records(path):
            item = _item_from_record(path, lineno, record, split, require_label=True)
            where = f"{path}:{lineno}"
            if item.id in seen_ids:
                raise IntegrityError(
                    f"{where}: duplicate id {item.id!r} (first seen at {seen_ids[item.id]})"
                )
            seen_ids[item.id] = where
            items.append(item)
        if not items:
            raise DatasetError(f"{path}: split {split.value!r} is empty")
        counts = {Verdict.REAL: 0, Verdict.FAKE: 0}
        for item in items:
            counts[item.label] += 1  # type: ignore[index]
        for verdict, key in ((Verdict.REAL, "real"), (Verdict.FAKE, "fake")):
            expected = entry.get(key)
            if expected is not None and expected != counts[verdict]:
                raise IntegrityError(
                    f"{path}: split {split.value!r} has {counts[verdict]} {key} items, "
                    f"manifest declares {expected}"
                )
        splits[split] = tuple(items)
    return Corpus(name=name, language=language, splits=splits)


def load_pool(path: str | Path, max_items: int | None = None) -> Pool:
    """Load the real-news pool, optionally truncated to the first max_items.

    Records need only id and text; a label, when present, must be real. The
    truncation knob drives the pool-size ablation, so max_items=0 is valid
    and yields an empty pool.
    """
    if max_items is not None and max_items < 0:
        raise ValueError("max_items must be non-negative")
    path = Path(path)
    items: list[NewsItem] = []
    for lineno, record in _read_records(path):
        if max_items is not None and len(items) >= max_items:
            break
        raw_label = record.get("label")
        if raw_label is not None:
            try:
                label = Verdict.from_wire(raw_label)
            except (ValueError, AttributeError) as err:
                raise DatasetError(f"{path}:{lineno}: unknown label {raw_label!r}") from err
            if label is not Verdict.REAL:
                raise IntegrityError(f"{path}:{lineno}: pool items must be real, "
                                     f"got label {raw_label!r}")
        items.append(_item_from_record(path, lineno, record, Split.POOL,
                                       require_label=False))
    ids = set()
    for item in items:
        if item.id in ids:
            raise IntegrityError(f"{path}: duplicate pool id {item.id!r}")
        ids.add(item.id)
    if items:
        tokens = [approx_token_count(item.text) for item in items]
        stats = TokenStats(minimum=min(tokens), maximum=max(tokens),
                           mean=sum(tokens) / len(tokens))
    else:
        stats = TokenStats(minimum=0, maximum=0, mean=0.0)
    return Pool(items=tuple(items), token_stats=stats)


def sample_demos(corpus: Corpus, k: int, seed: int,
                 split: Split = Split.TRAIN) -> list[NewsItem]:
    """Draw k labeled demos from the training split, seeded-deterministic.

    Only the training split may be sampled (test and validation items must
    never appear inside prompts). Even k gives an exact class balance; odd k
    gives the extra slot to the real class.
    """
    if split is not Split.TRAIN:
        raise ValueError(f"demos may only come from the train split, not {split.value}")
    train = corpus.items(Split.TRAIN)
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > len(train):
        raise ValueError(f"k={k} exceeds the train split size {len(train)}")
    n_real = (k + 1) // 2
    n_fake = k // 2
    reals = [item for item in train if item.label is Verdict.REAL]
    fakes = [item for item in train if item.label is Verdict.FAKE]
    if len(reals) < n_real or len(fakes) < n_fake:
        raise ValueError(
            f"train split cannot supply {n_real} real and {n_fake} fake demos "
            f"(has {len(reals)} real, {len(fakes)} fake)"
        )
    rng = random.Random(f"{seed}:demos")
    chosen_real = rng.sample(reals, n_real)
    chosen_fake = rng.sample(fakes, n_fake)
    # Alternate real/fake so few-shot prompts never show one long class run.
    demos: list[NewsItem] = []
    for i in range(k):
        source = chosen_real if i % 2 == 0 else chosen_fake
        demos.append(source[i // 2])
    return demos
