#!/usr/bin/env python3
"""Convert an externally obtained news dataset into the corpus schema.

The benchmark corpora this pipeline is usually trained on cannot be
redistributed, so this repo ships only the converter: point it at your local
copy and it writes the manifest plus train/val/test JSONL files (and,
optionally, a real-news pool drawn from the training split). Input may be
CSV, JSON (array), or JSONL; field names and label values are configurable,
with presets for the two common layouts:

  --preset weibo21    JSON/JSONL with content/label fields, 1 = fake, zh
  --preset gossipcop  CSV with title/text and real/fake label strings, en

Items are shuffled with the given seed and split by ratio, stratified by
class so every split keeps the corpus class balance.
"""

import argparse
import csv
import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from newsarena.dataset import DatasetError, load_corpus, load_pool  # noqa: E402

PRESETS = {
    "weibo21": {"text_field": "content", "label_field": "label",
                "id_field": None, "fake_values": "1", "real_values": "0",
                "language": "zh"},
    "gossipcop": {"text_field": "text", "label_field": "label",
                  "id_field": "id", "fake_values": "fake",
                  "real_values": "real", "language": "en"},
}


def read_rows(path: Path) -> list[dict]:
    if path.suffix.lower() == ".csv":
        with path.open(encoding="utf-8", newline="") as fh:
            return [dict(row) for row in csv.DictReader(fh)]
    text = path.read_text(encoding="utf-8")
    stripped = text.lstrip()
    if stripped.startswith("["):
        rows = json.loads(text)
        if not isinstance(rows, list):
            raise DatasetError(f"{path}: expected a JSON array of records")
        return rows
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as err:
            raise DatasetError(f"{path}:{lineno}: invalid JSON ({err.msg})") from err
    return rows


def normalize(rows: list[dict], args) -> list[dict]:
    fake_values = {v.strip() for v in args.fake_values.split(",")}
    real_values = {v.strip() for v in args.real_values.split(",")}
    items = []
    for i, row in enumerate(rows, start=1):
        text = str(row.get(args.text_field, "") or "").strip()
        if not text:
            if args.skip_bad:
                continue
            raise DatasetError(f"record {i}: empty {args.text_field!r} field")
        raw_label = str(row.get(args.label_field, "")).strip()
        if raw_label in fake_values:
            label = "fake"
        elif raw_label in real_values:
            label = "real"
        elif args.skip_bad:
            continue
        else:
            raise DatasetError(f"record {i}: unmapped label {raw_label!r}")
        item_id = (str(row[args.id_field]) if args.id_field and
                   row.get(args.id_field) else f"{args.name}-{i}")
        items.append({"id": item_id, "text": text, "label": label})
    if not items:
        raise DatasetError("no usable records after filtering")
    seen = set()
    for item in items:
        if item["id"] in seen:
            raise DatasetError(f"duplicate id {item['id']!r} in source data")
        seen.add(item["id"])
    return items


def stratified_split(items: list[dict], ratios: tuple[float, float, float],
                     seed: int) -> dict[str, list[dict]]:
    rng = random.Random(seed)
    splits: dict[str, list[dict]] = {"train": [], "val": [], "test": []}
    for label in ("real", "fake"):
        cls = [item for item in items if item["label"] == label]
        rng.shuffle(cls)
        n = len(cls)
        n_train = round(n * ratios[0])
        n_val = round(n * ratios[1])
        splits["train"] += cls[:n_train]
        splits["val"] += cls[n_train:n_train + n_val]
        splits["test"] += cls[n_train + n_val:]
    for name, records in splits.items():
        if not records:
            raise DatasetError(
                f"split {name!r} came out empty; the source is too small "
                "for the requested ratios")
        rng.shuffle(records)
        for record in records:
            record["split"] = name
    return splits


def main() -> int:
    parser = argparse.ArgumentParser(
        description=__doc__.splitlines()[0],
        formatter_class=argparse.RawDescriptionHelpFormatter, epilog=__doc__)
    parser.add_argument("source", help="CSV, JSON, or JSONL file to convert")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--name", required=True,
                        help="corpus name (also the id prefix when the "
                             "source has no id column)")
    parser.add_argument("--preset", choices=sorted(PRESETS), default=None)
    parser.add_argument("--text-field", default="text")
    parser.add_argument("--label-field", default="label")
    parser.add_argument("--id-field", default=None)
    parser.add_argument("--fake-values", default="fake,1",
                        help="comma-separated label values meaning fake")
    parser.add_argument("--real-values", default="real,0")
    parser.add_argument("--language", default="en", choices=["en", "zh"])
    parser.add_argument("--ratios", default="0.7,0.1,0.2",
                        help="train,val,test fractions; must sum to 1")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--skip-bad", action="store_true",
                        help="drop records with empty text or unmapped "
                             "labels instead of failing")
    parser.add_argument("--pool-out", default=None,
                        help="also write this pool JSONL from the real "
                             "items of the train split")
    args = parser.parse_args()

    if args.preset:
        # Preset values fill in whatever the user did not set explicitly.
        for key, value in PRESETS[args.preset].items():
            if getattr(args, key) == parser.get_default(key):
                setattr(args, key, value)

    ratios = tuple(float(part) for part in args.ratios.split(","))
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) <= 0:
        parser.error("--ratios needs three positive fractions summing to 1")

    try:
        rows = read_rows(Path(args.source))
        items = normalize(rows, args)
        splits = stratified_split(items, ratios, args.seed)
    except DatasetError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"name": args.name, "language": args.language, "splits": {}}
    for split, records in splits.items():
        path = out / f"{split}.jsonl"
        with path.open("w", encoding="utf-8") as fh:
            for record in records:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
        manifest["splits"][split] = {
            "file": path.name,
            "real": sum(1 for r in records if r["label"] == "real"),
            "fake": sum(1 for r in records if r["label"] == "fake"),
        }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, ensure_ascii=False, indent=2) + "\n",
                             encoding="utf-8")

    if args.pool_out:
        pool_path = Path(args.pool_out)
        pool_path.parent.mkdir(parents=True, exist_ok=True)
        with pool_path.open("w", encoding="utf-8") as fh:
            for record in splits["train"]:
                if record["label"] == "real":
                    fh.write(json.dumps({"id": f"pool-{record['id']}",
                                         "text": record["text"]},
                                        ensure_ascii=False) + "\n")

    # Round-trip through the validating loaders so schema slips surface now.
    corpus = load_corpus(manifest_path)
    for split in ("train", "val", "test"):
        counts = manifest["splits"][split]
        print(f"{split}: {counts['real']} real + {counts['fake']} fake")
    if args.pool_out:
        pool = load_pool(args.pool_out)
        print(f"pool: {len(pool.items)} items -> {args.pool_out}")
    print(f"corpus {corpus.name!r} written to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
