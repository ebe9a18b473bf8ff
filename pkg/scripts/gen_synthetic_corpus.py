#!/usr/bin/env python3
"""Generate a small synthetic news corpus plus real-news pool.

The output follows the corpus schema the loaders expect: a JSON manifest
naming one JSONL file per split with declared class counts, and a flat pool
file of real items. Texts are templated and seeded, so regenerating with the
same arguments reproduces the files byte for byte. The corpus is meant for
desk-scale runs, demos, and tests; it carries no claim about real-world
distributions.
"""

import argparse
import json
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from newsarena.dataset import load_corpus, load_pool  # noqa: E402

CITIES = ("Riverton", "Eastbrook", "Maplewood", "Harper Falls", "Lakemont",
          "Greystone", "Northfield", "Cedar Bay")
AGENCIES = ("transit authority", "water board", "school district",
            "parks department", "county health office", "housing commission")
REAL_EVENTS = (
    "approved a {amount} million budget for {project} after a public hearing",
    "published audited figures showing {count} {project} completed this year",
    "announced that {project} will close for scheduled maintenance from "
    "Monday, with detours posted",
    "confirmed the {project} timetable for next quarter following a board vote",
    "released its annual report, noting a {count} percent rise in ridership",
    "opened applications for the {project} grant program, with a deadline "
    "at the end of the month",
)
PROJECTS = ("bridge repairs", "library renovations", "bus lane extensions",
            "storm drain upgrades", "playground inspections",
            "vaccination clinics", "road resurfacing works")
FAKE_CLAIMS = (
    "A leaked memo proves the {agency} in {city} secretly diverted "
    "{amount} million to offshore accounts, insiders say.",
    "Sources claim the {city} {agency} will abolish {project} overnight; "
    "officials are said to be hiding the decision.",
    "A miracle device endorsed by the {city} {agency} reportedly ends the "
    "need for {project} forever, according to a viral post.",
    "Whistleblowers allege {count} officials at the {city} {agency} "
    "falsified every record about {project}.",
    "The {city} {agency} was shut down overnight, claims an anonymous "
    "insider, and {project} has been cancelled without notice.",
)


def real_text(rng: random.Random) -> str:
    city = rng.choice(CITIES)
    agency = rng.choice(AGENCIES)
    event = rng.choice(REAL_EVENTS).format(
        amount=rng.randint(2, 90),
        count=rng.randint(3, 40),
        project=rng.choice(PROJECTS),
    )
    return f"The {city} {agency} {event}."


def fake_text(rng: random.Random) -> str:
    return rng.choice(FAKE_CLAIMS).format(
        city=rng.choice(CITIES),
        agency=rng.choice(AGENCIES),
        amount=rng.randint(5, 900),
        count=rng.randint(2, 30),
        project=rng.choice(PROJECTS),
    )


def split_records(split: str, n: int, rng: random.Random) -> list[dict]:
    n_real = (n + 1) // 2
    records = []
    for i in range(1, n + 1):
        is_real = i <= n_real
        records.append({
            "id": f"syn-{split}-{'r' if is_real else 'f'}{i if is_real else i - n_real}",
            "text": real_text(rng) if is_real else fake_text(rng),
            "label": "real" if is_real else "fake",
            "split": split,
        })
    return records


def write_jsonl(path: Path, records: list[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/synthetic",
                        help="output directory (default: data/synthetic)")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--pool", type=int, default=40,
                        help="real-news pool size")
    parser.add_argument("--train", type=int, default=20)
    parser.add_argument("--val", type=int, default=10)
    parser.add_argument("--test", type=int, default=20)
    args = parser.parse_args()
    if min(args.pool, args.train, args.val, args.test) < 2:
        parser.error("every file needs at least 2 items")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(args.seed)

    manifest = {"name": "synthetic-desk", "language": "en", "splits": {}}
    for split, n in (("train", args.train), ("val", args.val),
                     ("test", args.test)):
        records = split_records(split, n, rng)
        write_jsonl(out / f"{split}.jsonl", records)
        manifest["splits"][split] = {
            "file": f"{split}.jsonl",
            "real": sum(1 for r in records if r["label"] == "real"),
            "fake": sum(1 for r in records if r["label"] == "fake"),
        }
    (out / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8")

    pool_records = [{"id": f"syn-pool-{i}", "text": real_text(rng)}
                    for i in range(1, args.pool + 1)]
    write_jsonl(out / "pool.jsonl", pool_records)

    # Load everything back through the validating loaders before declaring
    # success; a generator bug should fail here, not in a later run.
    corpus = load_corpus(out / "manifest.json")
    pool = load_pool(out / "pool.jsonl")
    for split_name in ("train", "val", "test"):
        entry = manifest["splits"][split_name]
        print(f"{split_name}: {entry['real']} real + {entry['fake']} fake "
              f"-> {out / entry['file']}")
    stats = pool.token_stats
    print(f"pool: {len(pool.items)} real items -> {out / 'pool.jsonl'} "
          f"(tokens min {stats.minimum}, max {stats.maximum}, "
          f"mean {stats.mean:.1f})")
    print(f"manifest: {out / 'manifest.json'} (corpus {corpus.name!r})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
