#!/usr/bin/env python3
"""Writes the small external-KG fixture used by the tests and the README demo.

Outputs triples.tsv, cases.jsonl, embeddings.bin and embedding_ids.txt.
"""
import argparse
import json
import random
import struct
from pathlib import Path

MAGIC = 0x45425243
DIM = 16

TEMPLATES = [
    ("what country was {} born in", ("born_in", "city_in")),
    ("which city is the employer of {} based in", ("works_for", "located_in")),
    ("who founded the company {} works for", ("works_for", "founded_by")),
    ("what language is spoken where {} lives", ("lives_in", "city_in", "language")),
]


def build(seed):
    rng = random.Random(seed)
    people = [f"person_{i}" for i in range(110)]
    cities = [f"city_{i}" for i in range(25)]
    countries = [f"country_{i}" for i in range(8)]
    companies = [f"company_{i}" for i in range(20)]
    languages = [f"language_{i}" for i in range(5)]

    triples = set()
    country_of = {c: rng.choice(countries) for c in cities}
    for c in cities:
        triples.add((c, "city_in", country_of[c]))
    lang_of = {c: rng.choice(languages) for c in countries}
    for c in countries:
        triples.add((c, "language", lang_of[c]))
    for co in companies:
        triples.add((co, "located_in", rng.choice(cities)))
        triples.add((co, "founded_by", rng.choice(people)))
    for p in people:
        triples.add((p, "born_in", rng.choice(cities)))
        triples.add((p, "lives_in", rng.choice(cities)))
        triples.add((p, "works_for", rng.choice(companies)))

    # Background noise so that plain k-hop balls get large.
    noise = ["knows", "follows", "visited", "likes", "mentions"]
    entities = people + cities + countries + companies + languages
    while len(triples) < 1000:
        h = rng.choice(people)
        r = rng.choice(noise)
        t = rng.choice(entities)
        if h != t:
            triples.add((h, r, t))
    triples = sorted(triples)

    index = {}
    for h, r, t in triples:
        index.setdefault((h, r), set()).add(t)

    def follow(start, chain):
        frontier = {start}
        for r in chain:
            frontier = set().union(*(index.get((e, r), set()) for e in frontier))
        return sorted(frontier)

    cases = []
    used = set()
    per_template = 5
    for ti, (question, chain) in enumerate(TEMPLATES):
        made = 0
        while made < per_template:
            p = rng.choice(people)
            if p in used:
                continue
            answers = follow(p, chain)
            if not answers:
                continue
            used.add(p)
            split = "test" if made == per_template - 1 else "train"
            cases.append({
                "id": f"q{len(cases):02d}",
                "split": split,
                "question": question.format(p),
                "entities": [p],
                "answers": answers,
                "template": ti,
            })
            made += 1

    centers = [[rng.gauss(0.0, 1.0) for _ in range(DIM)] for _ in TEMPLATES]
    rows = []
    for c in cases:
        center = centers[c.pop("template")]
        rows.append([x + rng.gauss(0.0, 0.15) for x in center])
    return triples, cases, rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="tests/data/toy_kg")
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()

    triples, cases, rows = build(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "triples.tsv", "w") as f:
        for h, r, t in triples:
            f.write(f"{h}\t{r}\t{t}\n")
    with open(out / "cases.jsonl", "w") as f:
        for c in cases:
            f.write(json.dumps(c) + "\n")
    with open(out / "embedding_ids.txt", "w") as f:
        for c in cases:
            f.write(c["id"] + "\n")
    with open(out / "embeddings.bin", "wb") as f:
        f.write(struct.pack("<III", MAGIC, len(rows), DIM))
        for row in rows:
            f.write(struct.pack(f"<{DIM}f", *row))
    print(f"{len(triples)} triples, {len(cases)} cases -> {out}")


if __name__ == "__main__":
    main()
