#!/usr/bin/env python3
"""Writes a small deterministic corpus of source/summary pairs with parses."""
import argparse
import json
import random

NOUNS = ["man", "woman", "police", "court", "mayor", "team", "farmer", "company",
         "student", "doctor", "army", "bank", "pilot", "union", "council"]
VERBS = ["escaped", "won", "signed", "blocked", "opened", "sold", "closed", "found",
         "joined", "left", "built", "lost"]
OBJECTS = ["prison", "title", "deal", "road", "school", "shares", "factory", "gold",
           "talks", "office", "bridge", "case"]
ADJS = ["local", "young", "former", "national", "rural", "senior"]
PLACES = ["paris", "texas", "lagos", "delhi", "peru", "oslo", "cairo", "lima"]
DAYS = ["monday", "tuesday", "friday", "sunday"]

# (source template, summary template, heads) keyed by the cue word in the source.
TEMPLATES = [
    ("the {n} {v} the {o} on {d} , officials said",
     "{n} {v} {o}", [2, 0, 2]),
    ("a {a} {n} reportedly {v} a {o} in {p} late on {d}",
     "{a} {n} {v} {o}", [2, 3, 0, 3]),
    ("in {p} the {n} {v} the {o} after weeks of delays",
     "{n} {v} {o} in {p}", [2, 0, 2, 5, 2]),
    ("officials confirmed that the {n} has {v} , sources in {p} said",
     "{n} {v}", [2, 0]),
    ("on {d} , the {a} {n} {v} its {o} according to reports",
     "{d} {n} {v} {o}", [3, 3, 0, 3]),
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=50)
    ap.add_argument("--seed", type=int, default=13)
    ap.add_argument("--output", required=True)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    seen = set()
    records = []
    while len(records) < args.count:
        k = len(records) % len(TEMPLATES)
        src, summ, heads = TEMPLATES[k]
        slots = dict(n=rng.choice(NOUNS), v=rng.choice(VERBS), o=rng.choice(OBJECTS),
                     a=rng.choice(ADJS), p=rng.choice(PLACES), d=rng.choice(DAYS))
        summary = summ.format(**slots)
        if summary in seen:
            continue
        seen.add(summary)
        records.append({"source": src.format(**slots), "summary": summary, "heads": heads})
    with open(args.output, "w") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")


if __name__ == "__main__":
    main()
