#!/usr/bin/env python3
"""Writes the synthetic labelled corpus used by the mock pipeline and tests.

Group names are invented. Hate posts mostly use terms from the mock
backend's lexicon; a few are implicit (no lexicon term) and a few non-hate
posts quote a lexicon term as counter-speech, so the mock teacher disagrees
with gold on a realistic minority.
"""
import argparse
import csv
import random

GROUPS = ["Velmari", "Orrin believers", "Tessan women", "Quarn families", "Drellish migrants",
          "Sorvish men", "Halvic people", "Nemborans", "Ustrani workers", "Kaldish converts"]

HATE = [
    "{g} are vermin and everyone knows it",
    "honestly {g} are subhuman",
    "{g} are parasites living off the rest of us",
    "{g} should be driven out of this city",
    "{g} do not deserve rights like normal people",
    "{g} are a disease on this country",
    "wipe them out, every last one of the {g}",
    "go back where you came from, {g}",
    "the {g} are vermin, no other word for it",
    "I am sick of {g}, they are parasites",
]
IMPLICIT = [
    "funny how crime went up when the {g} moved in",
    "you can always tell a {g} house by the smell",
    "keep the {g} away from our schools",
]
NEUTRAL = [
    "the {g} community centre is hosting a food fair on saturday",
    "had a great chat with some {g} at the market today",
    "interesting documentary about the history of the {g}",
    "traffic on the ring road is terrible again",
    "does anyone know a good plumber near the station",
    "the match last night was brilliant, what a second half",
    "new cafe opened on the corner, the coffee is decent",
    "my cat has decided the laundry basket is her bed now",
    "rain all week, so much for summer",
    "finished the book club pick, the ending was a let down",
    "the library extended its opening hours, finally",
    "who else is watching the cycling this weekend",
]
COUNTER = [
    "calling {g} vermin is disgusting and you should be ashamed",
    "people who say {g} are a disease need to meet some of them",
]
SOURCES = [("forum_a", 0.5, 0.30), ("microblog", 0.3, 0.45), ("comments", 0.2, 0.20)]
TAILS = ["", "", "", " tbh", " lol", "!!", " seriously", ".", " #justsaying", " ..."]


def make_post(rng, hate):
    g = rng.choice(GROUPS)
    if hate:
        pool = IMPLICIT if rng.random() < 0.08 else HATE
    else:
        pool = COUNTER if rng.random() < 0.03 else NEUTRAL
    return rng.choice(pool).format(g=g) + rng.choice(TAILS)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/synthetic_corpus.csv")
    ap.add_argument("--n", type=int, default=900)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    rows = []
    for i in range(args.n):
        r = rng.random()
        acc = 0.0
        for name, share, hate_rate in SOURCES:
            acc += share
            if r < acc:
                break
        hate = rng.random() < hate_rate
        rows.append({"id": f"p{i + 1:05d}", "text": make_post(rng, hate),
                     "label": "1" if hate else "0", "source": name})
    with open(args.out, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=["id", "text", "label", "source"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


if __name__ == "__main__":
    main()
