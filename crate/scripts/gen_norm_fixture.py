#!/usr/bin/env python3
"""Freeze English-normalizer parity cases into fixtures/english_norm_parity.jsonl.

Usage: PYTHONPATH=<openai-whisper source dir> gen_norm_fixture.py

Oracle: whisper's EnglishSpellingNormalizer applied after a straightforward
Python rendition of the toolkit's `basic` normalization. Only the spelling
layer of whisper is used; the toolkit does not reimplement number or currency
handling.
"""
import json
import random
import re
import unicodedata

from whisper.normalizers.english import EnglishSpellingNormalizer


def basic(text):
    text = unicodedata.normalize("NFKC", text).lower().replace("’", "'")
    out = []
    for ch in text:
        cat = unicodedata.category(ch)
        keep = ch == "'" or ch.isspace() or cat.startswith("L") or cat.startswith("N")
        out.append(ch if keep else " ")
    return re.sub(r"\s+", " ", "".join(out)).strip()


def main():
    rng = random.Random(7)
    spelling = EnglishSpellingNormalizer()
    british = sorted(spelling.mapping.keys())
    filler = "the old man said that his neighbour's dog was quite Big. and it ran!".split()
    cases = ["Mr. Smith's colour", "The COLOUR, of honour!", "  Organise   the  catalogue. "]
    for _ in range(37):
        words = []
        for _ in range(rng.randint(3, 12)):
            if rng.random() < 0.35:
                w = rng.choice(british)
                if rng.random() < 0.3:
                    w = w.capitalize()
            else:
                w = rng.choice(filler)
            if rng.random() < 0.15:
                w += rng.choice([",", ".", "?", "!", ";"])
            words.append(w)
        cases.append(" ".join(words))
    with open("fixtures/english_norm_parity.jsonl", "w") as f:
        for c in cases:
            expected = " ".join(spelling(w) for w in basic(c).split())
            f.write(json.dumps({"input": c, "expected": expected}) + "\n")
    print(len(cases), "cases")


if __name__ == "__main__":
    main()
