#!/usr/bin/env python3
"""Build crates/core/data/english_rules.tsv.

Usage: gen_english_rules.py <path-to-whisper/normalizers/english.json>

The British->American spelling map is taken verbatim from openai-whisper
(MIT License, Copyright (c) 2022 OpenAI). Contraction and title rules mirror
the whole-word replacements of whisper's EnglishTextNormalizer; suffix rules
such as n't -> not are expanded into the common whole words they cover.
"""
import json
import sys

WHOLE_WORD = [
    ("won't", "will not"),
    ("can't", "can not"),
    ("let's", "let us"),
    ("ain't", "aint"),
    ("y'all", "you all"),
    ("wanna", "want to"),
    ("gotta", "got to"),
    ("gonna", "going to"),
    ("i'ma", "i am going to"),
    ("imma", "i am going to"),
    ("woulda", "would have"),
    ("coulda", "could have"),
    ("shoulda", "should have"),
    ("ma'am", "madam"),
    ("mr", "mister"),
    ("mrs", "missus"),
    ("st", "saint"),
    ("dr", "doctor"),
    ("prof", "professor"),
    ("capt", "captain"),
    ("gov", "governor"),
    ("ald", "alderman"),
    ("gen", "general"),
    ("sen", "senator"),
    ("rep", "representative"),
    ("pres", "president"),
    ("rev", "reverend"),
    ("hon", "honorable"),
    ("asst", "assistant"),
    ("assoc", "associate"),
    ("lt", "lieutenant"),
    ("col", "colonel"),
    ("jr", "junior"),
    ("sr", "senior"),
    ("esq", "esquire"),
]

NOT_STEMS = [
    "do", "does", "did", "is", "are", "was", "were", "has", "have", "had",
    "would", "could", "should", "must", "need", "might", "dare",
]
PRONOUNS = ["i", "you", "we", "they", "he", "she", "it", "that", "there", "who"]
SUFFIXES = [("'re", "are"), ("'ll", "will"), ("'ve", "have"), ("'d", "would")]


def main():
    spelling = json.load(open(sys.argv[1]))
    rules = list(WHOLE_WORD)
    rules += [(f"{s}n't", f"{s} not") for s in NOT_STEMS]
    rules.append(("i'm", "i am"))
    for p in PRONOUNS:
        for suf, full in SUFFIXES:
            if suf == "'re" and p in ("i", "he", "she", "it", "that"):
                continue
            rules.append((f"{p}{suf}", f"{p} {full}"))
    n_word_rules = len(rules)
    rules += [(k, v) for k, v in sorted(spelling.items()) if " " not in k and " " not in v]
    seen = set()
    with open("crates/core/data/english_rules.tsv", "w") as f:
        f.write("# English substitution rules: pattern<TAB>replacement, whole words.\n")
        f.write("# Spelling map from openai-whisper normalizers/english.json\n")
        f.write("# (MIT License, Copyright (c) 2022 OpenAI).\n")
        f.write("# [contractions and titles]\n")
        for i, (k, v) in enumerate(rules):
            if i == n_word_rules:
                f.write("# [spellings]\n")
            if k in seen:
                continue
            seen.add(k)
            f.write(f"{k}\t{v}\n")
    print(len(seen), "rules")


if __name__ == "__main__":
    main()
