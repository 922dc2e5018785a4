#!/usr/bin/env python3
"""Freeze sacrebleu outputs into fixtures/bleu_sacrebleu.jsonl.

Inputs are whitespace-tokenized strings scored with tokenize='none', so the
fixture pins the n-gram statistics and smoothing arithmetic independently of
any tokenizer. Requires `pip install sacrebleu`.
"""
import json
import random

import sacrebleu
from sacrebleu.metrics import BLEU

VOCAB = (
    "the a of and to in is was he it that his for with as had on by at her "
    "not be which but from they this said she were all him have one there "
    "would their when been who my what so an will up out them could into "
    "then no time little more some its about like now man over did great"
).split()


def perturb(rng, words):
    out = []
    for w in words:
        r = rng.random()
        if r < 0.12:
            continue
        if r < 0.27:
            out.append(rng.choice(VOCAB))
            continue
        out.append(w)
        if rng.random() < 0.08:
            out.append(rng.choice(VOCAB))
    return out


def sentence(rng, lo, hi):
    return [rng.choice(VOCAB) for _ in range(rng.randint(lo, hi))]


SENTENCE_CONFIGS = [
    ("exp", None, True, 4),
    ("floor", 0.1, True, 4),
    ("none", None, True, 4),
    ("exp", None, False, 4),
    ("floor", 0.1, False, 4),
    ("none", None, False, 4),
    ("exp", None, True, 2),
    ("floor", 0.3, True, 3),
]


def score(level, hyps, refs_per_seg, smoothing, value, eff, order):
    metric = BLEU(
        tokenize="none",
        smooth_method=smoothing,
        smooth_value=value,
        effective_order=eff,
        max_ngram_order=order,
    )
    streams = [list(s) for s in zip(*refs_per_seg)]
    if level == "sentence":
        return metric.sentence_score(hyps[0], refs_per_seg[0]).score
    return metric.corpus_score(hyps, streams).score


def main():
    rng = random.Random(20240917)
    records = []
    for i in range(50):
        smoothing, value, eff, order = SENTENCE_CONFIGS[i % len(SENTENCE_CONFIGS)]
        ref = sentence(rng, 1 if i % 7 == 0 else 3, 18)
        if i % 11 == 3:
            hyp = sentence(rng, 1, 6)
        elif i % 13 == 5:
            hyp = []
        else:
            hyp = perturb(rng, ref)
        refs = [" ".join(ref)]
        if i % 5 == 4:
            refs.append(" ".join(perturb(rng, ref)))
        h = " ".join(hyp)
        records.append(
            {
                "level": "sentence",
                "hyps": [h],
                "refs": [refs],
                "smoothing": smoothing,
                "smooth_value": value,
                "effective_order": eff,
                "max_order": order,
                "score": score("sentence", [h], [refs], smoothing, value, eff, order),
            }
        )
    corpus_configs = [
        ("exp", None, False, 4, 1),
        ("exp", None, False, 4, 2),
        ("none", None, False, 4, 1),
        ("floor", 0.1, False, 4, 1),
        ("exp", None, True, 3, 2),
    ]
    for smoothing, value, eff, order, nrefs in corpus_configs:
        hyps, refs = [], []
        for _ in range(rng.randint(6, 14)):
            ref = sentence(rng, 2, 20)
            hyp = perturb(rng, ref)
            seg_refs = [" ".join(ref)]
            for _ in range(nrefs - 1):
                seg_refs.append(" ".join(perturb(rng, ref)))
            hyps.append(" ".join(hyp))
            refs.append(seg_refs)
        records.append(
            {
                "level": "corpus",
                "hyps": hyps,
                "refs": refs,
                "smoothing": smoothing,
                "smooth_value": value,
                "effective_order": eff,
                "max_order": order,
                "score": score("corpus", hyps, refs, smoothing, value, eff, order),
            }
        )
    with open("fixtures/bleu_sacrebleu.jsonl", "w") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")
    print("sacrebleu", sacrebleu.__version__, "records", len(records))


if __name__ == "__main__":
    main()
