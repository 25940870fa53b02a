#!/usr/bin/env python3
# Copyright 2026 The selfret Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
# http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Regenerates bleu_reference.json with nltk's corpus_bleu.

Every hypothesis has at least 4 tokens. nltk clamps each sentence's n-gram
total to at least 1 before pooling, which only differs from pooled counting
when a hypothesis is shorter than n.

    python3 gen_bleu_reference.py > bleu_reference.json
"""

import json
import random
import sys

import nltk
from nltk.translate.bleu_score import SmoothingFunction, corpus_bleu

EPSILON = 1e-9
VOCAB = [f"w{i}" for i in range(12)] + ["the", "a", "is", ".", ","]


def sentence(rng, lo, hi, vocab):
    return [rng.choice(vocab) for _ in range(rng.randint(lo, hi))]


def noisy_copy(rng, ref, vocab):
    out = []
    for tok in ref:
        roll = rng.random()
        if roll < 0.15:
            continue
        if roll < 0.35:
            out.append(rng.choice(vocab))
        else:
            out.append(tok)
        if rng.random() < 0.1:
            out.append(rng.choice(vocab))
    while len(out) < 4:
        out.append(rng.choice(vocab))
    return out


def main():
    rng = random.Random(20261015)
    smoothing = SmoothingFunction(epsilon=EPSILON).method1
    cases = []
    for c in range(100):
        vocab = VOCAB[: rng.randint(4, len(VOCAB))]
        n = rng.randint(1, 12)
        refs = [sentence(rng, 1, 20, vocab) for _ in range(n)]
        if c % 4 == 0:
            hyps = [sentence(rng, 4, 20, vocab) for _ in range(n)]
        else:
            hyps = [noisy_copy(rng, r, vocab) for r in refs]
        score = corpus_bleu([[r] for r in refs], hyps,
                            smoothing_function=smoothing)
        cases.append({"hyps": hyps, "refs": refs, "bleu": float(score)})
    json.dump({"generator": "nltk " + nltk.__version__,
               "max_n": 4, "epsilon": EPSILON, "cases": cases},
              sys.stdout, indent=1)
    sys.stdout.write("\n")


if __name__ == "__main__":
    main()
