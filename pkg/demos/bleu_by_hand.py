"""
Corpus BLEU, step by step
=========================

Clipped n-gram precisions, the brevity penalty, and what multiple
references change.
"""

import math
from collections import Counter

from dictedit.evaluation import EvalRecord, bleu

hyp = "the cat sat on the red mat".split()
refs = ["the cat sat on the mat".split(), "there is a cat on the mat".split()]


def ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


# each n-gram counts at most as often as in the single best reference
log_p = 0.0
for n in range(1, 5):
    counts = ngrams(hyp, n)
    best = Counter()
    for ref in refs:
        best |= ngrams(ref, n)
    matched = sum(min(c, best[g]) for g, c in counts.items())
    print(f"p{n} = {matched}/{sum(counts.values())}")
    log_p += math.log(matched / sum(counts.values())) / 4

# hypothesis (7) is longer than the closest reference (6): no penalty
print("by hand :", 100 * math.exp(log_p))
print("library :", bleu([EvalRecord(hyp, refs)]))

# clipping against the union of references would let "b b" score 100
print(bleu([EvalRecord(["b", "b"], [["a", "b"], ["b", "c"]])], max_n=1))
