"""Synthetic dictionary-editing task.

Every source sentence is filler words with one dictionary source phrase spliced
in; the target is the same sentence with that phrase swapped for its
paraphrase. Entry usage follows a Zipf law, so the rarest entries are seldom
(or never) seen in training and can only be edited correctly by reading the
retrieved dictionary.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .data import Pair
from .ppdb import DELIMITER


@dataclass
class SyntheticTask:
    ppdb_lines: list[str]
    entries: list[tuple[tuple[str, ...], tuple[str, ...]]]
    pairs: list[Pair]
    entry_of_pair: list[int]


def make_synthetic_task(n_pairs: int = 2000, n_entries: int = 50, seed: int = 0,
                        n_filler: int = 60, n_phrase_words: int = 40,
                        zipf: float = 1.0, min_len: int = 4, max_len: int = 8) -> SyntheticTask:
    """Source phrases, paraphrases and filler draw on three disjoint word pools.

    Filler words never repeat within a sentence, so the source position of
    every copied word is unambiguous.
    """
    rng = random.Random(seed)
    filler = [f"w{i:02d}" for i in range(n_filler)]
    source_words = [f"s{i:02d}" for i in range(n_phrase_words)]
    target_words = [f"p{i:02d}" for i in range(n_phrase_words)]

    entries: list[tuple[tuple[str, ...], tuple[str, ...]]] = []
    seen_sources = set()
    while len(entries) < n_entries:
        o = tuple(rng.sample(source_words, rng.choice((1, 2))))
        if o in seen_sources:
            continue
        p = tuple(rng.sample(target_words, rng.choice((1, 2))))
        seen_sources.add(o)
        entries.append((o, p))

    lines = []
    for o, p in entries:
        score = round(rng.uniform(1.0, 5.0), 4)
        align = " ".join(f"0-{j}" for j in range(len(p)))
        lines.append(DELIMITER.join(["[X]", " ".join(o), " ".join(p),
                                     f"PPDB2.0Score={score} PPDB1.0Score={score / 2}",
                                     align, "Equivalence"]))
    # distractors that ingest must drop
    for o, p in entries[:5]:
        lines.append(DELIMITER.join(["[X]", " ".join(o), "unrelated", "PPDB2.0Score=9.0", "0-0",
                                     "Independent"]))

    weights = [1.0 / (rank + 1) ** zipf for rank in range(n_entries)]
    pairs, which = [], []
    for _ in range(n_pairs):
        k = rng.choices(range(n_entries), weights)[0]
        o, p = entries[k]
        words = rng.sample(filler, rng.randint(min_len, max_len))
        at = rng.randint(0, len(words))
        pairs.append((tuple(words[:at]) + o + tuple(words[at:]),
                      tuple(words[:at]) + p + tuple(words[at:])))
        which.append(k)
    return SyntheticTask(lines, entries, pairs, which)
