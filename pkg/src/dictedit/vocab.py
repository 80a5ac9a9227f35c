from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

PAD, UNK, BOS, EOS = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<s>", "</s>")


class EmptyCorpus(ValueError):
    pass


@dataclass
class Vocabulary:
    itos: list[str]
    min_count: int

    def __post_init__(self):
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.itos[i] for i in ids]


def build_vocab(sentences: Iterable[Sequence[str]], min_count: int = 10) -> Vocabulary:
    """Vocabulary over tokens seen strictly more than ``min_count`` times.

    Pass the training split only. Ids after the four reserved ones go by
    descending frequency, ties broken lexicographically.
    """
    counts: Counter = Counter()
    n = 0
    for sent in sentences:
        counts.update(sent)
        n += 1
    if n == 0:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, c in counts.items() if c > min_count and t not in RESERVED),
                  key=lambda t: (-counts[t], t))
    return Vocabulary(list(RESERVED) + kept, min_count)
