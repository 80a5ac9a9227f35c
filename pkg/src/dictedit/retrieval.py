"""Inverted index over dictionary source phrases and two-stage pair retrieval.

Stage one fetches ``10 * M`` candidates with BM25 over source phrases.
Stage two re-ranks them with

    score_r = sum over distinct w in (o ∩ x) of tf(w, o) * idf(w) + ppdb_score

where ``idf(w) = ln((N + 1) / (df(w) + 1)) + 1``.
"""

from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .ppdb import (
    DictionaryEntry,
    EmptyDictionary,
    ParaphraseDictionary,
    entry_from_json,
    entry_to_json,
)

INDEX_FORMAT = "dictedit.retrieval-index"
INDEX_VERSION = 1
DEFAULT_M = 10
CANDIDATE_FACTOR = 10


@dataclass
class InvertedIndex:
    postings: dict[str, list[int]]
    doc_freq: dict[str, int]
    entry_lengths: dict[int, int]
    corpus_size: int
    dictionary: ParaphraseDictionary
    k1: float = 1.2
    b: float = 0.75
    # per-entry term counts, derived from the dictionary
    _tf: list[Counter] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self._tf:
            self._tf = [Counter(e.source_tokens) for e in self.dictionary.entries]
        self.avg_len = sum(self.entry_lengths.values()) / max(self.corpus_size, 1)

    def idf(self, token: str) -> float:
        return math.log((self.corpus_size + 1) / (self.doc_freq.get(token, 0) + 1)) + 1.0

    def bm25_idf(self, token: str) -> float:
        df = self.doc_freq.get(token, 0)
        return math.log(1.0 + (self.corpus_size - df + 0.5) / (df + 0.5))

    def term_freq(self, entry_id: int, token: str) -> int:
        return self._tf[entry_id][token]


@dataclass(frozen=True)
class RankedPair:
    entry: DictionaryEntry
    overlap_score: float
    score_r: float
    first_stage_score: float


@dataclass
class RetrievedDictionary:
    pairs: list[RankedPair]
    source_sentence: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def to_records(self) -> list[dict]:
        return [
            {
                "rank": rank,
                "id": p.entry.id,
                "source": " ".join(p.entry.source_tokens),
                "target": " ".join(p.entry.target_tokens),
                "overlap_score": p.overlap_score,
                "ppdb_score": p.entry.ppdb_score,
                "score_r": p.score_r,
                "first_stage_score": p.first_stage_score,
            }
            for rank, p in enumerate(self.pairs)
        ]


def build_index(dictionary: ParaphraseDictionary, k1: float = 1.2, b: float = 0.75) -> InvertedIndex:
    if len(dictionary) == 0:
        raise EmptyDictionary("cannot index an empty dictionary")
    postings: dict[str, list[int]] = defaultdict(list)
    lengths = {}
    for e in dictionary.entries:
        lengths[e.id] = len(e.source_tokens)
        for tok in dict.fromkeys(e.source_tokens):
            postings[tok].append(e.id)
    # ids are dense and visited in order, so postings are already ascending
    postings = dict(sorted(postings.items()))
    doc_freq = {tok: len(ids) for tok, ids in postings.items()}
    return InvertedIndex(postings, doc_freq, lengths, len(dictionary), dictionary, k1, b)


def candidate_fetch(index: InvertedIndex, sentence: Sequence[str], k: int) -> list[tuple[int, float]]:
    """Top-``k`` entries by BM25 among those sharing a token with ``sentence``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = Counter(sentence)
    scores: dict[int, float] = defaultdict(float)
    for tok in sorted(query):
        ids = index.postings.get(tok)
        if not ids:
            continue
        idf = index.bm25_idf(tok)
        for i in ids:
            tf = index.term_freq(i, tok)
            norm = index.k1 * (1 - index.b + index.b * index.entry_lengths[i] / index.avg_len)
            scores[i] += query[tok] * idf * tf * (index.k1 + 1) / (tf + norm)
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:k]


def pair_score(index: InvertedIndex, entry: DictionaryEntry, sentence: Sequence[str]) -> tuple[float, float]:
    """(overlap_score, score_r) for one entry."""
    shared = sorted(set(entry.source_tokens) & set(sentence))
    overlap = math.fsum(index.term_freq(entry.id, w) * index.idf(w) for w in shared)
    return overlap, overlap + entry.ppdb_score


def rank_pairs(candidates, dictionary: ParaphraseDictionary, sentence: Sequence[str],
               M: int, index: InvertedIndex) -> RetrievedDictionary:
    if M < 1:
        raise ValueError("M must be >= 1")
    sentence = tuple(sentence)
    scored = []
    for entry_id, first in candidates:
        entry = dictionary[entry_id]
        overlap, total = pair_score(index, entry, sentence)
        scored.append(RankedPair(entry, overlap, total, first))
    scored.sort(key=lambda p: (-p.score_r, p.entry.id))
    return RetrievedDictionary(scored[:M], sentence)


def retrieve(index: InvertedIndex, sentence: Sequence[str], M: int = DEFAULT_M,
             k: int | None = None) -> RetrievedDictionary:
    """Fetch ``k`` (default ``10 * M``) BM25 candidates and keep the best ``M`` by score_r."""
    if k is None:
        k = CANDIDATE_FACTOR * M
    candidates = candidate_fetch(index, sentence, k)
    return rank_pairs(candidates, index.dictionary, sentence, M, index)


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """JSON snapshot; embeds the dictionary so retrieval needs no other file."""
    payload = {
        "format": INDEX_FORMAT,
        "version": INDEX_VERSION,
        "k1": index.k1,
        "b": index.b,
        "corpus_size": index.corpus_size,
        "doc_freq": index.doc_freq,
        "postings": index.postings,
        "provenance": index.dictionary.provenance,
        "entries": [entry_to_json(e) for e in index.dictionary.entries],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, ensure_ascii=False)


def load_index(path: str | Path) -> InvertedIndex:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != INDEX_FORMAT or payload.get("version") != INDEX_VERSION:
        raise ValueError(f"{path}: not a version-{INDEX_VERSION} index snapshot")
    entries = [entry_from_json(d) for d in payload["entries"]]
    dictionary = ParaphraseDictionary(entries, payload.get("provenance", {}))
    index = build_index(dictionary, payload["k1"], payload["b"])
    if index.doc_freq != payload["doc_freq"]:
        raise ValueError(f"{path}: document frequencies do not match the embedded dictionary")
    return index
