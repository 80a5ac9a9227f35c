"""Paraphrase-pair corpora: tokenization, MSCOCO caption pairing, Quora filtering."""

from __future__ import annotations

import csv
import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import permutations
from pathlib import Path
from typing import Iterable, Sequence

from nltk.tokenize import TreebankWordTokenizer

logger = logging.getLogger(__name__)

MSCOCO_MAX_LEN = 15
QUORA_MAX_LEN = 30
MSCOCO_SPLIT = {"test": 20_000, "valid": 10_000}
QUORA_SPLIT = {"train": 145_000, "valid": 5_000, "test": 4_000}

_treebank = TreebankWordTokenizer()

Pair = tuple[tuple[str, ...], tuple[str, ...]]


class GroupTooSmall(ValueError):
    pass


def tokenize(text: str) -> list[str]:
    """Treebank word tokenization, lowercased."""
    return _treebank.tokenize(text.lower())


@dataclass
class CaptionGroup:
    image_id: str
    captions: list[str]


@dataclass
class ParallelCorpus:
    pairs: list[Pair]
    split: str
    # grouping key per pair (image id for MSCOCO), kept for leakage checks
    groups: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.pairs)


def load_caption_groups(path: str | Path) -> list[CaptionGroup]:
    """Accepts a JSON array of ``{image_id, caption}`` or a COCO annotation file."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    records = payload["annotations"] if isinstance(payload, dict) else payload
    grouped: dict[str, list[str]] = defaultdict(list)
    for rec in records:
        grouped[str(rec["image_id"])].append(rec["caption"])
    return [CaptionGroup(k, v) for k, v in grouped.items()]


def _pairs_for_group(group: CaptionGroup, rng: random.Random) -> list[Pair]:
    if len(group.captions) < 2:
        raise GroupTooSmall(group.image_id)
    caps = [tuple(tokenize(c)[:MSCOCO_MAX_LEN]) for c in group.captions]
    if len(caps) > 2:
        caps.pop(rng.randrange(len(caps)))
    return list(permutations(caps, 2))


def _take_groups(order: list[str], by_group: dict[str, list[Pair]], n: int, start: int):
    """Consume whole groups from ``order[start:]`` until ``n`` pairs; the overflow is dropped."""
    out, keys = [], []
    i = start
    while len(out) < n and i < len(order):
        g = order[i]
        take = by_group[g][: n - len(out)]
        out.extend(take)
        keys.extend([g] * len(take))
        i += 1
    return out, keys, i


def make_mscoco_pairs(groups: Sequence[CaptionGroup], seed: int = 0,
                      sizes: dict[str, int] | None = None) -> dict[str, ParallelCorpus]:
    """Drop one caption per image, pair the rest in both directions, split by image.

    ``sizes`` gives the test/valid instance counts; train gets the remaining images.
    """
    sizes = dict(MSCOCO_SPLIT if sizes is None else sizes)
    rng = random.Random(seed)
    by_group: dict[str, list[Pair]] = {}
    skipped = 0
    for g in groups:
        try:
            by_group[g.image_id] = _pairs_for_group(g, rng)
        except GroupTooSmall:
            skipped += 1
    if skipped:
        logger.warning("skipped %d caption groups with fewer than 2 captions", skipped)
    order = sorted(by_group)
    rng.shuffle(order)
    test, test_keys, pos = _take_groups(order, by_group, sizes.get("test", 0), 0)
    valid, valid_keys, pos = _take_groups(order, by_group, sizes.get("valid", 0), pos)
    train, train_keys = [], []
    for g in order[pos:]:
        train.extend(by_group[g])
        train_keys.extend([g] * len(by_group[g]))
    return {
        "train": ParallelCorpus(train, "train", train_keys),
        "valid": ParallelCorpus(valid, "valid", valid_keys),
        "test": ParallelCorpus(test, "test", test_keys),
    }


def read_quora(path: str | Path) -> list[dict]:
    delimiter = "," if str(path).endswith(".csv") else "\t"
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh, delimiter=delimiter))


def _is_true(value) -> bool:
    return str(value).strip().lower() in {"1", "true", "yes"}


def make_quora_pairs(records: Iterable[dict], seed: int = 0,
                     sizes: dict[str, int] | None = None) -> dict[str, ParallelCorpus]:
    """Keep duplicate pairs with both sides <= 30 tokens and split them.

    With fewer pairs than the requested sizes the split is proportional.
    """
    sizes = dict(QUORA_SPLIT if sizes is None else sizes)
    pairs = []
    for rec in records:
        if not _is_true(rec["is_duplicate"]):
            continue
        src, tgt = tokenize(rec["question1"] or ""), tokenize(rec["question2"] or "")
        if not src or not tgt or len(src) > QUORA_MAX_LEN or len(tgt) > QUORA_MAX_LEN:
            continue
        pairs.append((tuple(src), tuple(tgt)))
    rng = random.Random(seed)
    rng.shuffle(pairs)
    total = sum(sizes.values())
    n = len(pairs)
    if n < total:
        n_valid = round(n * sizes["valid"] / total)
        n_test = round(n * sizes["test"] / total)
        n_train = n - n_valid - n_test
    else:
        n_train, n_valid, n_test = sizes["train"], sizes["valid"], sizes["test"]
    test = pairs[:n_test]
    valid = pairs[n_test:n_test + n_valid]
    train = pairs[n_test + n_valid:n_test + n_valid + n_train]
    return {
        "train": ParallelCorpus(train, "train"),
        "valid": ParallelCorpus(valid, "valid"),
        "test": ParallelCorpus(test, "test"),
    }


def write_pairs(corpus: ParallelCorpus | Sequence[Pair], path: str | Path) -> None:
    pairs = corpus.pairs if isinstance(corpus, ParallelCorpus) else corpus
    with open(path, "w", encoding="utf-8") as fh:
        for src, tgt in pairs:
            fh.write(" ".join(src) + "\t" + " ".join(tgt) + "\n")


def read_pairs(path: str | Path) -> list[Pair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            src, _, tgt = line.partition("\t")
            pairs.append((tuple(src.split()), tuple(tgt.split())))
    return pairs
