"""Reading PPDB-format paraphrase files into an in-memory paraphrase dictionary.

A PPDB line looks like::

    [X] ||| overcome ||| get rid of ||| PPDB2.0Score=3.5 ... ||| 0-0 ||| Equivalence

Only the lexical/phrasal pairs labelled ``Equivalence`` whose phrases are at
most ``max_phrase_len`` tokens long survive into the dictionary.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

DELIMITER = " ||| "
SNAPSHOT_FORMAT = "dictedit.ppdb-dictionary"
SNAPSHOT_VERSION = 1


class Entailment(str, enum.Enum):
    EQUIVALENCE = "Equivalence"
    FORWARD_ENTAILMENT = "ForwardEntailment"
    REVERSE_ENTAILMENT = "ReverseEntailment"
    EXCLUSION = "Exclusion"
    INDEPENDENT = "Independent"
    OTHER_RELATED = "OtherRelated"


class MalformedRecord(ValueError):
    pass


class EmptyDictionary(ValueError):
    pass


@dataclass(frozen=True)
class IngestConfig:
    max_phrase_len: int = 7
    score_feature: str = "PPDB2.0Score"
    strict: bool = False


@dataclass(frozen=True)
class RawPpdbRecord:
    lhs_label: str
    source_phrase: tuple[str, ...]
    target_phrase: tuple[str, ...]
    features: dict[str, float]
    alignment: str
    entailment: Entailment


@dataclass(frozen=True)
class DictionaryEntry:
    id: int
    source_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]
    ppdb_score: float
    entailment: Entailment = Entailment.EQUIVALENCE

    @property
    def label(self) -> str:
        return f"{' '.join(self.source_tokens)} → {' '.join(self.target_tokens)}"


@dataclass
class ParaphraseDictionary:
    entries: list[DictionaryEntry]
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[DictionaryEntry]:
        return iter(self.entries)

    def __getitem__(self, i: int) -> DictionaryEntry:
        return self.entries[i]


def _split_phrase(text: str) -> tuple[str, ...]:
    return tuple(tok for tok in text.lower().split(" ") if tok)


def parse_record(line: str) -> RawPpdbRecord:
    """Parse one PPDB line. Raises MalformedRecord on any format violation."""
    fields = line.rstrip("\r\n").split(DELIMITER)
    if len(fields) != 6:
        raise MalformedRecord(f"expected 6 fields, got {len(fields)}: {line!r}")
    lhs, src, tgt, feats, alignment, label = (f.strip() for f in fields)
    source, target = _split_phrase(src), _split_phrase(tgt)
    if not source or not target:
        raise MalformedRecord(f"empty phrase: {line!r}")
    features = {}
    for item in feats.split():
        name, sep, value = item.partition("=")
        if not sep:
            raise MalformedRecord(f"feature without '=': {item!r}")
        try:
            features[name] = float(value)
        except ValueError:
            raise MalformedRecord(f"unparseable feature value: {item!r}") from None
    try:
        entailment = Entailment(label)
    except ValueError:
        raise MalformedRecord(f"unknown entailment label: {label!r}") from None
    return RawPpdbRecord(lhs, source, target, features, alignment, entailment)


def serialize_record(rec: RawPpdbRecord) -> str:
    feats = " ".join(f"{k}={v!r}" for k, v in rec.features.items())
    return DELIMITER.join(
        [
            rec.lhs_label,
            " ".join(rec.source_phrase),
            " ".join(rec.target_phrase),
            feats,
            rec.alignment,
            rec.entailment.value,
        ]
    )


def filter_record(rec: RawPpdbRecord, cfg: IngestConfig = IngestConfig()) -> DictionaryEntry | None:
    """Keep equivalence pairs within the phrase-length cap; the id is assigned later."""
    if rec.entailment is not Entailment.EQUIVALENCE:
        return None
    if len(rec.source_phrase) > cfg.max_phrase_len or len(rec.target_phrase) > cfg.max_phrase_len:
        return None
    score = rec.features.get(cfg.score_feature)
    if score is None or not math.isfinite(score):
        return None
    return DictionaryEntry(-1, rec.source_phrase, rec.target_phrase, score, rec.entailment)


def build_dictionary(lines: Iterable[str], cfg: IngestConfig = IngestConfig()) -> ParaphraseDictionary:
    """Parse, filter and deduplicate a stream of PPDB lines.

    Duplicate (source, target) pairs keep the highest score; ids follow
    first-seen order.
    """
    best: dict[tuple[tuple[str, ...], tuple[str, ...]], DictionaryEntry] = {}
    digest = hashlib.sha256()
    skipped = 0
    for lineno, line in enumerate(lines, 1):
        digest.update(line.rstrip("\r\n").encode("utf-8") + b"\n")
        if not line.strip():
            continue
        try:
            rec = parse_record(line)
        except MalformedRecord:
            if cfg.strict:
                raise
            skipped += 1
            logger.debug("skipping malformed line %d", lineno)
            continue
        entry = filter_record(rec, cfg)
        if entry is None:
            continue
        key = (entry.source_tokens, entry.target_tokens)
        prev = best.get(key)
        if prev is None or entry.ppdb_score > prev.ppdb_score:
            best[key] = entry
    if not best:
        raise EmptyDictionary("no entries survived filtering")
    # dict preserves first insertion order, so replacing a value keeps its slot
    entries = [
        DictionaryEntry(i, e.source_tokens, e.target_tokens, e.ppdb_score, e.entailment)
        for i, e in enumerate(best.values())
    ]
    provenance = {
        "source_sha256": digest.hexdigest(),
        "config": asdict(cfg),
        "skipped_malformed": skipped,
    }
    return ParaphraseDictionary(entries, provenance)


def entry_to_json(e: DictionaryEntry) -> dict:
    return {
        "id": e.id,
        "source": list(e.source_tokens),
        "target": list(e.target_tokens),
        "score": e.ppdb_score,
        "entailment": e.entailment.value,
    }


def entry_from_json(d: dict) -> DictionaryEntry:
    return DictionaryEntry(
        d["id"], tuple(d["source"]), tuple(d["target"]), float(d["score"]), Entailment(d["entailment"])
    )


def save_dictionary(dictionary: ParaphraseDictionary, path: str | Path) -> None:
    """Write a line-delimited JSON snapshot: one header line, then one entry per line."""
    header = {"format": SNAPSHOT_FORMAT, "version": SNAPSHOT_VERSION,
              "size": len(dictionary), "provenance": dictionary.provenance}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for e in dictionary.entries:
            fh.write(json.dumps(entry_to_json(e), sort_keys=True, ensure_ascii=False) + "\n")


def load_dictionary(path: str | Path) -> ParaphraseDictionary:
    with open(path, encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != SNAPSHOT_FORMAT or "version" not in header:
            raise ValueError(f"{path}: not a dictionary snapshot")
        if header["version"] != SNAPSHOT_VERSION:
            raise ValueError(f"{path}: unsupported snapshot version {header['version']}")
        entries = [entry_from_json(json.loads(line)) for line in fh if line.strip()]
    if len(entries) != header["size"]:
        raise ValueError(f"{path}: truncated snapshot ({len(entries)} of {header['size']} entries)")
    return ParaphraseDictionary(entries, header.get("provenance", {}))


def read_ppdb(path: str | Path, cfg: IngestConfig = IngestConfig()) -> ParaphraseDictionary:
    with open(path, encoding="utf-8") as fh:
        return build_dictionary(fh, cfg)
