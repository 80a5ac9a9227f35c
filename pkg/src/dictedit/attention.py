"""Attention traces: line-delimited JSON written by ``generate``, and their
conversion to heatmap-ready matrices (rows = dictionary pairs, columns =
emitted tokens)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Sequence

PAD_LABEL = "<pad>"


class MalformedTrace(ValueError):
    pass


@dataclass
class SentenceTrace:
    sentence: int
    source: list[str]
    pair_labels: list[str]  # length M, padding rows labelled PAD_LABEL
    steps: list[dict] = field(default_factory=list)


def write_trace(fh: IO[str], sentence: int, source: Sequence[str], pair_labels: Sequence[str],
                steps: Sequence[dict], vocab_itos: Sequence[str]) -> None:
    """One ``sentence`` header line, then one ``step`` line per emitted token."""
    fh.write(json.dumps({"kind": "sentence", "sentence": sentence, "source": list(source),
                         "pairs": list(pair_labels)}) + "\n")
    for rec in steps:
        fh.write(json.dumps({"kind": "step", "sentence": sentence, "step": rec["step"],
                             "token": vocab_itos[rec["token"]], "a": rec["a"],
                             "a_prime": rec["a_prime"], "src": rec["src"]}) + "\n")


def read_trace(path: str | Path) -> list[SentenceTrace]:
    traces: dict[int, SentenceTrace] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                kind = rec["kind"]
                if kind == "sentence":
                    traces[rec["sentence"]] = SentenceTrace(rec["sentence"], rec["source"], rec["pairs"])
                elif kind == "step":
                    trace = traces[rec["sentence"]]
                    M = len(trace.pair_labels)
                    if len(rec["a"]) != M or len(rec["a_prime"]) != M:
                        raise MalformedTrace(f"line {lineno}: attention length differs from M={M}")
                    if rec["step"] != len(trace.steps):
                        raise MalformedTrace(f"line {lineno}: step {rec['step']} out of order")
                    trace.steps.append(rec)
                else:
                    raise MalformedTrace(f"line {lineno}: unknown record kind {kind!r}")
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise MalformedTrace(f"{path}:{lineno}: {exc}") from None
    return [traces[k] for k in sorted(traces)]


def attention_matrices(trace: SentenceTrace) -> tuple[list[list[float]], list[list[float]]]:
    """Delete and insert matrices, each M rows by T columns."""
    M = len(trace.pair_labels)
    delete = [[step["a"][i] for step in trace.steps] for i in range(M)]
    insert = [[step["a_prime"][i] for step in trace.steps] for i in range(M)]
    return delete, insert


def _write_matrix(path: Path, labels, columns, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["pair"] + columns) + "\n")
        for label, row in zip(labels, rows):
            fh.write("\t".join([label] + [repr(float(x)) for x in row]) + "\n")


def attention_export(trace_path: str | Path, out_dir: str | Path) -> list[Path]:
    """Write ``sentence<i>.delete.tsv`` / ``sentence<i>.insert.tsv`` per traced sentence."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for trace in read_trace(trace_path):
        columns = [step["token"] for step in trace.steps]
        delete, insert = attention_matrices(trace)
        for name, rows in (("delete", delete), ("insert", insert)):
            path = out_dir / f"sentence{trace.sentence}.{name}.tsv"
            _write_matrix(path, trace.pair_labels, columns, rows)
            written.append(path)
    return written
