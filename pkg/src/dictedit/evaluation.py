"""Corpus BLEU, a METEOR tool wrapper, and test-set evaluation runs."""

from __future__ import annotations

import json
import math
import re
import shutil
import subprocess
import tempfile
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .data import Pair


class ToolUnavailable(RuntimeError):
    pass


class ToolOutputUnparseable(RuntimeError):
    def __init__(self, message: str, output: str):
        super().__init__(message)
        self.output = output


@dataclass
class EvalRecord:
    hypothesis: list[str]
    references: list[list[str]]

    def __post_init__(self):
        if not self.references:
            raise ValueError("an evaluation record needs at least one reference")


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def closest_ref_length(hyp_len: int, references: Sequence[Sequence[str]]) -> int:
    """Reference length nearest the hypothesis length; the shorter one on ties."""
    return min((abs(len(r) - hyp_len), len(r)) for r in references)[1]


def bleu(records: Sequence[EvalRecord], max_n: int = 4) -> float:
    """Unsmoothed corpus BLEU on a 0-100 scale.

    Clipped n-gram counts use, per n-gram, its largest count in any single
    reference. Any zero precision gives 0.
    """
    if not records:
        raise ValueError("BLEU needs at least one record")
    matched = [0] * max_n
    total = [0] * max_n
    hyp_len = ref_len = 0
    for rec in records:
        hyp = rec.hypothesis
        hyp_len += len(hyp)
        ref_len += closest_ref_length(len(hyp), rec.references)
        for n in range(1, max_n + 1):
            counts = _ngrams(hyp, n)
            best: Counter = Counter()
            for ref in rec.references:
                best |= _ngrams(ref, n)
            matched[n - 1] += sum(min(c, best[g]) for g, c in counts.items())
            total[n - 1] += sum(counts.values())
    if hyp_len == 0 or min(matched) == 0:
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matched, total)) / max_n
    brevity = min(0.0, 1.0 - ref_len / hyp_len)
    return 100.0 * math.exp(brevity + log_precision)


FINAL_SCORE = re.compile(r"Final score:\s*([-+0-9.eE]+)")


def meteor(records: Sequence[EvalRecord], tool_path: str | Path | None, java: str = "java",
           language: str = "en", timeout: float = 600.0) -> float:
    """Run an external METEOR scorer and return its final score on a 0-100 scale.

    ``tool_path`` is either a METEOR jar (run through ``java -jar``) or an
    executable taking the same arguments: ``hyp ref -l <lang> -norm -r <n>``.
    References are written interleaved, ``n`` per hypothesis; records with
    fewer references repeat their last one.
    """
    if tool_path is None or not Path(tool_path).exists():
        raise ToolUnavailable(f"METEOR tool not found at {tool_path!r}")
    tool_path = Path(tool_path)
    if tool_path.suffix == ".jar":
        if shutil.which(java) is None:
            raise ToolUnavailable(f"{java!r} not on PATH; needed to run {tool_path}")
        cmd = [java, "-Xmx2G", "-jar", str(tool_path)]
    else:
        cmd = [str(tool_path)]
    n_refs = max(len(r.references) for r in records)
    with tempfile.TemporaryDirectory() as tmp:
        hyp_file, ref_file = Path(tmp) / "hyp.txt", Path(tmp) / "ref.txt"
        hyp_file.write_text("".join(" ".join(r.hypothesis) + "\n" for r in records), encoding="utf-8")
        with open(ref_file, "w", encoding="utf-8") as fh:
            for r in records:
                refs = r.references + [r.references[-1]] * (n_refs - len(r.references))
                for ref in refs:
                    fh.write(" ".join(ref) + "\n")
        cmd += [str(hyp_file), str(ref_file), "-l", language, "-norm", "-r", str(n_refs)]
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
        except OSError as exc:
            raise ToolUnavailable(f"could not run {cmd[0]}: {exc}") from exc
    output = proc.stdout + proc.stderr
    match = FINAL_SCORE.search(output)
    if proc.returncode != 0 or match is None:
        raise ToolOutputUnparseable("no 'Final score' line in METEOR output", output)
    try:
        return 100.0 * float(match.group(1))
    except ValueError:
        raise ToolOutputUnparseable(f"bad score {match.group(1)!r}", output) from None


def group_references(pairs: Sequence[Pair]) -> list[tuple[tuple[str, ...], list[list[str]]]]:
    """Collect every target of a repeated source as its references, first-seen order."""
    grouped: dict[tuple[str, ...], list[list[str]]] = {}
    for src, tgt in pairs:
        grouped.setdefault(tuple(src), []).append(list(tgt))
    return list(grouped.items())


def evaluate_run(model, vocab, index, test_pairs: Sequence[Pair], beams: Sequence[int] = (1,),
                 out_dir: str | Path | None = None, meteor_path: str | Path | None = None,
                 model_name: str = "dictedit") -> list[dict]:
    """Decode the test set once per beam size and score it.

    Writes ``hyp.beam<k>.txt`` (one line per distinct source) and appends one
    report row per beam size to ``report.jsonl`` when ``out_dir`` is given.
    """
    from .decoding import decode
    from .training import make_examples

    groups = group_references(test_pairs)
    sources = [(src, refs[0]) for src, refs in groups]
    examples = make_examples(sources, vocab, index, model.cfg)
    rows = []
    for beam in beams:
        hyps = []
        for ex in examples:
            hyp = decode(model, ex.src, ex.dictionary, beam=beam, trace=False)
            hyps.append(vocab.decode(hyp.output))
        records = [EvalRecord(h, refs) for h, (_, refs) in zip(hyps, groups)]
        row = {"model": model_name, "beam_size": beam, "bleu": bleu(records), "meteor": None}
        if meteor_path is not None:
            try:
                row["meteor"] = meteor(records, meteor_path)
            except ToolUnavailable:
                row["meteor"] = None
        rows.append(row)
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            Path(out_dir, f"hyp.beam{beam}.txt").write_text(
                "".join(" ".join(h) + "\n" for h in hyps), encoding="utf-8")
    if out_dir is not None:
        with open(Path(out_dir, "report.jsonl"), "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    return rows
