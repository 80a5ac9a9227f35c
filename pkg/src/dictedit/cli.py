"""Command-line entry point: ``dictedit <subcommand> ...``.

Exit status is 0 on success, 1 on a domain error (message on stderr) and 2 on
a usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import random
import sys
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .attention import MalformedTrace, PAD_LABEL, attention_export, write_trace
from .config import TrainingConfig, dump_config, load_config, parse_overrides
from .data import (load_caption_groups, make_mscoco_pairs, make_quora_pairs, read_pairs,
                   read_quora, tokenize, write_pairs)
from .decoding import decode
from .encoder import dictionary_ids
from .evaluation import ToolOutputUnparseable, ToolUnavailable, evaluate_run
from .ppdb import IngestConfig, read_ppdb, save_dictionary, load_dictionary
from .retrieval import build_index, load_index, retrieve, save_index
from .training import NonFiniteLoss, load_checkpoint, make_examples, save_checkpoint, train
from .vocab import build_vocab

logger = logging.getLogger("dictedit")

DOMAIN_ERRORS = (ValueError, KeyError, OSError, NonFiniteLoss, ToolUnavailable,
                 ToolOutputUnparseable, MalformedTrace)


def _sha256(path) -> str | None:
    p = Path(path)
    if not p.is_file():
        return None
    return hashlib.sha256(p.read_bytes()).hexdigest()


def write_manifest(path: Path, args: argparse.Namespace, inputs: dict, outputs: dict,
                   config: dict | None = None) -> None:
    manifest = {
        "dictedit_version": __version__,
        "subcommand": args.command,
        "seed": args.seed,
        "arguments": {k: v for k, v in vars(args).items() if k not in ("func",)},
        "config": config,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": {k: str(v) for k, v in outputs.items()},
        "input_sha256": {k: _sha256(v) for k, v in inputs.items()},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


def _manifest_path(args, default: Path | None) -> Path | None:
    return Path(args.manifest) if args.manifest else default


def _seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed)
    torch.manual_seed(seed)


def cmd_ingest(args) -> int:
    out = Path(args.out)
    write_manifest(_manifest_path(args, out.with_name(out.name + ".manifest.json")), args,
                   {"ppdb": args.ppdb}, {"dictionary": out})
    cfg = IngestConfig(max_phrase_len=args.max_phrase_len, score_feature=args.score_feature,
                       strict=args.strict)
    dictionary = read_ppdb(args.ppdb, cfg)
    save_dictionary(dictionary, out)
    print(f"{len(dictionary)} entries -> {out}", file=sys.stderr)
    return 0


def cmd_index(args) -> int:
    out = Path(args.out)
    write_manifest(_manifest_path(args, out.with_name(out.name + ".manifest.json")), args,
                   {"dictionary": args.dict}, {"index": out})
    index = build_index(load_dictionary(args.dict))
    save_index(index, out)
    print(f"indexed {index.corpus_size} entries, {len(index.doc_freq)} terms -> {out}", file=sys.stderr)
    return 0


def cmd_retrieve(args) -> int:
    if args.manifest:
        write_manifest(Path(args.manifest), args, {"index": args.index}, {})
    index = load_index(args.index)
    ret = retrieve(index, tokenize(args.sentence), args.m)
    if args.json:
        for rec in ret.to_records():
            print(json.dumps(rec, ensure_ascii=False))
    else:
        for rec in ret.to_records():
            print(f"{rec['rank']:>2}  {rec['score_r']:8.4f}  {rec['source']} → {rec['target']}  "
                  f"(overlap {rec['overlap_score']:.4f} + ppdb {rec['ppdb_score']:.4f})")
    return 0


def cmd_preprocess(args) -> int:
    out = Path(args.out)
    write_manifest(_manifest_path(args, out / "manifest.json"), args, {"input": args.input},
                   {"dir": out})
    sizes = {k: v for k, v in (("train", args.train_size), ("valid", args.valid_size),
                               ("test", args.test_size)) if v is not None}
    if args.format == "mscoco":
        splits = make_mscoco_pairs(load_caption_groups(args.input), args.seed, sizes or None)
    else:
        if sizes and len(sizes) != 3:
            raise ValueError("quora splits need all of --train-size, --valid-size, --test-size")
        splits = make_quora_pairs(read_quora(args.input), args.seed, sizes or None)
    out.mkdir(parents=True, exist_ok=True)
    for name, corpus in splits.items():
        write_pairs(corpus, out / f"{name}.tsv")
        print(f"{name}: {len(corpus)} pairs", file=sys.stderr)
    return 0


def _resolve_config(args) -> TrainingConfig:
    overrides = parse_overrides(dict(item.split("=", 1) for item in args.set or []))
    overrides["seed"] = args.seed
    if args.config:
        return load_config(args.config, **overrides)
    return TrainingConfig(**overrides)


def cmd_train(args) -> int:
    out = Path(args.out)
    cfg = _resolve_config(args)
    inputs = {"train": args.train, "valid": args.valid, "index": args.index}
    if args.config:
        inputs["config"] = args.config
    outputs = {"metrics": out / "metrics.jsonl", "checkpoint": out / "best.ckpt"}
    write_manifest(_manifest_path(args, out / "manifest.json"), args, inputs, outputs, cfg.to_dict())
    _seed_everything(cfg.seed)
    train_pairs, valid_pairs = read_pairs(args.train), read_pairs(args.valid)
    index = load_index(args.index)
    vocab = build_vocab([side for pair in train_pairs for side in pair], cfg.min_count)
    train_set = make_examples(train_pairs, vocab, index, cfg)
    valid_set = make_examples(valid_pairs, vocab, index, cfg)
    (out / "config.cfg").write_text(dump_config(cfg), encoding="utf-8")
    result = train(cfg, vocab, train_set, valid_set, log_path=outputs["metrics"],
                   checkpoint_path=outputs["checkpoint"])
    if not outputs["checkpoint"].exists():
        save_checkpoint(result.model, vocab, outputs["checkpoint"])
    print(f"best valid loss {result.best_valid_loss:.4f} at epoch {result.best_epoch}", file=sys.stderr)
    return 0


def _pair_labels(ret, M: int) -> list[str]:
    return [p.entry.label for p in ret.pairs] + [PAD_LABEL] * (M - len(ret.pairs))


def cmd_generate(args) -> int:
    outputs = {"hypotheses": args.out or "-"}
    if args.trace:
        outputs["trace"] = args.trace
    default = Path(args.out).with_name(Path(args.out).name + ".manifest.json") if args.out else None
    manifest = _manifest_path(args, default)
    if manifest:
        write_manifest(manifest, args, {"checkpoint": args.checkpoint, "index": args.index,
                                        "input": args.input}, outputs)
    _seed_everything(args.seed)
    model, vocab = load_checkpoint(args.checkpoint)
    index = load_index(args.index)
    M = model.cfg.M
    lines = Path(args.input).read_text(encoding="utf-8").splitlines()
    out_fh = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    trace_fh = open(args.trace, "w", encoding="utf-8") if args.trace else None
    try:
        for i, line in enumerate(lines):
            tokens = tokenize(line)[: model.cfg.max_src_len]
            if not tokens:
                out_fh.write("\n")
                continue
            ret = retrieve(index, tokens, M)
            hyp = decode(model, vocab.encode(tokens), dictionary_ids(ret, vocab, M), beam=args.beam,
                         trace=trace_fh is not None)
            out_fh.write(" ".join(vocab.decode(hyp.output)) + "\n")
            if trace_fh:
                write_trace(trace_fh, i, tokens, _pair_labels(ret, M), hyp.trace, vocab.itos)
    finally:
        if args.out:
            out_fh.close()
        if trace_fh:
            trace_fh.close()
    return 0


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    beams = args.beam or [1]
    write_manifest(_manifest_path(args, out / "manifest.json"), args,
                   {"checkpoint": args.checkpoint, "index": args.index, "test": args.test},
                   {"report": out / "report.jsonl"})
    _seed_everything(args.seed)
    model, vocab = load_checkpoint(args.checkpoint)
    rows = evaluate_run(model, vocab, load_index(args.index), read_pairs(args.test), beams, out,
                        args.meteor, args.model_name)
    for row in rows:
        print(json.dumps(row))
    return 0


def cmd_attention_export(args) -> int:
    write_manifest(_manifest_path(args, Path(args.out) / "manifest.json"), args,
                   {"trace": args.trace}, {"dir": args.out})
    written = attention_export(args.trace, args.out)
    print(f"wrote {len(written)} matrices to {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dictedit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--manifest", help="where to write the run manifest")
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "build a paraphrase dictionary from a PPDB file")
    p.add_argument("--ppdb", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-phrase-len", type=int, default=7)
    p.add_argument("--score-feature", default="PPDB2.0Score")
    p.add_argument("--strict", action="store_true", help="abort on malformed lines")

    p = add("index", cmd_index, "index a dictionary snapshot")
    p.add_argument("--dict", required=True)
    p.add_argument("--out", required=True)

    p = add("retrieve", cmd_retrieve, "show the paraphrase pairs retrieved for a sentence")
    p.add_argument("--index", required=True)
    p.add_argument("--sentence", required=True)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--json", action="store_true")

    p = add("preprocess", cmd_preprocess, "build train/valid/test pair files")
    p.add_argument("--format", choices=("mscoco", "quora"), required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--train-size", type=int)
    p.add_argument("--valid-size", type=int)
    p.add_argument("--test-size", type=int)

    p = add("train", cmd_train, "train an editing network")
    p.add_argument("--config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--out", required=True)

    p = add("generate", cmd_generate, "paraphrase one sentence per input line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--trace")
    p.add_argument("--out")

    p = add("evaluate", cmd_evaluate, "BLEU/METEOR on a test pair file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--beam", type=int, action="append")
    p.add_argument("--meteor", help="METEOR jar or executable")
    p.add_argument("--model-name", default="dictedit")
    p.add_argument("--out", required=True)

    p = add("attention-export", cmd_attention_export, "trace file to attention matrices")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 2 for usage errors, 0 for --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DOMAIN_ERRORS as exc:
        print(f"dictedit {args.command}: error: {exc}", file=sys.stderr)
        return 1


dispatch = main

if __name__ == "__main__":
    sys.exit(main())
