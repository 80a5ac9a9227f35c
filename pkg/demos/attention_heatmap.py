"""
Delete and insert attention for one sentence
============================================

Decoding with a trace records, at every step, the weights over the
retrieved pairs. The export turns them into M x T tables (rows are
"o -> p" pairs, columns are emitted tokens), ready for any heatmap tool.
"""

import tempfile
from pathlib import Path

import numpy as np
import torch

from dictedit.decoding import decode
from dictedit.attention import PAD_LABEL, attention_export, write_trace
from dictedit.config import TrainingConfig
from dictedit.ppdb import build_dictionary
from dictedit.retrieval import build_index, retrieve
from dictedit.synthetic import make_synthetic_task
from dictedit.training import make_examples, train
from dictedit.vocab import build_vocab

torch.set_num_threads(1)

task = make_synthetic_task(n_pairs=1200, n_entries=15, seed=1)
index = build_index(build_dictionary(task.ppdb_lines))
vocab = build_vocab([side for pair in task.pairs for side in pair], min_count=0)
cfg = TrainingConfig(d_emb=32, d_hidden=64, d_attn=64, dropout=0.1, batch_size=32,
                     learning_rate=3e-3, M=5, max_epochs=25, min_count=0)
examples = make_examples(task.pairs, vocab, index, cfg)
model = train(cfg, vocab, examples[:1100], examples[1100:]).model

# the validation sentence with the most retrieved pairs makes the liveliest table
ex = max(examples[1100:], key=lambda e: int(e.dictionary.mask.sum()))
hyp = decode(model, ex.src, ex.dictionary, beam=4)
ret = retrieve(index, ex.src_tokens, cfg.M)
labels = [p.entry.label for p in ret] + [PAD_LABEL] * (cfg.M - len(ret))

out = Path(tempfile.mkdtemp())
with open(out / "trace.jsonl", "w") as fh:
    write_trace(fh, 0, ex.src_tokens, labels, hyp.trace, vocab.itos)
paths = attention_export(out / "trace.jsonl", out)

# the delete matrix; padding rows stay at exactly zero
rows = [line.split("\t") for line in paths[0].read_text().splitlines()]
print("source:", " ".join(ex.src_tokens))
print(" " * 22 + " ".join(f"{tok:>6}" for tok in rows[0][1:]))
for row in rows[1:]:
    weights = np.array(row[1:], dtype=float)
    print(f"{row[0]:>21} " + " ".join(f"{w:6.2f}" for w in weights))
