"""
Training the editing network on a synthetic task
================================================

Each target is its source with one dictionary phrase swapped for its
paraphrase. Rare entries show up only a handful of times in training, so
the network has to read the retrieved pairs to get them right.

Takes a couple of minutes on a laptop CPU.
"""

import torch

from dictedit.decoding import decode
from dictedit.config import TrainingConfig
from dictedit.ppdb import build_dictionary
from dictedit.retrieval import build_index
from dictedit.synthetic import make_synthetic_task
from dictedit.training import make_examples, train
from dictedit.vocab import build_vocab

torch.set_num_threads(1)

task = make_synthetic_task(n_pairs=2000, n_entries=50, seed=0)
src, tgt = task.pairs[0]
print(" ".join(src), "=>", " ".join(tgt))

index = build_index(build_dictionary(task.ppdb_lines))
train_pairs, valid_pairs = task.pairs[:1800], task.pairs[1800:]
vocab = build_vocab([side for pair in train_pairs for side in pair], min_count=0)

cfg = TrainingConfig(d_emb=32, d_hidden=64, d_attn=64, dropout=0.1, batch_size=32,
                     learning_rate=3e-3, M=10, max_epochs=30, min_count=0)
train_set = make_examples(train_pairs, vocab, index, cfg)
valid_set = make_examples(valid_pairs, vocab, index, cfg)


def progress(record):
    print(f"epoch {record['epoch']:2d}  valid loss {record['loss']:.3f}  "
          f"token accuracy {record['token_accuracy']:.3f}")


result = train(cfg, vocab, train_set, valid_set, on_epoch=progress)

# %%
# Greedy paraphrases for a few validation sentences

for ex, (_, ref) in list(zip(valid_set, valid_pairs))[:5]:
    hyp = decode(result.model, ex.src, ex.dictionary, beam=1, trace=False)
    print(" ".join(ex.src_tokens))
    print("  ->", " ".join(vocab.decode(hyp.output)), "| reference:", " ".join(ref))
