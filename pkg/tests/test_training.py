import json
import math
import random

import numpy as np
import pytest
import torch
from hypothesis import given, strategies as st

from conftest import random_batch, tiny_model
from dictedit.config import TrainingConfig, dump_config, load_config, parse_overrides
from dictedit.model import EditingNetwork
from dictedit.ppdb import build_dictionary
from dictedit.retrieval import build_index
from dictedit.synthetic import make_synthetic_task
from dictedit.training import (
    NonFiniteLoss,
    collate,
    evaluate_loss,
    gradient_check,
    load_checkpoint,
    make_examples,
    nll_loss,
    run_model,
    save_checkpoint,
    train,
)
from dictedit.vocab import BOS, EOS, PAD, UNK, EmptyCorpus, Vocabulary, build_vocab


# vocabulary

def test_min_count_is_strict():
    corpus = [["ten"]] * 10 + [["eleven"]] * 11
    vocab = build_vocab(corpus, min_count=10)
    assert "eleven" in vocab and "ten" not in vocab
    assert vocab.encode(["ten"]) == [UNK]


def test_reserved_ids_always_present():
    vocab = build_vocab([["a"]], min_count=10)
    assert vocab.itos == ["<pad>", "<unk>", "<s>", "</s>"]
    assert (PAD, UNK, BOS, EOS) == (0, 1, 2, 3)


def test_id_order_frequency_then_lexicographic():
    corpus = [["b", "a", "c", "c"], ["b", "a", "c"]]
    assert build_vocab(corpus, min_count=0).itos[4:] == ["c", "a", "b"]


def test_empty_corpus():
    with pytest.raises(EmptyCorpus):
        build_vocab([])


@given(st.lists(st.lists(st.sampled_from("abcdef"), max_size=5), min_size=1, max_size=20),
       st.integers(0, 3))
def test_vocab_is_exactly_the_frequent_training_tokens(train_sents, min_count):
    vocab = build_vocab(train_sents, min_count)
    counts = {}
    for s in train_sents:
        for t in s:
            counts[t] = counts.get(t, 0) + 1
    assert set(vocab.itos[4:]) == {t for t, c in counts.items() if c > min_count}


# objective

def test_nll_zero_for_certain_model():
    targets = torch.tensor([[4, 5, 3]])
    lp = torch.full((1, 3, 8), -math.inf)
    lp[0, torch.arange(3), targets[0]] = 0.0
    assert float(nll_loss(lp, targets)) == 0.0


def test_nll_uniform_closed_form():
    lp = torch.full((1, 4, 20), -math.log(20), dtype=torch.float64)
    targets = torch.tensor([[4, 9, 11, 3]])
    assert float(nll_loss(lp, targets)) == pytest.approx(4 * math.log(20), rel=1e-15)


def test_nll_matches_direct_summation():
    g = torch.Generator().manual_seed(0)
    lp = torch.log_softmax(torch.randn(3, 5, 11, generator=g, dtype=torch.float64), -1)
    targets = torch.randint(1, 11, (3, 5), generator=g)
    targets[1, 3:] = PAD
    ref = 0.0
    for b in range(3):
        for t in range(5):
            if targets[b, t] != PAD:
                ref -= math.log(math.exp(float(lp[b, t, targets[b, t]])))
    assert float(nll_loss(lp, targets)) == pytest.approx(ref / 3, abs=1e-12)


# gradient check

@pytest.fixture(scope="module")
def grad_model_batch():
    return tiny_model(), random_batch(T=4)


def test_gradient_check_insert_path_and_untouched_direction(grad_model_batch):
    model, batch = grad_model_batch
    groups = ["W'_alpha", "v'", "W_alpha", "v"]
    clean = gradient_check(model, batch, groups=groups)
    assert clean.worst < 1e-4
    ablated = tiny_model(use_dictionary=False)
    untouched = gradient_check(ablated, batch, groups=groups)
    assert max(untouched.max_abs_error.values()) < 1e-8
    assert all(untouched.max_rel_error[g] < 1e-4 for g in groups)


def test_gradient_check_detects_corrupted_insert_backward(grad_model_batch):
    model, batch = grad_model_batch
    model.insert_weights_hook = lambda grad: grad * 1.5
    try:
        report = gradient_check(model, batch, groups=["W'_alpha", "v'"])
    finally:
        model.insert_weights_hook = None
    assert report.max_rel_error["W'_alpha"] > 1e-2


def test_gradient_check_needs_float64():
    with pytest.raises(TypeError):
        gradient_check(tiny_model(dtype=torch.float32), random_batch())


# training loop

def synthetic_examples(n=200, cfg=None, seed=0):
    task = make_synthetic_task(n_pairs=n, n_entries=20, seed=seed)
    index = build_index(build_dictionary(task.ppdb_lines))
    cfg = cfg or TrainingConfig(d_emb=16, d_hidden=32, d_attn=32, dropout=0.0, M=5,
                                min_count=0, batch_size=16, learning_rate=1e-3)
    vocab = build_vocab([s for s, _ in task.pairs] + [t for _, t in task.pairs], cfg.min_count)
    return cfg, vocab, make_examples(task.pairs, vocab, index, cfg)


def test_fixed_batch_loss_decreases_for_ten_updates():
    cfg, vocab, examples = synthetic_examples()
    torch.manual_seed(0)
    model = EditingNetwork(len(vocab), cfg)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=1e-3)
    batch = collate(examples[:16])
    losses = []
    for _ in range(11):
        loss = nll_loss(run_model(model, batch).log_probs, batch.tgt_out)
        losses.append(float(loss.detach()))
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_first_epoch_loss_bounded_by_uniform():
    cfg, vocab, examples = synthetic_examples()
    cfg = cfg.replace(max_epochs=1)
    result = train(cfg, vocab, examples[:150], examples[150:])
    mean_len = np.mean([len(e.tgt) + 1 for e in examples[:150]])
    assert result.history[0]["loss"] <= math.log(len(vocab)) * mean_len


def test_training_is_seed_deterministic(tmp_path):
    cfg, vocab, examples = synthetic_examples(n=120)
    cfg = cfg.replace(max_epochs=2, dropout=0.3)
    train(cfg, vocab, examples[:100], examples[100:], log_path=tmp_path / "a.jsonl")
    train(cfg, vocab, examples[:100], examples[100:], log_path=tmp_path / "b.jsonl")
    a = (tmp_path / "a.jsonl").read_bytes()
    assert a == (tmp_path / "b.jsonl").read_bytes()
    records = [json.loads(line) for line in a.decode().splitlines()]
    assert [(r["epoch"], r["split"]) for r in records] == [(1, "train"), (1, "valid"), (2, "train"), (2, "valid")]
    assert all(set(r) == {"epoch", "split", "loss", "token_accuracy", "wall_time"} for r in records)
    assert all(r["wall_time"] is None for r in records)


def test_wall_time_logged_when_enabled():
    cfg, vocab, examples = synthetic_examples(n=40)
    result = train(cfg.replace(max_epochs=1, log_wall_time=True), vocab, examples[:30], examples[30:])
    assert all(r["wall_time"] >= 0 for r in result.history)


def test_early_stopping_and_best_checkpoint(tmp_path):
    cfg, vocab, examples = synthetic_examples(n=60)
    cfg = cfg.replace(max_epochs=50, patience=2, learning_rate=0.05)
    ckpt = tmp_path / "best.ckpt"
    result = train(cfg, vocab, examples[:40], examples[40:], checkpoint_path=ckpt)
    valid = [r for r in result.history if r["split"] == "valid"]
    best = min(valid, key=lambda r: r["loss"])
    assert result.best_epoch == best["epoch"]
    assert len(valid) < 50 or result.best_epoch >= 49
    loaded, _ = load_checkpoint(ckpt)
    assert evaluate_loss(loaded, examples[40:], 16)[0] == pytest.approx(best["loss"], rel=1e-6)


def test_on_epoch_callback_can_stop():
    cfg, vocab, examples = synthetic_examples(n=40)
    result = train(cfg.replace(max_epochs=10), vocab, examples[:30], examples[30:], on_epoch=lambda r: True)
    assert len(result.history) == 2


def test_non_finite_loss_aborts():
    cfg, vocab, examples = synthetic_examples(n=40)
    torch.manual_seed(0)
    model = EditingNetwork(len(vocab), cfg.replace(max_epochs=1))
    with torch.no_grad():
        model.output.bias[5] = math.nan
    with pytest.raises(NonFiniteLoss, match="parameter norm"):
        train(cfg.replace(max_epochs=1), vocab, examples[:30], examples[30:], model=model)


def test_copy_task_reaches_high_accuracy():
    rng = random.Random(0)
    words = [f"c{i}" for i in range(12)]
    pairs = []
    for _ in range(100):
        s = tuple(rng.sample(words, rng.randint(3, 6)))
        pairs.append((s, s))
    cfg = TrainingConfig(d_emb=32, d_hidden=64, d_attn=64, dropout=0.0, M=2, min_count=0,
                         batch_size=20, learning_rate=5e-3, max_epochs=500, patience=500, seed=0)
    vocab = build_vocab([s for s, _ in pairs], 0)
    examples = make_examples(pairs, vocab, None, cfg)
    result = train(cfg, vocab, examples, examples,
                   on_epoch=lambda r: r["token_accuracy"] >= 0.99)
    assert result.history[-1]["token_accuracy"] >= 0.99


def test_checkpoint_round_trip(tmp_path):
    model = tiny_model()
    vocab_itos = ["<pad>", "<unk>", "<s>", "</s>"] + [f"t{i}" for i in range(16)]
    save_checkpoint(model, Vocabulary(vocab_itos, 0), tmp_path / "m.ckpt")
    loaded, vocab = load_checkpoint(tmp_path / "m.ckpt")
    assert vocab.itos == vocab_itos
    batch = random_batch()
    assert torch.equal(run_model(loaded, batch).log_probs, run_model(model, batch).log_probs)


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.npz"
    np.savez(path, __meta__=np.array(json.dumps({"format": "other", "version": 1})))
    with pytest.raises(ValueError):
        load_checkpoint(path)


# config

def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# tiny\nd_emb = 16\nd_hidden=32  # per direction 16\nuse_dictionary=false\n")
    cfg = load_config(path, learning_rate=0.01)
    assert (cfg.d_emb, cfg.d_hidden, cfg.use_dictionary, cfg.learning_rate) == (16, 32, False, 0.01)
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg


@pytest.mark.parametrize("bad", [{"dropout": 1.0}, {"d_hidden": 0}, {"d_hidden": 7}, {"learning_rate": -1.0}])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TrainingConfig(**bad)


def test_parse_overrides_unknown_key():
    with pytest.raises(KeyError):
        parse_overrides({"nope": "1"})
    assert parse_overrides({"batch_size": "8", "dropout": "0.1"}) == {"batch_size": 8, "dropout": 0.1}
