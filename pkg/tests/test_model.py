import numpy as np
import pytest
import torch

from conftest import random_batch, tiny_model
from dictedit.config import TrainingConfig
from dictedit.model import AdditiveAttention, EditingNetwork, EmptySource, masked_softmax
from dictedit.training import run_model
from oracles import additive_attention_reference


def attention(query_dim=5, key_dim=3, attn_dim=4, seed=0):
    torch.manual_seed(seed)
    att = AdditiveAttention(query_dim, key_dim, attn_dim).double()
    with torch.no_grad():
        att.W.uniform_(-1, 1)
        att.v.uniform_(-1, 1)
    return att


def test_masked_softmax_zero_on_masked_and_all_masked():
    scores = torch.tensor([[1.0, 2.0, 3.0], [0.5, 0.5, 0.5]])
    mask = torch.tensor([[True, False, True], [False, False, False]])
    w = masked_softmax(scores, mask)
    assert w[0, 1] == 0
    assert float(w[0].sum()) == pytest.approx(1.0)
    assert not w[1].any()


@pytest.mark.parametrize("seed", range(5))
def test_delete_attention_matches_reference(seed):
    att = attention(seed=seed)
    g = torch.Generator().manual_seed(seed)
    h = torch.randn(5, generator=g, dtype=torch.float64)
    keys = torch.randn(3, 3, generator=g, dtype=torch.float64)
    mask = torch.tensor([True, seed % 2 == 0, True])
    w, ctx = att(h[None, None], keys[None], mask[None])
    ref_w, ref_ctx = additive_attention_reference(h, keys, mask, att.W.detach(), att.v.detach())
    np.testing.assert_allclose(w[0, 0].detach().numpy(), ref_w, atol=1e-12)
    np.testing.assert_allclose(ctx[0, 0].detach().numpy(), ref_ctx, atol=1e-12)


def test_single_unmasked_row_is_one_hot():
    att = attention()
    keys = torch.randn(1, 3, 3, dtype=torch.float64)
    mask = torch.tensor([[False, True, False]])
    w, ctx = att(torch.randn(1, 1, 5, dtype=torch.float64), keys, mask)
    assert w[0, 0].tolist() == [0.0, 1.0, 0.0]
    assert torch.equal(ctx[0, 0], keys[0, 1])


def test_source_attention_single_state_and_uniform():
    att = attention(5, 5, 4)
    states = torch.randn(1, 1, 5, dtype=torch.float64)
    _, ctx = att(torch.randn(1, 1, 5, dtype=torch.float64), states, torch.ones(1, 1, dtype=torch.bool))
    assert torch.equal(ctx[0, 0], states[0, 0])
    with torch.no_grad():
        att.v.zero_()
    states = torch.randn(1, 4, 5, dtype=torch.float64)
    _, ctx = att(torch.randn(1, 1, 5, dtype=torch.float64), states, torch.ones(1, 4, dtype=torch.bool))
    assert torch.allclose(ctx[0, 0], states[0].mean(0), atol=1e-15)


def test_insert_equals_delete_with_shared_parameters():
    model = tiny_model()
    with torch.no_grad():
        model.insert_attention.W.copy_(model.delete_attention.W)
        model.insert_attention.v.copy_(model.delete_attention.v)
    b = random_batch()
    b.p_ids = b.o_ids.clone()
    out = run_model(model, b)
    assert torch.equal(out.delete_weights, out.insert_weights)


def test_output_shapes_and_normalization(tiny, batch):
    out = run_model(tiny, batch)
    B, T = batch.tgt_in.shape
    assert out.log_probs.shape == (B, T, 20)
    assert out.dictionary_context.shape == (B, T, 16)
    assert out.combined.shape == (B, T, 12)
    assert torch.allclose(out.log_probs.exp().sum(-1), torch.ones(B, T, dtype=torch.float64), atol=1e-12)
    assert (out.combined.abs() < 1).all()


def test_dictionary_context_order_and_bound(tiny, batch):
    out = run_model(tiny, batch)
    ed = tiny.encode_dictionary(batch.o_ids, batch.p_ids, batch.dict_mask)
    o_part = out.delete_weights @ ed.o_vectors
    p_part = out.insert_weights @ ed.p_vectors
    assert torch.allclose(out.dictionary_context, torch.cat([o_part, p_part], -1), atol=1e-14)
    bound = ed.o_vectors.abs().sum(-1).max(-1).values + ed.p_vectors.abs().sum(-1).max(-1).values
    assert (out.dictionary_context.abs().sum(-1) <= bound[:, None] + 1e-12).all()


def test_combine_reference_and_zero_weights(tiny, batch):
    out = run_model(tiny, batch)
    h, _ = tiny.decoder(tiny.embedding(batch.tgt_in), tiny.encode_source(batch.src, batch.src_len).init)
    x = torch.cat([h, out.dictionary_context, out.source_context], -1).detach().numpy()
    ref = np.tanh(np.einsum("oi,bti->bto", tiny.W_c.weight.detach().numpy(), x))
    np.testing.assert_allclose(out.combined.detach().numpy(), ref, atol=1e-12)
    with torch.no_grad():
        tiny.W_c.weight.zero_()
    assert not run_model(tiny, batch).combined.any()


def test_zero_output_weights_give_uniform(tiny, batch):
    with torch.no_grad():
        tiny.output.weight.zero_()
        tiny.output.bias.zero_()
    probs = run_model(tiny, batch).log_probs.exp()
    assert torch.allclose(probs, torch.full_like(probs, 1 / 20), atol=1e-15)


def test_logit_shift_invariance(tiny, batch):
    base = run_model(tiny, batch).log_probs
    with torch.no_grad():
        tiny.output.bias += 3.7
    assert torch.allclose(run_model(tiny, batch).log_probs, base, atol=1e-12)


def test_all_masked_dictionary_gives_zero_context(tiny):
    b = random_batch()
    b.dict_mask[:] = False
    b.o_ids[:] = 0
    b.p_ids[:] = 0
    out = run_model(tiny, b)
    assert not out.dictionary_context.any()
    assert not out.delete_weights.any() and not out.insert_weights.any()


def test_ablation_zeroes_dictionary_context():
    model = tiny_model(use_dictionary=False)
    out = run_model(model, random_batch())
    assert not out.dictionary_context.any()


def test_encode_source_shapes(tiny):
    enc = tiny.encode_source(torch.tensor([[5]]), torch.tensor([1]))
    assert enc.states.shape == (1, 1, 12)
    with pytest.raises(EmptySource):
        tiny.encode_source(torch.zeros(1, 0, dtype=torch.long), torch.tensor([0]))


def test_default_dimensions_on_caption_length():
    cfg = TrainingConfig()
    model = EditingNetwork(50, cfg)
    model.eval()
    enc = model.encode_source(torch.randint(4, 50, (1, 15)), torch.tensor([15]))
    assert enc.states.shape == (1, 15, 512)
    assert enc.init[0].shape == (2, 1, 512)
    again = model.encode_source(enc.states.new_zeros(1, 15).long() + 7, torch.tensor([15]))
    assert again.states.shape == (1, 15, 512)


def test_inference_is_deterministic(tiny, batch):
    a = run_model(tiny, batch).log_probs
    b = run_model(tiny, batch).log_probs
    assert torch.equal(a, b)


def test_train_mode_without_dropout_matches_eval(batch):
    model = tiny_model(dropout=0.0)
    eval_out = run_model(model, batch).log_probs
    model.train()
    assert torch.equal(run_model(model, batch).log_probs, eval_out)


@pytest.mark.parametrize("n_pairs", [0, 1, 3])
def test_output_shapes_do_not_depend_on_dictionary_size(tiny, n_pairs):
    b = random_batch(full_mask=True)
    b.dict_mask[:, n_pairs:] = False
    b.o_ids[~b.dict_mask] = 0
    b.p_ids[~b.dict_mask] = 0
    out = run_model(tiny, b)
    assert out.log_probs.shape == (2, 4, 20) and out.delete_weights.shape == (2, 4, 3)
