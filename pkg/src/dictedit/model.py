"""Dictionary-guided editing network.

A bidirectional LSTM encodes the source sentence. At every decoder step the
top-layer state ``h_t`` drives three additive attentions: one over encoder
states (``c'_t``), one over the source side of the retrieved pairs (delete
attention ``a_t``) and one over their target side (insert attention
``a'_t``). Then

    c_t   = sum_i a_t,i o_i  ⊕  sum_i a'_t,i p_i
    h~_t  = tanh(W_c [h_t ⊕ c_t ⊕ c'_t])
    p(y_t) = softmax(W_y [emb(y_t-1) ⊕ h~_t ⊕ c_t ⊕ c'_t] + b_y)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .config import TrainingConfig
from .encoder import EncodedDictionary, encode_ids
from .vocab import PAD

INIT_RANGE = 0.08


class EmptySource(ValueError):
    pass


def masked_softmax(scores: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Softmax over the last axis restricted to ``mask``.

    Masked positions get exactly zero weight; rows with nothing unmasked
    come out all-zero instead of NaN.
    """
    mask = mask.expand_as(scores)
    any_valid = mask.any(-1, keepdim=True)
    filled = scores.masked_fill(~mask, float("-inf"))
    filled = torch.where(any_valid, filled, torch.zeros_like(filled))
    return torch.softmax(filled, -1) * any_valid.to(scores.dtype)


class AdditiveAttention(nn.Module):
    """score(q, k) = v^T tanh(W [q ⊕ k]), masked softmax over keys, weighted key sum."""

    def __init__(self, query_dim: int, key_dim: int, attn_dim: int):
        super().__init__()
        self.query_dim = query_dim
        self.W = nn.Parameter(torch.empty(attn_dim, query_dim + key_dim))
        self.v = nn.Parameter(torch.empty(attn_dim))

    def scores(self, query: torch.Tensor, keys: torch.Tensor) -> torch.Tensor:
        # W [q ⊕ k] == W_q q + W_k k, evaluated without materializing the concat
        q = query @ self.W[:, : self.query_dim].T  # (B, T, A)
        k = keys @ self.W[:, self.query_dim:].T  # (B, M, A)
        return torch.tanh(q.unsqueeze(2) + k.unsqueeze(1)) @ self.v  # (B, T, M)

    def forward(self, query, keys, mask):
        weights = masked_softmax(self.scores(query, keys), mask.unsqueeze(1))
        return weights, weights @ keys


@dataclass
class EncoderOutput:
    states: torch.Tensor  # (B, S, d_hidden)
    mask: torch.Tensor  # (B, S) bool
    init: tuple[torch.Tensor, torch.Tensor]  # decoder (h0, c0), each (layers, B, d_hidden)

    def select(self, index: torch.Tensor) -> "EncoderOutput":
        h0, c0 = self.init
        return EncoderOutput(self.states[index], self.mask[index], (h0[:, index], c0[:, index]))


@dataclass
class StepOutput:
    log_probs: torch.Tensor  # (B, T, V)
    delete_weights: torch.Tensor  # (B, T, M)
    insert_weights: torch.Tensor  # (B, T, M)
    source_weights: torch.Tensor  # (B, T, S)
    dictionary_context: torch.Tensor  # (B, T, 2 d_emb)
    source_context: torch.Tensor  # (B, T, d_hidden)
    combined: torch.Tensor  # (B, T, d_hidden)


class EditingNetwork(nn.Module):
    def __init__(self, vocab_size: int, cfg: TrainingConfig):
        super().__init__()
        self.cfg = cfg
        self.vocab_size = vocab_size
        d, H, A, L = cfg.d_emb, cfg.d_hidden, cfg.d_attn, cfg.num_layers
        inner_dropout = cfg.dropout if L > 1 else 0.0
        self.embedding = nn.Embedding(vocab_size, d, padding_idx=PAD)
        self.encoder = nn.LSTM(d, H // 2, L, batch_first=True, bidirectional=True, dropout=inner_dropout)
        self.bridge_h = nn.Linear(H, L * H)
        self.bridge_c = nn.Linear(H, L * H)
        self.decoder = nn.LSTM(d, H, L, batch_first=True, dropout=inner_dropout)
        self.source_attention = AdditiveAttention(H, H, A)
        self.delete_attention = AdditiveAttention(H, d, A)
        self.insert_attention = AdditiveAttention(H, d, A)
        self.W_c = nn.Linear(H + 2 * d + H, H, bias=False)
        self.output = nn.Linear(d + H + 2 * d + H, vocab_size)
        self.dropout = nn.Dropout(cfg.dropout)
        self.use_dictionary = cfg.use_dictionary
        # test hook: called on a'_t so fault injection can tamper with its gradient
        self.insert_weights_hook: Callable | None = None
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for p in self.parameters():
            nn.init.uniform_(p, -INIT_RANGE, INIT_RANGE)
        with torch.no_grad():
            self.embedding.weight[PAD].zero_()

    def encode_dictionary(self, o_ids, p_ids, mask) -> EncodedDictionary:
        return encode_ids(o_ids, p_ids, mask, self.embedding.weight)

    def encode_source(self, src: torch.Tensor, src_len: torch.Tensor) -> EncoderOutput:
        if src.shape[1] == 0 or bool((src_len < 1).any()):
            raise EmptySource("source sentences must contain at least one token")
        emb = self.dropout(self.embedding(src))
        packed = pack_padded_sequence(emb, src_len.cpu(), batch_first=True, enforce_sorted=False)
        out, (h_n, _c_n) = self.encoder(packed)
        states, _ = pad_packed_sequence(out, batch_first=True, total_length=src.shape[1])
        L, B, H = self.cfg.num_layers, src.shape[0], self.cfg.d_hidden
        # last layer, forward and backward final states side by side
        last = h_n.view(L, 2, B, H // 2)[-1]
        final = torch.cat([last[0], last[1]], dim=-1)
        h0 = self.bridge_h(final).view(B, L, H).transpose(0, 1).contiguous()
        c0 = self.bridge_c(final).view(B, L, H).transpose(0, 1).contiguous()
        mask = torch.arange(src.shape[1], device=src.device)[None, :] < src_len[:, None]
        return EncoderOutput(states, mask, (h0, c0))

    def attend(self, h: torch.Tensor, prev_emb: torch.Tensor, enc: EncoderOutput,
               ed: EncodedDictionary) -> StepOutput:
        """Attentions, combination and output distribution for decoder states ``h``."""
        h = self.dropout(h)
        beta, src_ctx = self.source_attention(h, enc.states, enc.mask)
        a, o_ctx = self.delete_attention(h, ed.o_vectors, ed.mask)
        a_prime, p_ctx = self.insert_attention(h, ed.p_vectors, ed.mask)
        if self.insert_weights_hook is not None and a_prime.requires_grad:
            a_prime.register_hook(self.insert_weights_hook)
        dict_ctx = torch.cat([o_ctx, p_ctx], dim=-1)
        if not self.use_dictionary:
            dict_ctx = torch.zeros_like(dict_ctx)
        combined = torch.tanh(self.W_c(torch.cat([h, dict_ctx, src_ctx], dim=-1)))
        logits = self.output(torch.cat([prev_emb, combined, dict_ctx, src_ctx], dim=-1))
        return StepOutput(torch.log_softmax(logits, -1), a, a_prime, beta, dict_ctx, src_ctx, combined)

    def forward(self, src, src_len, tgt_in, o_ids, p_ids, dict_mask) -> StepOutput:
        """Teacher-forced pass; ``tgt_in`` starts with BOS."""
        enc = self.encode_source(src, src_len)
        ed = self.encode_dictionary(o_ids, p_ids, dict_mask)
        emb = self.embedding(tgt_in)
        h, _ = self.decoder(self.dropout(emb), enc.init)
        return self.attend(h, emb, enc, ed)

    def decoder_step(self, carry, prev_token: torch.Tensor, enc: EncoderOutput, ed: EncodedDictionary):
        """One step for a batch of partial hypotheses; ``carry`` is the LSTM (h, c)."""
        emb = self.embedding(prev_token).unsqueeze(1)  # (B, 1, d)
        h, carry = self.decoder(self.dropout(emb), carry)
        return carry, self.attend(h, emb, enc, ed)
