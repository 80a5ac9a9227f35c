"""Bag-of-embeddings encoding of retrieved paraphrase pairs.

Each phrase becomes the sum of its token embeddings. A retrieved dictionary
becomes two ``M x d_emb`` matrices (source side, target side) plus a mask;
rows past the retrieved pairs are zero and masked out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch

from .retrieval import RetrievedDictionary
from .vocab import PAD, Vocabulary


@dataclass
class EncodedDictionary:
    o_vectors: torch.Tensor  # (..., M, d_emb)
    p_vectors: torch.Tensor  # (..., M, d_emb)
    mask: torch.Tensor  # (..., M) bool

    @property
    def size(self) -> int:
        return self.mask.shape[-1]


@dataclass
class DictionaryIds:
    """Padded token ids of retrieved phrases, shape (M, max_phrase_len)."""

    o_ids: torch.Tensor
    p_ids: torch.Tensor
    mask: torch.Tensor


def encode_phrase(token_ids: Sequence[int] | torch.Tensor, embeddings: torch.Tensor) -> torch.Tensor:
    ids = torch.as_tensor(token_ids, dtype=torch.long)
    if ids.numel() == 0:
        raise ValueError("phrase must contain at least one token")
    return embeddings[ids].sum(0)


def dictionary_ids(ret: RetrievedDictionary, vocab: Vocabulary, M: int,
                   max_phrase_len: int = 7) -> DictionaryIds:
    """Map a retrieved dictionary to padded id tensors; unknown tokens become UNK."""
    if len(ret.pairs) > M:
        raise ValueError(f"{len(ret.pairs)} retrieved pairs exceed M={M}")
    o_ids = torch.full((M, max_phrase_len), PAD, dtype=torch.long)
    p_ids = torch.full((M, max_phrase_len), PAD, dtype=torch.long)
    mask = torch.zeros(M, dtype=torch.bool)
    for i, pair in enumerate(ret.pairs):
        o = vocab.encode(pair.entry.source_tokens)[:max_phrase_len]
        p = vocab.encode(pair.entry.target_tokens)[:max_phrase_len]
        o_ids[i, : len(o)] = torch.tensor(o)
        p_ids[i, : len(p)] = torch.tensor(p)
        mask[i] = True
    return DictionaryIds(o_ids, p_ids, mask)


def encode_ids(o_ids: torch.Tensor, p_ids: torch.Tensor, mask: torch.Tensor,
               embeddings: torch.Tensor) -> EncodedDictionary:
    """Sum embeddings over the phrase axis, skipping PAD positions."""
    o_keep = (o_ids != PAD).unsqueeze(-1).to(embeddings.dtype)
    p_keep = (p_ids != PAD).unsqueeze(-1).to(embeddings.dtype)
    o_vec = (embeddings[o_ids] * o_keep).sum(-2)
    p_vec = (embeddings[p_ids] * p_keep).sum(-2)
    row = mask.unsqueeze(-1).to(embeddings.dtype)
    return EncodedDictionary(o_vec * row, p_vec * row, mask)


def encode_retrieved(ret: RetrievedDictionary, embeddings: torch.Tensor, M: int,
                     vocab: Vocabulary) -> EncodedDictionary:
    ids = dictionary_ids(ret, vocab, M)
    return encode_ids(ids.o_ids, ids.p_ids, ids.mask, embeddings)
