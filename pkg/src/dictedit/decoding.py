"""Greedy and beam-search generation.

Both searches run against a *step function*::

    step(state, prev_tokens) -> (log_probs[n, V], new_state, infos)

plus a ``reorder(state, rows)`` callable, so they work for the editing network
and for hand-built toy models alike. Scores are raw summed log-probabilities
(no length normalization). PAD and BOS are never generated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
import torch

from .encoder import DictionaryIds, EncodedDictionary
from .model import EditingNetwork, EncoderOutput
from .vocab import BOS, EOS, PAD

StepFn = Callable[[Any, torch.Tensor], tuple[torch.Tensor, Any, Sequence[dict] | None]]
ReorderFn = Callable[[Any, list[int]], Any]


@dataclass
class Hypothesis:
    tokens: list[int] = field(default_factory=list)
    log_prob: float = 0.0
    finished: bool = False
    trace: list[dict] = field(default_factory=list)

    @property
    def output(self) -> list[int]:
        """Emitted tokens without the closing EOS."""
        if self.tokens and self.tokens[-1] == EOS:
            return self.tokens[:-1]
        return list(self.tokens)


def default_max_len(src_len: int, cap: int) -> int:
    return min(2 * src_len + 5, cap)


def _masked(log_probs: torch.Tensor, banned: Sequence[int]) -> np.ndarray:
    lp = log_probs.detach().to(torch.float64).cpu().numpy().copy()
    if banned:
        lp[:, list(banned)] = -np.inf
    return lp


def _record(infos, row, step, token):
    rec = {"step": step, "token": int(token)}
    if infos is not None:
        rec.update(infos[row])
    return rec


def greedy_search(step: StepFn, state, max_len: int, bos: int = BOS, eos: int = EOS,
                  banned: Sequence[int] = (PAD, BOS)) -> Hypothesis:
    hyp = Hypothesis()
    prev = torch.tensor([bos])
    for t in range(max_len):
        log_probs, state, infos = step(state, prev)
        lp = _masked(log_probs, banned)[0]
        token = int(np.argmax(lp))  # first maximum, i.e. lowest id on ties
        hyp.tokens.append(token)
        hyp.log_prob += float(lp[token])
        hyp.trace.append(_record(infos, 0, t, token))
        if token == eos:
            break
        prev = torch.tensor([token])
    hyp.finished = True
    return hyp


def beam_search(step: StepFn, state, reorder: ReorderFn, beam: int, max_len: int,
                bos: int = BOS, eos: int = EOS, banned: Sequence[int] = (PAD, BOS)) -> list[Hypothesis]:
    """Best-first search keeping ``beam`` live hypotheses per step.

    Hypotheses ending in EOS (or reaching ``max_len``) are set aside; the
    result is the best ``beam`` of them by total log-probability. Ties among
    candidates go to the lower token id, then to the earlier parent.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    live = [Hypothesis()]
    finished: list[Hypothesis] = []
    prev = torch.tensor([bos])
    for t in range(max_len):
        log_probs, state, infos = step(state, prev)
        lp = _masked(log_probs, banned)
        n, V = lp.shape
        totals = np.array([h.log_prob for h in live])[:, None] + lp
        parents, tokens = np.divmod(np.arange(n * V), V)
        flat = totals.ravel()
        ok = np.isfinite(flat)
        order = np.lexsort((parents[ok], tokens[ok], -flat[ok]))[:beam]
        chosen = np.flatnonzero(ok)[order]

        next_live, rows = [], []
        for c in chosen:
            r, tok = int(parents[c]), int(tokens[c])
            parent = live[r]
            hyp = Hypothesis(parent.tokens + [tok], float(flat[c]), False,
                             parent.trace + [_record(infos, r, t, tok)])
            if tok == eos or t == max_len - 1:
                hyp.finished = True
                finished.append(hyp)
            else:
                next_live.append(hyp)
                rows.append(r)
        if not next_live:
            break
        # scores only decrease, so live hypotheses cannot overtake a full finished set
        if len(finished) >= beam:
            worst_kept = sorted(h.log_prob for h in finished)[-beam]
            if max(h.log_prob for h in next_live) < worst_kept:
                break
        live = next_live
        state = reorder(state, rows)
        prev = torch.tensor([h.tokens[-1] for h in live])
    finished.sort(key=lambda h: -h.log_prob)  # stable: insertion order breaks ties
    return finished[:beam]


class NetworkStepper:
    """Adapts an :class:`EditingNetwork` to the step-function interface."""

    def __init__(self, model: EditingNetwork, src_ids: Sequence[int], dict_ids: DictionaryIds,
                 trace: bool = True):
        self.model = model
        self.trace = trace
        src = torch.tensor([list(src_ids)], dtype=torch.long)
        with torch.no_grad():
            self.enc = model.encode_source(src, torch.tensor([len(src_ids)]))
            self.ed = model.encode_dictionary(dict_ids.o_ids[None], dict_ids.p_ids[None],
                                              dict_ids.mask[None])

    def initial_state(self):
        return (self.enc.init, self.enc, self.ed)

    def step(self, state, prev):
        carry, enc, ed = state
        with torch.no_grad():
            carry, out = self.model.decoder_step(carry, prev, enc, ed)
        infos = None
        if self.trace:
            a = out.delete_weights[:, 0].tolist()
            a_prime = out.insert_weights[:, 0].tolist()
            src = out.source_weights[:, 0].tolist()
            infos = [{"a": a[i], "a_prime": a_prime[i], "src": src[i]} for i in range(len(a))]
        return out.log_probs[:, 0], (carry, enc, ed), infos

    @staticmethod
    def reorder(state, rows: list[int]):
        (h, c), enc, ed = state
        idx = torch.tensor(rows, dtype=torch.long)
        # encoder/dictionary tensors are shared by all rows; expand lazily
        enc_rows = EncoderOutput(enc.states[:1].expand(len(rows), -1, -1),
                                 enc.mask[:1].expand(len(rows), -1), enc.init)
        ed_rows = EncodedDictionary(ed.o_vectors[:1].expand(len(rows), -1, -1),
                                    ed.p_vectors[:1].expand(len(rows), -1, -1),
                                    ed.mask[:1].expand(len(rows), -1))
        return (h[:, idx], c[:, idx]), enc_rows, ed_rows


def greedy_decode(model: EditingNetwork, src_ids: Sequence[int], dict_ids: DictionaryIds,
                  max_len: int | None = None, trace: bool = True) -> Hypothesis:
    model.eval()
    if max_len is None:
        max_len = default_max_len(len(src_ids), model.cfg.max_tgt_len)
    stepper = NetworkStepper(model, src_ids, dict_ids, trace)
    return greedy_search(stepper.step, stepper.initial_state(), max_len)


def beam_decode(model: EditingNetwork, src_ids: Sequence[int], dict_ids: DictionaryIds,
                beam: int = 10, max_len: int | None = None, trace: bool = True) -> list[Hypothesis]:
    model.eval()
    if max_len is None:
        max_len = default_max_len(len(src_ids), model.cfg.max_tgt_len)
    stepper = NetworkStepper(model, src_ids, dict_ids, trace)
    return beam_search(stepper.step, stepper.initial_state(), stepper.reorder, beam, max_len)


def decode(model: EditingNetwork, src_ids, dict_ids, beam: int = 1, max_len: int | None = None,
           trace: bool = True) -> Hypothesis:
    if beam == 1:
        return greedy_decode(model, src_ids, dict_ids, max_len, trace)
    return beam_decode(model, src_ids, dict_ids, beam, max_len, trace)[0]
