from __future__ import annotations

import copy
import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import torch

from .config import TrainingConfig
from .data import Pair
from .encoder import DictionaryIds, dictionary_ids
from .model import EditingNetwork
from .retrieval import InvertedIndex, retrieve
from .vocab import BOS, EOS, PAD, Vocabulary

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "dictedit.checkpoint"
CHECKPOINT_VERSION = 1


class NonFiniteLoss(RuntimeError):
    pass


@dataclass
class TrainingExample:
    src: list[int]
    tgt: list[int]  # without BOS/EOS; the collator wraps them
    dictionary: DictionaryIds
    src_tokens: tuple[str, ...] = ()


@dataclass
class Batch:
    src: torch.Tensor
    src_len: torch.Tensor
    tgt_in: torch.Tensor
    tgt_out: torch.Tensor
    o_ids: torch.Tensor
    p_ids: torch.Tensor
    dict_mask: torch.Tensor

    def __len__(self) -> int:
        return self.src.shape[0]


def make_examples(pairs: Iterable[Pair], vocab: Vocabulary, index: InvertedIndex | None,
                  cfg: TrainingConfig, max_phrase_len: int = 7) -> list[TrainingExample]:
    """Encode pairs and attach the dictionary retrieved for each source sentence."""
    from .retrieval import RetrievedDictionary

    out = []
    for src, tgt in pairs:
        src = tuple(src[: cfg.max_src_len])
        tgt = tuple(tgt[: cfg.max_tgt_len])
        if not src:
            continue
        ret = retrieve(index, src, cfg.M) if index is not None else RetrievedDictionary([], src)
        out.append(TrainingExample(vocab.encode(src), vocab.encode(tgt),
                                   dictionary_ids(ret, vocab, cfg.M, max_phrase_len), src))
    return out


def collate(examples: Sequence[TrainingExample]) -> Batch:
    B = len(examples)
    S = max(len(e.src) for e in examples)
    T = max(len(e.tgt) for e in examples) + 1
    src = torch.full((B, S), PAD, dtype=torch.long)
    tgt_in = torch.full((B, T), PAD, dtype=torch.long)
    tgt_out = torch.full((B, T), PAD, dtype=torch.long)
    for i, e in enumerate(examples):
        src[i, : len(e.src)] = torch.tensor(e.src)
        tgt_in[i, : len(e.tgt) + 1] = torch.tensor([BOS] + e.tgt)
        tgt_out[i, : len(e.tgt) + 1] = torch.tensor(e.tgt + [EOS])
    return Batch(
        src,
        torch.tensor([len(e.src) for e in examples]),
        tgt_in,
        tgt_out,
        torch.stack([e.dictionary.o_ids for e in examples]),
        torch.stack([e.dictionary.p_ids for e in examples]),
        torch.stack([e.dictionary.mask for e in examples]),
    )


def run_model(model: EditingNetwork, batch: Batch):
    return model(batch.src, batch.src_len, batch.tgt_in, batch.o_ids, batch.p_ids, batch.dict_mask)


def nll_loss(log_probs: torch.Tensor, targets: torch.Tensor, pad_mask: torch.Tensor | None = None) -> torch.Tensor:
    """Per-sequence negative log-likelihood, summed over tokens and averaged over the batch."""
    if pad_mask is None:
        pad_mask = targets != PAD
    picked = log_probs.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    return -(picked * pad_mask.to(picked.dtype)).sum() / targets.shape[0]


def token_accuracy_counts(log_probs: torch.Tensor, targets: torch.Tensor) -> tuple[int, int]:
    mask = targets != PAD
    hits = (log_probs.argmax(-1) == targets) & mask
    return int(hits.sum()), int(mask.sum())


def evaluate_loss(model: EditingNetwork, examples: Sequence[TrainingExample], batch_size: int) -> tuple[float, float]:
    """Mean per-sequence NLL and teacher-forced token accuracy, dropout off."""
    model.eval()
    total, hits, count = 0.0, 0, 0
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            batch = collate(examples[start:start + batch_size])
            out = run_model(model, batch)
            total += float(nll_loss(out.log_probs, batch.tgt_out)) * len(batch)
            h, c = token_accuracy_counts(out.log_probs, batch.tgt_out)
            hits += h
            count += c
    return total / max(len(examples), 1), hits / max(count, 1)


@dataclass
class TrainResult:
    model: EditingNetwork
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_valid_loss: float = math.inf


def train(cfg: TrainingConfig, vocab: Vocabulary, train_set: Sequence[TrainingExample],
          valid_set: Sequence[TrainingExample], model: EditingNetwork | None = None,
          log_path: str | Path | None = None, checkpoint_path: str | Path | None = None,
          on_epoch: Callable[[dict], bool | None] | None = None) -> TrainResult:
    """Mini-batch Adam on the summed-NLL objective with early stopping on validation loss.

    ``on_epoch`` receives each validation record; returning True stops training.
    The returned model carries the best-validation weights.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    if model is None:
        model = EditingNetwork(len(vocab), cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate,
                           betas=(cfg.beta1, cfg.beta2), eps=cfg.adam_eps)
    result = TrainResult(model)
    best_state = copy.deepcopy(model.state_dict())
    stale = 0
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    started = time.perf_counter()

    def log(record):
        record["wall_time"] = round(time.perf_counter() - started, 3) if cfg.log_wall_time else None
        result.history.append(record)
        if log_fh:
            log_fh.write(json.dumps(record) + "\n")
            log_fh.flush()

    try:
        for epoch in range(1, cfg.max_epochs + 1):
            model.train()
            order = rng.permutation(len(train_set))
            total, hits, count = 0.0, 0, 0
            for start in range(0, len(order), cfg.batch_size):
                ids = order[start:start + cfg.batch_size]
                batch = collate([train_set[i] for i in ids])
                out = run_model(model, batch)
                loss = nll_loss(out.log_probs, batch.tgt_out)
                if not torch.isfinite(loss):
                    norm = math.sqrt(sum(float(p.detach().pow(2).sum()) for p in model.parameters()))
                    raise NonFiniteLoss(f"epoch {epoch}: loss {float(loss.detach())} on examples "
                                        f"{ids.tolist()}; parameter norm {norm:.4g}")
                opt.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.clip_norm)
                opt.step()
                total += float(loss.detach()) * len(batch)
                h, c = token_accuracy_counts(out.log_probs.detach(), batch.tgt_out)
                hits += h
                count += c
            log({"epoch": epoch, "split": "train", "loss": total / len(train_set),
                 "token_accuracy": hits / max(count, 1)})
            v_loss, v_acc = evaluate_loss(model, valid_set, cfg.batch_size)
            record = {"epoch": epoch, "split": "valid", "loss": v_loss, "token_accuracy": v_acc}
            log(record)
            if v_loss < result.best_valid_loss:
                result.best_valid_loss, result.best_epoch, stale = v_loss, epoch, 0
                best_state = copy.deepcopy(model.state_dict())
                if checkpoint_path:
                    save_checkpoint(model, vocab, checkpoint_path)
            else:
                stale += 1
            if on_epoch is not None and on_epoch(record):
                break
            if stale >= cfg.patience:
                logger.info("early stop after epoch %d (best %d)", epoch, result.best_epoch)
                break
    finally:
        if log_fh:
            log_fh.close()
    model.load_state_dict(best_state)
    model.eval()
    return result


def save_checkpoint(model: EditingNetwork, vocab: Vocabulary, path: str | Path) -> None:
    """Single ``.npz`` container: every parameter tensor plus a JSON metadata blob."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.cfg.to_dict(),
        "vocab": vocab.itos,
        "min_count": vocab.min_count,
        "dtype": str(next(model.parameters()).dtype).replace("torch.", ""),
    }
    arrays = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    buf = io.BytesIO()
    np.savez(buf, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> tuple[EditingNetwork, Vocabulary]:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} checkpoint")
        state = {k: torch.from_numpy(data[k].copy()) for k in data.files if k != "__meta__"}
    cfg = TrainingConfig(**meta["config"])
    vocab = Vocabulary(meta["vocab"], meta["min_count"])
    model = EditingNetwork(len(vocab), cfg)
    if meta["dtype"] == "float64":
        model.double()
    for name, param in model.state_dict().items():
        if name not in state or tuple(state[name].shape) != tuple(param.shape):
            raise ValueError(f"{path}: parameter {name} missing or has inconsistent shape")
    model.load_state_dict(state)
    model.eval()
    return model, vocab


# parameter-name prefix -> reported group
PARAMETER_GROUPS = [
    ("embedding.", "Phi"),
    ("encoder.", "encoder_lstm"),
    ("bridge_", "bridge"),
    ("decoder.", "decoder_lstm"),
    ("source_attention.", "source_attention"),
    ("delete_attention.W", "W_alpha"),
    ("delete_attention.v", "v"),
    ("insert_attention.W", "W'_alpha"),
    ("insert_attention.v", "v'"),
    ("W_c.", "W_c"),
    ("output.weight", "W_y"),
    ("output.bias", "b_y"),
]


def parameter_group(name: str) -> str:
    for prefix, group in PARAMETER_GROUPS:
        if name.startswith(prefix):
            return group
    return name


@dataclass
class GradientReport:
    max_rel_error: dict[str, float]
    max_abs_error: dict[str, float]
    checked: dict[str, int]

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values())


def gradient_check(model: EditingNetwork, batch: Batch, eps: float = 1e-5,
                   floor: float = 1e-5, groups: Iterable[str] | None = None) -> GradientReport:
    """Compare autograd gradients of the NLL with central finite differences.

    Needs a float64 model; dropout is disabled for the duration. The error of
    one entry is |a - n| / max(|a|, |n|, floor). Central differences at
    eps=1e-5 carry ~1e-10 of roundoff, so below ``floor`` the ratio degrades
    into a scaled absolute error instead of amplifying that noise.
    ``groups`` restricts the sweep to the named parameter groups.
    """
    if next(model.parameters()).dtype != torch.float64:
        raise TypeError("gradient_check needs a float64 model")
    if groups is not None:
        groups = set(groups)
    was_training = model.training
    model.eval()

    def loss_fn():
        out = run_model(model, batch)
        return nll_loss(out.log_probs, batch.tgt_out)

    model.zero_grad()
    loss_fn().backward()
    # parameters outside the graph (e.g. the ablated dictionary path) have no grad
    analytic = {n: torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
                for n, p in model.named_parameters()}

    rel: dict[str, float] = {}
    absolute: dict[str, float] = {}
    checked: dict[str, int] = {}
    with torch.no_grad():
        for name, p in model.named_parameters():
            group = parameter_group(name)
            if groups is not None and group not in groups:
                continue
            flat = p.view(-1)
            g = analytic[name].view(-1)
            for i in range(flat.numel()):
                orig = float(flat[i])
                flat[i] = orig + eps
                plus = float(loss_fn())
                flat[i] = orig - eps
                minus = float(loss_fn())
                flat[i] = orig
                numeric = (plus - minus) / (2 * eps)
                a = float(g[i])
                diff = abs(a - numeric)
                err = diff / max(abs(a), abs(numeric), floor)
                rel[group] = max(rel.get(group, 0.0), err)
                absolute[group] = max(absolute.get(group, 0.0), diff)
                checked[group] = checked.get(group, 0) + 1
    model.train(was_training)
    return GradientReport(rel, absolute, checked)
