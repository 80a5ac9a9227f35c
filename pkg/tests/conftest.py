import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from dictedit.config import TrainingConfig  # noqa: E402
from dictedit.model import EditingNetwork  # noqa: E402
from dictedit.training import Batch  # noqa: E402

TINY = dict(d_emb=8, d_hidden=12, d_attn=12, M=3, dropout=0.0, num_layers=2)


def tiny_model(vocab_size=20, seed=0, scale=0.5, dtype=torch.float64, **overrides):
    torch.manual_seed(seed)
    cfg = TrainingConfig(**{**TINY, **overrides})
    model = EditingNetwork(vocab_size, cfg).to(dtype)
    with torch.no_grad():
        for p in model.parameters():
            p.uniform_(-scale, scale)
        model.embedding.weight[0].zero_()
    model.eval()
    return model


def random_batch(vocab_size=20, B=2, S=5, T=4, M=3, L=3, seed=1, full_mask=False):
    g = torch.Generator().manual_seed(seed)
    src_len = torch.randint(1, S + 1, (B,), generator=g)
    src_len[0] = S
    src = torch.randint(4, vocab_size, (B, S), generator=g)
    for i in range(B):
        src[i, src_len[i]:] = 0
    tgt = torch.randint(4, vocab_size, (B, T), generator=g)
    tgt_in = torch.cat([torch.full((B, 1), 2), tgt[:, :-1]], dim=1)
    tgt_out = tgt.clone()
    tgt_out[-1, -1] = 0  # one padded target position
    o = torch.randint(4, vocab_size, (B, M, L), generator=g)
    p = torch.randint(4, vocab_size, (B, M, L), generator=g)
    o[:, :, -1] = 0
    mask = torch.ones(B, M, dtype=torch.bool) if full_mask else torch.rand(B, M, generator=g) > 0.3
    mask[0, 0] = True
    o[~mask] = 0
    p[~mask] = 0
    return Batch(src, src_len, tgt_in, tgt_out, o, p, mask)


@pytest.fixture
def tiny():
    return tiny_model()


@pytest.fixture
def batch():
    return random_batch()


# acceptance criteria report: one line per criterion in the terminal summary
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_addoption(parser):
    parser.addoption("--quora", help="Quora duplicate-question file for the optional desk-scale run")
    parser.addoption("--ppdb", help="PPDB file for the optional desk-scale run")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{status:4}  {name}: {detail}")
