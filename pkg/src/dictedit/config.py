"""Training configuration and its flat ``key=value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path


@dataclass
class TrainingConfig:
    d_emb: int = 300
    d_hidden: int = 512
    d_attn: int = 512
    num_layers: int = 2
    dropout: float = 0.5
    batch_size: int = 64
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    M: int = 10
    max_epochs: int = 20
    patience: int = 5
    clip_norm: float = 5.0
    min_count: int = 10
    max_src_len: int = 30
    max_tgt_len: int = 30
    use_dictionary: bool = True
    log_wall_time: bool = False
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            if f.type in ("int", "float") and f.name not in ("seed", "dropout", "min_count"):
                if getattr(self, f.name) <= 0:
                    raise ValueError(f"{f.name} must be positive, got {getattr(self, f.name)}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.d_hidden % 2:
            raise ValueError("d_hidden must be even (split across encoder directions)")

    def replace(self, **changes) -> "TrainingConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(kind: str, raw: str):
    if kind == "bool":
        low = raw.strip().lower()
        if low in {"1", "true", "yes", "on"}:
            return True
        if low in {"0", "false", "no", "off"}:
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return {"int": int, "float": float}[kind](raw)


def parse_overrides(items: dict[str, str]) -> dict:
    types = {f.name: f.type for f in fields(TrainingConfig)}
    out = {}
    for key, raw in items.items():
        if key not in types:
            raise KeyError(f"unknown config key {key!r}")
        out[key] = _coerce(types[key], raw)
    return out


def load_config(path: str | Path, **overrides) -> TrainingConfig:
    """Read ``key=value`` lines (``#`` comments allowed); keyword overrides win."""
    raw = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        raw[key.strip()] = value.strip()
    values = parse_overrides(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainingConfig(**values)


def dump_config(cfg: TrainingConfig) -> str:
    return "".join(f"{k}={v}\n" for k, v in cfg.to_dict().items())
