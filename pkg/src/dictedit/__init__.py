"""Dictionary-guided editing networks for paraphrase generation."""

__version__ = "0.1.0"

from .config import TrainingConfig
from .model import EditingNetwork
from .ppdb import ParaphraseDictionary, build_dictionary, read_ppdb
from .retrieval import build_index, retrieve
from .vocab import Vocabulary, build_vocab

__all__ = [
    "EditingNetwork",
    "ParaphraseDictionary",
    "TrainingConfig",
    "Vocabulary",
    "build_dictionary",
    "build_index",
    "build_vocab",
    "read_ppdb",
    "retrieve",
]
