"""Frame semantic parsing cast as sequence tagging: CRF bank and multi-task BiLSTM."""

from .corpus import (Corpus, Document, FrameElement, FrameInstance, Sentence, Token, corpus_stats,
                     decode_bio, encode_bio, read_corpus, write_corpus)
from .evaluation import eer_operating_point, pr_curve, score
from .pipeline import BILSTM, CRF, parse_corpus, train_parser
from .splitter import kfold, plan_split, split
from .synthetic import GeneratorConfig, generate

__version__ = "0.1.0"

__all__ = [
    "BILSTM", "CRF", "Corpus", "Document", "FrameElement", "FrameInstance", "GeneratorConfig",
    "Sentence", "Token", "corpus_stats", "decode_bio", "eer_operating_point", "encode_bio",
    "generate", "kfold", "parse_corpus", "plan_split", "pr_curve", "read_corpus", "score",
    "split", "train_parser", "write_corpus",
]
