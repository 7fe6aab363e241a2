"""Train either parser family and turn its raw columns into frame instances."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

from .coherence import REPAIR, filter_columns
from .corpus import Corpus, Document, FrameInstance, Sentence
from .crf import CrfHyper, ModelBank, parse_multi, train_multi
from .neural import NeuralTagger, TaggerHyper, predict, train_tagger

CRF = "crf"
BILSTM = "bilstm"


def train_parser(kind: str, train: Corpus, hyper: Mapping | None = None, jobs: int = 1,
                 pretrained=None):
    hyper = dict(hyper or {})
    if kind == CRF:
        return train_multi(train, CrfHyper.from_dict(hyper), jobs=jobs)
    if kind == BILSTM:
        trainable = _without_pending(train)
        return train_tagger(trainable, TaggerHyper.from_dict(hyper), pretrained)
    raise ValueError(f"unknown parser {kind!r} (expected {CRF} or {BILSTM})")


def _without_pending(corpus: Corpus) -> Corpus:
    """The tagger labels whole sentences, so partially annotated ones are left out."""
    docs = []
    for doc in corpus.documents:
        sents = tuple(s for s in doc.sentences if not s.pending)
        if sents:
            docs.append(Document(doc.id, doc.source, sents))
    return Corpus(tuple(docs), corpus.lu_lexicon)


def raw_columns(model, sentence: Sentence, threshold: float = 0.0, coverage: Counter | None = None):
    if isinstance(model, ModelBank):
        return parse_multi(model, sentence, threshold, coverage)
    if isinstance(model, NeuralTagger):
        return predict(model, sentence, threshold)
    raise TypeError(f"not a parser model: {type(model).__name__}")


def parse_sentence(model, sentence: Sentence, threshold: float = 0.0, mode: str = REPAIR,
                   coverage: Counter | None = None) -> list[FrameInstance]:
    return filter_columns(sentence, raw_columns(model, sentence, threshold, coverage), mode)


@dataclass
class ParseResult:
    predictions: dict[tuple[str, int], list[FrameInstance]]
    coverage: Counter = field(default_factory=Counter)

    def as_corpus(self, source: Corpus) -> Corpus:
        docs = []
        for doc in source.documents:
            sents = tuple(s.with_frames(self.predictions.get((doc.id, i), ()))
                          for i, s in enumerate(doc.sentences))
            docs.append(Document(doc.id, doc.source, sents))
        return Corpus(tuple(docs), source.lu_lexicon)


def parse_corpus(model, corpus: Corpus, threshold: float = 0.0, mode: str = REPAIR) -> ParseResult:
    """Parse every sentence; predictions at pending triggers are dropped."""
    coverage: Counter = Counter()
    out = {}
    for key, sent in corpus.sentences():
        insts = parse_sentence(model, sent, threshold, mode, coverage)
        if sent.pending:
            insts = [f for f in insts if f.trigger not in sent.pending]
        out[key] = insts
    return ParseResult(out, coverage)
