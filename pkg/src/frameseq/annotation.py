"""Simulated iterative annotation: pre-annotate, batch by similarity, correct with gold, retrain, monitor."""

from __future__ import annotations

import csv
import json
import warnings
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .corpus import Corpus, Document
from .evaluation import SUBTASKS, SubtaskScore, score_sentence
from .pipeline import CRF, parse_corpus, parse_sentence, train_parser
from .splitter import kfold

CONTEXT_RADIUS = 3
REPORT_FORMAT = "loop-report/1"


class LoopWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Example:
    """One LU occurrence of the pool."""

    doc_id: str
    sentence: int
    position: int
    lemma: str
    context: tuple[str, ...]
    deprel: str
    governor_pos: str

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.doc_id, self.sentence, self.position)


def pool_examples(corpus: Corpus, radius: int = CONTEXT_RADIUS) -> list[Example]:
    out = []
    for (doc_id, si), sent in corpus.sentences():
        for tok in sent.tokens:
            if tok.lemma not in corpus.lu_lexicon:
                continue
            lo, hi = max(1, tok.index - radius), min(len(sent), tok.index + radius)
            context = tuple(sent.token(j).lemma for j in range(lo, hi + 1) if j != tok.index)
            gov = "ROOT" if tok.head == 0 else sent.token(tok.head).pos
            out.append(Example(doc_id, si, tok.index, tok.lemma, context, tok.deprel, gov))
    return out


def similarity(a: Example, b: Example) -> float:
    """Half multiset Jaccard of context lemmas, half trigger deprel + governor POS agreement."""
    if a.lemma != b.lemma:
        raise ValueError(f"similarity is defined within one LU, got {a.lemma!r} and {b.lemma!r}")
    ca, cb = Counter(a.context), Counter(b.context)
    union = sum((ca | cb).values())
    lexical = 1.0 if union == 0 else sum((ca & cb).values()) / union
    syntactic = float(a.deprel == b.deprel and a.governor_pos == b.governor_pos)
    return 0.5 * lexical + 0.5 * syntactic


@dataclass
class Batch:
    lemma: str
    examples: list[Example]
    score: float
    iteration: int | None = None


def select_batches(pool: Sequence[Example], size: int = 20) -> list[Batch]:
    """Greedy per-LU clustering: seed = first unassigned example, plus its most similar peers."""
    if size < 1:
        raise ValueError("batch size must be positive")
    by_lemma: dict[str, list[int]] = {}
    for i, ex in enumerate(pool):
        by_lemma.setdefault(ex.lemma, []).append(i)
    batches = []
    for lemma in sorted(by_lemma):
        remaining = list(by_lemma[lemma])
        while remaining:
            seed = remaining.pop(0)
            ranked = sorted(remaining, key=lambda j: (-similarity(pool[seed], pool[j]), j))
            members = ranked[:size - 1]
            sims = [similarity(pool[seed], pool[j]) for j in members]
            taken = set(members)
            remaining = [j for j in remaining if j not in taken]
            batches.append(Batch(lemma, [pool[seed]] + [pool[j] for j in members],
                                 (1.0 + sum(sims)) / (1 + len(sims))))
    return batches


def interleave(batches: Sequence[Batch]) -> list[Batch]:
    """Round-robin over lemmas so every LU progresses at the same pace."""
    queues: dict[str, list[Batch]] = {}
    for b in batches:
        queues.setdefault(b.lemma, []).append(b)
    out = []
    depth = 0
    while len(out) < len(batches):
        for lemma in sorted(queues):
            if depth < len(queues[lemma]):
                out.append(queues[lemma][depth])
        depth += 1
    return out


def annotated_corpus(gold: Corpus, done: set[tuple[str, int, int]], examples: Sequence[Example]) -> Corpus:
    """Gold restricted to annotated occurrences; the others are marked pending.

    Documents are kept when at least one of their occurrences is annotated, or
    when they contain no occurrence at all.
    """
    by_doc: dict[str, set] = {}
    for ex in examples:
        by_doc.setdefault(ex.doc_id, set()).add(ex.key)
    docs = []
    for doc in gold.documents:
        keys = by_doc.get(doc.id, set())
        if keys and not keys & done:
            continue
        sents = []
        for si, sent in enumerate(doc.sentences):
            pending = frozenset(p for (_, s, p) in keys if s == si and (doc.id, si, p) not in done)
            frames = tuple(f for f in sent.frames if f.trigger not in pending)
            sents.append(type(sent)(sent.tokens, frames, sent.source_id, pending))
        docs.append(Document(doc.id, doc.source, tuple(sents)))
    return Corpus(tuple(docs), gold.lu_lexicon)


def kfold_scores(corpus: Corpus, k: int = 5, parser: str = CRF, hyper: dict | None = None,
                 seed: int | None = None) -> dict[str, SubtaskScore]:
    """Micro-averaged subtask counts pooled over k document-atomic folds."""
    totals = {t: SubtaskScore(0, 0, 0) for t in SUBTASKS}
    for train, held in kfold(corpus, k, seed):
        model = train_parser(parser, train, hyper)
        result = parse_corpus(model, held)
        for key, sent in held.sentences():
            gold = [f for f in sent.frames if f.trigger not in sent.pending]
            one = score_sentence(gold, result.predictions[key])
            totals = {t: totals[t] + one[t] for t in SUBTASKS}
    return totals


@dataclass
class LoopConfig:
    iterations: int = 5
    batch_size: int = 20
    batches_per_iteration: int = 10
    k: int = 5
    parser: str = CRF
    hyper: dict = field(default_factory=dict)
    seed: int = 0
    threshold: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "LoopConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class IterationRecord:
    iteration: int
    annotated: int
    batches: int
    lemmas: dict[str, int]
    preannotation_accuracy: float
    kfold: dict[str, dict] | None
    kfold_skipped: bool = False

    def f1(self, subtask: str) -> float | None:
        return None if self.kfold is None else self.kfold[subtask]["f1"]


@dataclass
class LoopReport:
    config: dict
    pool_size: int
    iterations: list[IterationRecord] = field(default_factory=list)

    def trajectory(self, subtask: str = "RC") -> list[float | None]:
        return [r.f1(subtask) for r in self.iterations]

    def as_dict(self) -> dict:
        return {"format": REPORT_FORMAT, "config": self.config, "pool_size": self.pool_size,
                "iterations": [asdict(r) for r in self.iterations]}

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.as_dict(), fh, indent=2)

    def write_csv(self, path) -> None:
        fields = ["iteration", "annotated", "preannotation_accuracy"] + [f"{t}_F1" for t in SUBTASKS]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            for r in self.iterations:
                row = {"iteration": r.iteration, "annotated": r.annotated,
                       "preannotation_accuracy": r.preannotation_accuracy}
                for t in SUBTASKS:
                    row[f"{t}_F1"] = "" if r.kfold is None else r.kfold[t]["f1"]
                w.writerow(row)


def _gold_decision(ex: Example, sentences) -> str | None:
    sent = sentences[(ex.doc_id, ex.sentence)]
    for f in sent.annotated_frames:
        if f.trigger == ex.position:
            return f.frame
    return None


def run_loop(pool: Corpus, config: LoopConfig | None = None) -> LoopReport:
    """Simulate the annotation campaign; the gold annotations of ``pool`` act as the annotator."""
    config = config or LoopConfig()
    examples = pool_examples(pool)
    report = LoopReport(asdict(config), len(examples))
    if config.iterations <= 0 or not examples:
        return report
    queue = interleave(select_batches(examples, config.batch_size))
    sentences = dict(pool.sentences())
    done: set = set()
    model = None
    for it in range(1, config.iterations + 1):
        take, queue = queue[:config.batches_per_iteration], queue[config.batches_per_iteration:]
        if not take:
            break
        # pre-annotation: the first round has no model, so everything starts as "no frame"
        agree = total = 0
        for batch in take:
            batch.iteration = it
            for ex in batch.examples:
                guess = None
                if model is not None:
                    sent = sentences[(ex.doc_id, ex.sentence)]
                    for f in parse_sentence(model, sent, config.threshold):
                        if f.trigger == ex.position:
                            guess = f.frame
                agree += guess == _gold_decision(ex, sentences)
                total += 1
                done.add(ex.key)
        current = annotated_corpus(pool, done, examples)
        model = train_parser(config.parser, current, config.hyper)
        scores, skipped = None, False
        if len(current.documents) >= config.k:
            totals = kfold_scores(current, config.k, config.parser, config.hyper)
            scores = {t: s.as_dict() for t, s in totals.items()}
        else:
            skipped = True
            warnings.warn(f"iteration {it}: {len(current.documents)} annotated documents, k-fold with "
                          f"k={config.k} skipped", LoopWarning)
        lemmas = Counter(b.lemma for b in take)
        report.iterations.append(IterationRecord(it, len(done), len(take), dict(sorted(lemmas.items())),
                                                 agree / total if total else 0.0, scores, skipped))
    return report
