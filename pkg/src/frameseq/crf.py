"""Linear-chain CRF and the one-model-per-lexical-unit frame parser.

Scores are ``emission[t, y] = sum of weights[f, y] over active features f``
plus ``transition[y_prev, y]``.  Two structural masks apply everywhere
(training, inference and decoding):

* ``I:x`` may only follow ``B:x`` or ``I:x`` and never starts a sentence;
* when a trigger position is given, ``LU:*`` labels are only allowed there
  and the trigger itself may only be ``O`` or ``LU:*``.
"""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .coherence import ScoredColumn
from .corpus import OUTSIDE, Corpus, Sentence, encode_bio, parse_label
from .features import DEFAULT_MAX_PATH, DEFAULT_WINDOW, FeatureDictionary, sentence_crf_features

NEG_INF = -np.inf
BANK_FORMAT = "crf-bank/1"


class TrainingDataError(ValueError):
    pass


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - safe), axis=axis, keepdims=True)) + safe
    return np.squeeze(out, axis=axis)


def transition_mask(labels: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Additive (L, L) transition mask and (L,) start mask for B/I well-formedness."""
    n = len(labels)
    trans = np.zeros((n, n))
    start = np.zeros(n)
    parsed = []
    for text in labels:
        if text.startswith(("B:", "I:")):
            lab = parse_label(text)
            parsed.append((lab.kind, lab.frame, lab.role, lab.trigger))
        else:
            parsed.append(None)
    for j, pj in enumerate(parsed):
        if pj is None or pj[0] != "I":
            continue
        start[j] = NEG_INF
        for i, pi in enumerate(parsed):
            if pi is None or pi[1:] != pj[1:]:
                trans[i, j] = NEG_INF
    return trans, start


class CrfExample(NamedTuple):
    features: list[np.ndarray]   # active feature ids per token
    gold: np.ndarray | None      # label ids, or None for unlabeled input
    trigger: int | None = None   # 0-based trigger position
    name: str = ""


@dataclass
class CrfHyper:
    l2: float = 1e-3
    epochs: int = 30
    lr: float = 0.5
    decay: float = 0.1
    batch_size: int = 1
    seed: int = 0
    window: int = DEFAULT_WINDOW
    max_path: int = DEFAULT_MAX_PATH

    @classmethod
    def from_dict(cls, d: dict) -> "CrfHyper":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class CrfModel:
    labels: list[str]
    features: FeatureDictionary
    emission: np.ndarray
    transition: np.ndarray
    lemma: str | None = None
    l2: float = 1e-3
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        self.label_index = {l: i for i, l in enumerate(self.labels)}
        self.trans_mask, self.start_mask = transition_mask(self.labels)
        self.lu_ids = np.array([i for i, l in enumerate(self.labels) if l.startswith("LU:")], dtype=np.int64)
        self.outside_id = self.label_index.get(OUTSIDE)

    @classmethod
    def zeros(cls, labels: Sequence[str], features: FeatureDictionary, **kw) -> "CrfModel":
        L = len(labels)
        return cls(list(labels), features, np.zeros((len(features), L)), np.zeros((L, L)), **kw)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def example(self, token_features: Sequence[Iterable[str]], gold: Sequence[str] | None = None,
                trigger: int | None = None, name: str = "") -> CrfExample:
        """Vectorize string features (unknown ones dropped) and map gold labels to ids."""
        feats = [self.features.vectorize(f) for f in token_features]
        ids = None
        if gold is not None:
            if len(gold) != len(feats):
                raise TrainingDataError(f"{name or 'example'}: {len(gold)} labels for {len(feats)} tokens")
            try:
                ids = np.array([self.label_index[g] for g in gold], dtype=np.int64)
            except KeyError as exc:
                raise TrainingDataError(f"{name or 'example'}: gold label {exc.args[0]!r} outside label set") from None
        return CrfExample(feats, ids, trigger, name)


# ---------------------------------------------------------------------------
# inference


def _flat(features: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(f) for f in features], dtype=np.int64)
    flat = np.concatenate(features) if len(features) else np.zeros(0, dtype=np.int64)
    owner = np.repeat(np.arange(len(features)), lengths)
    return flat.astype(np.int64), owner


def potentials(model: CrfModel, example: CrfExample) -> tuple[np.ndarray, np.ndarray]:
    """Masked emission (T, L) and transition (L, L) log-potentials."""
    T = len(example.features)
    flat, owner = _flat(example.features)
    E = np.zeros((T, model.n_labels))
    if len(flat):
        np.add.at(E, owner, model.emission[flat])
    E[0] += model.start_mask
    if example.trigger is not None and len(model.lu_ids):
        mask = np.zeros_like(E)
        mask[:, model.lu_ids] = NEG_INF
        row = np.full(model.n_labels, NEG_INF)
        row[model.lu_ids] = 0.0
        if model.outside_id is not None:
            row[model.outside_id] = 0.0
        mask[example.trigger] = row
        E += mask
    return E, model.transition + model.trans_mask


def forward_backward(E: np.ndarray, Tr: np.ndarray):
    """Log partition, token marginals (T, L) and pairwise marginals (T-1, L, L)."""
    T, L = E.shape
    alpha = np.empty((T, L))
    beta = np.zeros((T, L))
    alpha[0] = E[0]
    for t in range(1, T):
        alpha[t] = _logsumexp(alpha[t - 1][:, None] + Tr, axis=0) + E[t]
    for t in range(T - 2, -1, -1):
        beta[t] = _logsumexp(Tr + (E[t + 1] + beta[t + 1])[None, :], axis=1)
    logZ = float(_logsumexp(alpha[-1], axis=0))
    if not np.isfinite(logZ):
        raise FloatingPointError("no label sequence is allowed under the masks")
    with np.errstate(invalid="ignore"):
        marg = np.exp(alpha + beta - logZ)
        if T > 1:
            pair = np.exp(alpha[:-1, :, None] + Tr[None, :, :] + (E[1:] + beta[1:])[:, None, :] - logZ)
        else:
            pair = np.zeros((0, L, L))
    return logZ, np.nan_to_num(marg), np.nan_to_num(pair)


def log_partition_and_marginals(model: CrfModel, example: CrfExample):
    E, Tr = potentials(model, example)
    return forward_backward(E, Tr)


def viterbi_decode(E: np.ndarray, Tr: np.ndarray) -> tuple[list[int], float]:
    """Best path; among equal scores the lexicographically smallest label sequence."""
    T, L = E.shape
    # suffix values: best score of positions t..T-1 given label at t
    V = np.empty((T, L))
    V[-1] = E[-1]
    for t in range(T - 2, -1, -1):
        V[t] = E[t] + np.max(Tr + V[t + 1][None, :], axis=1)
    path = [int(np.argmax(V[0]))]
    for t in range(1, T):
        path.append(int(np.argmax(Tr[path[-1]] + V[t])))
    return path, float(V[0, path[0]])


def viterbi(model: CrfModel, example: CrfExample) -> tuple[list[str], float]:
    E, Tr = potentials(model, example)
    path, score = viterbi_decode(E, Tr)
    return [model.labels[i] for i in path], score


def path_score(E: np.ndarray, Tr: np.ndarray, path: Sequence[int]) -> float:
    s = E[0, path[0]]
    for t in range(1, len(path)):
        s += Tr[path[t - 1], path[t]] + E[t, path[t]]
    return float(s)


# ---------------------------------------------------------------------------
# training


def _data_term(model: CrfModel, ex: CrfExample):
    """Data NLL plus dense-by-token emission gradient and transition gradient."""
    E, Tr = potentials(model, ex)
    logZ, marg, pair = forward_backward(E, Tr)
    gold = ex.gold
    nll = logZ - path_score(E, Tr, gold)
    if not np.isfinite(nll):
        raise TrainingDataError(f"{ex.name or 'example'}: gold sequence violates the label constraints")
    dE = marg.copy()
    dE[np.arange(len(gold)), gold] -= 1.0
    dT = pair.sum(axis=0)
    np.subtract.at(dT, (gold[:-1], gold[1:]), 1.0)
    return nll, dE, dT


def nll_and_gradient(model: CrfModel, examples: CrfExample | Sequence[CrfExample], l2: float | None = None):
    """Summed NLL over ``examples`` plus ``l2/2 * ||w||^2`` and its gradient.

    Returns ``(nll, (grad_emission, grad_transition))``.
    """
    if isinstance(examples, CrfExample):
        examples = [examples]
    l2 = model.l2 if l2 is None else l2
    gW = np.zeros_like(model.emission)
    gT = np.zeros_like(model.transition)
    total = 0.0
    for ex in examples:
        if ex.gold is None:
            raise TrainingDataError(f"{ex.name or 'example'}: no gold labels")
        nll, dE, dT = _data_term(model, ex)
        total += nll
        flat, owner = _flat(ex.features)
        if len(flat):
            np.add.at(gW, flat, dE[owner])
        gT += dT
    total += 0.5 * l2 * (np.sum(model.emission ** 2) + np.sum(model.transition ** 2))
    gW += l2 * model.emission
    gT += l2 * model.transition
    return total, (gW, gT)


def fit(model: CrfModel, examples: Sequence[CrfExample], hyper: CrfHyper) -> CrfModel:
    """Mini-batch SGD on mean NLL + L2 with inverse-time step decay."""
    if not examples:
        raise TrainingDataError("no training examples")
    rng = np.random.default_rng(hyper.seed)
    W, Tm = model.emission, model.transition
    n = len(examples)
    bs = max(1, hyper.batch_size)
    model.l2 = hyper.l2
    model.history = []
    for epoch in range(hyper.epochs):
        lr = hyper.lr / (1.0 + hyper.decay * epoch)
        running = 0.0
        order = rng.permutation(n)
        for b0 in range(0, n, bs):
            idx = order[b0:b0 + bs]
            scale = lr / len(idx)
            shrink = 1.0 - lr * hyper.l2
            updates = []
            for i in idx:
                ex = examples[i]
                nll, dE, dT = _data_term(model, ex)
                running += nll
                updates.append((ex, dE, dT))
            W *= shrink
            Tm *= shrink
            for ex, dE, dT in updates:
                flat, owner = _flat(ex.features)
                if len(flat):
                    np.add.at(W, flat, -scale * dE[owner])
                Tm -= scale * dT
        reg = 0.5 * hyper.l2 * (np.sum(W ** 2) + np.sum(Tm ** 2))
        model.history.append(running / n + reg)
    return model


class TrainingExample(NamedTuple):
    features: list[tuple[str, ...]]
    labels: list[str]
    trigger: int | None = None  # 0-based
    name: str = ""


def train_crf(examples: Sequence[TrainingExample], labels: Sequence[str], hyper: CrfHyper | None = None,
              lemma: str | None = None) -> CrfModel:
    """Build the feature dictionary from ``examples`` and fit a CRF over ``labels``."""
    hyper = hyper or CrfHyper()
    if not examples:
        raise TrainingDataError("no training examples")
    fdict = FeatureDictionary()
    for ex in examples:
        for tok in ex.features:
            for f in tok:
                fdict.add(f)
    fdict.close()
    model = CrfModel.zeros(labels, fdict, lemma=lemma, l2=hyper.l2)
    vec = [model.example(ex.features, ex.labels, ex.trigger, ex.name) for ex in examples]
    return fit(model, vec, hyper)


# ---------------------------------------------------------------------------
# one CRF per lexical unit


def strip_trigger(label: str) -> str:
    """CRF label form: B/I labels without the trigger index."""
    if label.startswith(("B:", "I:")):
        lab = parse_label(label)
        return f"{lab.kind}:{lab.frame}:{lab.role}"
    return label


def with_trigger(label: str, trigger: int) -> str:
    if label.startswith(("B:", "I:")):
        return f"{label}:{trigger}"
    return label


def frame_roles(corpus: Corpus) -> dict[str, set[str]]:
    roles: dict[str, set[str]] = {}
    for _, sent in corpus.sentences():
        for fr in sent.annotated_frames:
            roles.setdefault(fr.frame, set()).update(fe.role for fe in fr.elements)
    return roles


def label_set(frames: Iterable[str], roles: dict[str, set[str]]) -> list[str]:
    labels = [OUTSIDE]
    for f in sorted(frames):
        labels.append(f"LU:{f}")
        for r in sorted(roles.get(f, ())):
            labels.append(f"B:{f}:{r}")
        for r in sorted(roles.get(f, ())):
            labels.append(f"I:{f}:{r}")
    return labels


def lemma_examples(corpus: Corpus, lemma: str, window: int = DEFAULT_WINDOW,
                   max_path: int = DEFAULT_MAX_PATH) -> list[TrainingExample]:
    """Sub-corpus of one lemma: one example per (non-pending) occurrence."""
    out = []
    for (doc_id, si), sent in corpus.sentences():
        by_trigger = {f.trigger: f for f in sent.frames}
        for tok in sent.tokens:
            if tok.lemma != lemma or tok.index in sent.pending:
                continue
            inst = by_trigger.get(tok.index)
            if inst is None or inst.is_other:
                gold = [OUTSIDE] * len(sent)
            else:
                gold = [strip_trigger(l) for l in encode_bio(sent, inst)]
            feats = sentence_crf_features(sent, tok.index, window, max_path)
            out.append(TrainingExample(feats, gold, tok.index - 1, f"sentence {doc_id}:{si}@{tok.index}"))
    return out


@dataclass
class ModelBank:
    models: dict[str, CrfModel]
    window: int = DEFAULT_WINDOW
    max_path: int = DEFAULT_MAX_PATH
    hyper: dict = field(default_factory=dict)
    lexicon: tuple[str, ...] = ()  # lemmas known at training time, for coverage reporting

    def save(self, path) -> None:
        payload = {
            "format": BANK_FORMAT,
            "window": self.window,
            "max_path": self.max_path,
            "hyper": self.hyper,
            "lexicon": list(self.lexicon),
            "models": {
                lemma: {
                    "labels": m.labels,
                    "features": m.features.names(),
                    "emission": m.emission.tolist(),
                    "transition": m.transition.tolist(),
                    "l2": m.l2,
                    "history": m.history,
                } for lemma, m in sorted(self.models.items())
            },
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, ensure_ascii=False)

    @classmethod
    def load(cls, path) -> "ModelBank":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != BANK_FORMAT:
            raise ValueError(f"{path}: not a {BANK_FORMAT} file")
        models = {}
        for lemma, m in payload["models"].items():
            fdict = FeatureDictionary(m["features"]).close()
            L = len(m["labels"])
            emission = np.array(m["emission"], dtype=float).reshape(len(fdict), L)
            models[lemma] = CrfModel(m["labels"], fdict, emission, np.array(m["transition"], dtype=float),
                                     lemma=lemma, l2=m["l2"], history=m.get("history", []))
        return cls(models, payload["window"], payload["max_path"], payload.get("hyper", {}),
                   tuple(payload.get("lexicon", ())))


def _train_one(args):
    lemma, examples, labels, hyper = args
    return lemma, train_crf(examples, labels, hyper, lemma=lemma)


def train_multi(train: Corpus, hyper: CrfHyper | None = None, jobs: int = 1) -> ModelBank:
    """One CRF per lexicon lemma with at least one training occurrence."""
    hyper = hyper or CrfHyper()
    roles = frame_roles(train)
    tasks = []
    for lemma in sorted(train.lu_lexicon):
        examples = lemma_examples(train, lemma, hyper.window, hyper.max_path)
        if not examples:
            continue
        tasks.append((lemma, examples, label_set(train.lu_lexicon[lemma], roles), hyper))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            trained = dict(pool.map(_train_one, tasks))
    else:
        trained = dict(_train_one(t) for t in tasks)
    return ModelBank(trained, hyper.window, hyper.max_path, asdict(hyper), tuple(sorted(train.lu_lexicon)))


def parse_multi(bank: ModelBank, sentence: Sentence, threshold: float = 0.0,
                coverage: Counter | None = None) -> list[ScoredColumn]:
    """Run the CRF of every lexicon lemma occurring in ``sentence``.

    Each column carries the marginal of its Viterbi label per token; columns
    whose trigger marginal is below ``threshold`` are suppressed.  Lexicon
    lemmas missing from the bank are counted in ``coverage``.
    """
    columns = []
    for tok in sentence.tokens:
        model = bank.models.get(tok.lemma)
        if model is None:
            if coverage is not None and tok.lemma in bank.lexicon:
                coverage[tok.lemma] += 1
            continue
        feats = sentence_crf_features(sentence, tok.index, bank.window, bank.max_path)
        ex = model.example(feats, trigger=tok.index - 1)
        E, Tr = potentials(model, ex)
        path, _ = viterbi_decode(E, Tr)
        label = model.labels[path[tok.index - 1]]
        if not label.startswith("LU:"):
            continue
        _, marg, _ = forward_backward(E, Tr)
        conf = marg[np.arange(len(path)), path]
        if conf[tok.index - 1] < threshold:
            continue
        labels = tuple(with_trigger(model.labels[y], tok.index) for y in path)
        columns.append(ScoredColumn(labels, tuple(float(c) for c in conf)))
    return columns


def lexicon_lemmas(sentence: Sentence, lexicon) -> list[str]:
    return [t.lemma for t in sentence.tokens if t.lemma in lexicon]
