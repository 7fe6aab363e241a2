"""Multi-task bidirectional LSTM tagger, numpy only.

One forward and one backward LSTM read the concatenated word, POS, deprel
and is-LU embeddings; their states are concatenated and fed to one softmax
head per frame.  Head labels are ``O``, ``LU`` and ``B:<role>`` / ``I:<role>``
for the roles of that frame.  Everything runs in float64 so gradients can be
checked against finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .coherence import ScoredColumn
from .corpus import OUTSIDE, Corpus, Sentence, encode_bio, parse_label
from .features import NeuralVocab, Vocabulary, embedding_matrix, neural_features

NET_FORMAT = "bilstm-mt/1"
EMBEDDINGS = ("word", "pos", "rel", "lu")


class InputError(ValueError):
    pass


@dataclass
class TaggerHyper:
    hidden: int = 100
    word_dim: int = 200
    pos_dim: int = 16
    rel_dim: int = 16
    lu_dim: int = 8
    epochs: int = 30
    lr: float = 1.0
    decay: float = 0.05
    batch_size: int = 4
    clip: float = 5.0
    seed: int = 0
    alpha: Mapping[str, float] | None = None  # per-frame task weight, default 1

    @classmethod
    def from_dict(cls, d: dict) -> "TaggerHyper":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class NeuralTagger:
    params: dict[str, np.ndarray]
    vocab: NeuralVocab
    tasks: list[str]
    task_labels: list[list[str]]
    alpha: np.ndarray
    lu_lexicon: Mapping[str, frozenset] = field(default_factory=dict)
    history: list[float] = field(default_factory=list)

    @property
    def hidden(self) -> int:
        return self.params["f_Wh"].shape[0]

    def head_index(self, frame: str) -> int:
        return self.tasks.index(frame)


def head_labels(roles: Sequence[str]) -> list[str]:
    roles = sorted(roles)
    return [OUTSIDE, "LU"] + [f"B:{r}" for r in roles] + [f"I:{r}" for r in roles]


def init_params(sizes: Mapping[str, int], dims: Mapping[str, int], hidden: int,
                task_sizes: Sequence[int], rng: np.random.Generator,
                pretrained: Mapping[str, np.ndarray] | None = None, words: Vocabulary | None = None) -> dict:
    p = {}
    for name in EMBEDDINGS:
        if name == "word" and words is not None:
            p["emb_word"] = embedding_matrix(words, dims["word"], rng, pretrained)
        else:
            p[f"emb_{name}"] = rng.uniform(-0.05, 0.05, (sizes[name], dims[name]))
    D = sum(dims[n] for n in EMBEDDINGS)
    H = hidden
    s = 1.0 / np.sqrt(H)
    for d in ("f", "b"):
        p[f"{d}_Wx"] = rng.uniform(-s, s, (D, 4 * H))
        p[f"{d}_Wh"] = rng.uniform(-s, s, (H, 4 * H))
        b = np.zeros(4 * H)
        b[H:2 * H] = 1.0  # forget gate
        p[f"{d}_b"] = b
    for k, L in enumerate(task_sizes):
        p[f"head{k}_W"] = rng.uniform(-s, s, (2 * H, L))
        p[f"head{k}_b"] = np.zeros(L)
    return p


# ---------------------------------------------------------------------------
# forward pass


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _embed(params, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[1] != 4:
        raise InputError(f"expected (tokens, 4) feature ids, got shape {X.shape}")
    parts = []
    for col, name in enumerate(EMBEDDINGS):
        table = params[f"emb_{name}"]
        ids = X[:, col]
        if ids.min() < 0 or ids.max() >= len(table):
            raise InputError(f"{name} id out of range [0, {len(table)})")
        parts.append(table[ids])
    return np.concatenate(parts, axis=1)


def _lstm(Wx, Wh, b, xs):
    T = len(xs)
    H = Wh.shape[0]
    h = np.zeros(H)
    c = np.zeros(H)
    cache = []
    hs = np.empty((T, H))
    pre = xs @ Wx + b
    for t in range(T):
        z = pre[t] + h @ Wh
        i, f, o = _sigmoid(z[:H]), _sigmoid(z[H:2 * H]), _sigmoid(z[2 * H:3 * H])
        g = np.tanh(z[3 * H:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        cache.append((h, c, i, f, o, g, tc))
        h, c = h_new, c_new
        hs[t] = h
    return hs, cache


def encode(params, X) -> tuple[np.ndarray, np.ndarray]:
    """Forward-direction and backward-direction hidden states, both in sentence order."""
    xs = _embed(params, X)
    hf, _ = _lstm(params["f_Wx"], params["f_Wh"], params["f_b"], xs)
    hb, _ = _lstm(params["b_Wx"], params["b_Wh"], params["b_b"], xs[::-1])
    return hf, hb[::-1]


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward(params, X, n_tasks):
    xs = _embed(params, X)
    hf, cf = _lstm(params["f_Wx"], params["f_Wh"], params["f_b"], xs)
    hb, cb = _lstm(params["b_Wx"], params["b_Wh"], params["b_b"], xs[::-1])
    Hc = np.concatenate([hf, hb[::-1]], axis=1)
    probs = [_softmax(Hc @ params[f"head{k}_W"] + params[f"head{k}_b"]) for k in range(n_tasks)]
    return probs, (xs, Hc, cf, cb)


def forward(net: NeuralTagger, X) -> list[np.ndarray]:
    """Per-task (T, L_k) label distributions."""
    return _forward(net.params, X, len(net.tasks))[0]


# ---------------------------------------------------------------------------
# loss and gradient


def _check_gold(net_tasks: int, gold: Sequence[np.ndarray], T: int, sizes=None):
    if len(gold) != net_tasks:
        raise InputError(f"{len(gold)} gold columns for {net_tasks} tasks")
    for k, g in enumerate(gold):
        if len(g) != T:
            raise InputError(f"gold column {k} has {len(g)} labels for {T} tokens")
        if sizes is not None and (np.min(g) < 0 or np.max(g) >= sizes[k]):
            raise InputError(f"gold column {k} has a label id outside the head")


def _loss_from_probs(probs, gold, alpha) -> float:
    T = len(gold[0]) if len(gold) else 0
    total = 0.0
    for k, (p, g) in enumerate(zip(probs, gold)):
        if alpha[k] == 0:
            continue
        with np.errstate(divide="ignore"):
            total += alpha[k] * float(np.mean(-np.log(p[np.arange(T), g])))
    return total


def loss(net: NeuralTagger, X, gold: Sequence[np.ndarray]) -> float:
    """Sum over tasks of alpha_k times the token-averaged cross-entropy."""
    _check_gold(len(net.tasks), gold, len(X), [len(l) for l in net.task_labels])
    probs = forward(net, X)
    return _loss_from_probs(probs, gold, net.alpha)


def _lstm_backward(Wx, Wh, xs, cache, dhs):
    T = len(xs)
    H = Wh.shape[0]
    dZ = np.empty((T, 4 * H))
    h_prevs = np.empty((T, H))
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for t in range(T - 1, -1, -1):
        h_prev, c_prev, i, f, o, g, tc = cache[t]
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1 - tc ** 2)
        dz = dZ[t]
        dz[:H] = dc * g * i * (1 - i)
        dz[H:2 * H] = dc * c_prev * f * (1 - f)
        dz[2 * H:3 * H] = dh * tc * o * (1 - o)
        dz[3 * H:] = dc * i * (1 - g ** 2)
        h_prevs[t] = h_prev
        dh_next = Wh @ dz
        dc_next = dc * f
    return xs.T @ dZ, h_prevs.T @ dZ, dZ.sum(axis=0), dZ @ Wx.T


def loss_and_gradient(params, X, gold, alpha) -> tuple[float, dict]:
    n_tasks = len(gold)
    probs, (xs, Hc, cf, cb) = _forward(params, X, n_tasks)
    T = len(X)
    value = _loss_from_probs(probs, gold, alpha)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dH = np.zeros_like(Hc)
    for k in range(n_tasks):
        dz = probs[k].copy()
        dz[np.arange(T), gold[k]] -= 1.0
        dz *= alpha[k] / T
        grads[f"head{k}_W"] = Hc.T @ dz
        grads[f"head{k}_b"] = dz.sum(axis=0)
        dH += dz @ params[f"head{k}_W"].T
    H = params["f_Wh"].shape[0]
    dWx, dWh, db, dxf = _lstm_backward(params["f_Wx"], params["f_Wh"], xs, cf, dH[:, :H])
    grads["f_Wx"], grads["f_Wh"], grads["f_b"] = dWx, dWh, db
    dWx, dWh, db, dxb = _lstm_backward(params["b_Wx"], params["b_Wh"], xs[::-1], cb, dH[::-1, H:])
    grads["b_Wx"], grads["b_Wh"], grads["b_b"] = dWx, dWh, db
    dxs = dxf + dxb[::-1]
    offset = 0
    for col, name in enumerate(EMBEDDINGS):
        dim = params[f"emb_{name}"].shape[1]
        np.add.at(grads[f"emb_{name}"], X[:, col], dxs[:, offset:offset + dim])
        offset += dim
    return value, grads


def backward(net: NeuralTagger, X, gold: Sequence[np.ndarray]) -> dict[str, np.ndarray]:
    _check_gold(len(net.tasks), gold, len(X), [len(l) for l in net.task_labels])
    return loss_and_gradient(net.params, np.asarray(X), gold, net.alpha)[1]


# ---------------------------------------------------------------------------
# data preparation and training


def task_columns(sentence: Sentence, tasks: Sequence[str], task_labels: Sequence[Sequence[str]]) -> list[np.ndarray]:
    """Gold head-label ids per task; several instances of one frame are merged, first wins."""
    out = []
    by_frame: dict[str, list] = {}
    for fr in sentence.annotated_frames:
        by_frame.setdefault(fr.frame, []).append(fr)
    n = len(sentence)
    for frame, labels in zip(tasks, task_labels):
        index = {l: i for i, l in enumerate(labels)}
        col = np.zeros(n, dtype=np.int64)
        for inst in by_frame.get(frame, ()):
            for t, text in enumerate(encode_bio(sentence, inst)):
                if text == OUTSIDE or col[t] != 0:
                    continue
                lab = parse_label(text)
                key = "LU" if lab.kind == "LU" else f"{lab.kind}:{lab.role}"
                col[t] = index[key]
        out.append(col)
    return out


def _task_inventory(corpus: Corpus):
    roles: dict[str, set] = {}
    for _, sent in corpus.sentences():
        for fr in sent.annotated_frames:
            roles.setdefault(fr.frame, set()).update(fe.role for fe in fr.elements)
    tasks = sorted(roles)
    return tasks, [head_labels(roles[f]) for f in tasks]


def _clip(grads, max_norm):
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def train_tagger(train: Corpus, hyper: TaggerHyper | None = None,
                 pretrained: Mapping[str, np.ndarray] | None = None) -> NeuralTagger:
    """Mini-batch gradient descent on the summed task losses."""
    hyper = hyper or TaggerHyper()
    data = [s for _, s in train.sentences()]
    if not data:
        raise InputError("empty training corpus")
    vocab = NeuralVocab.build(train)
    tasks, task_labels = _task_inventory(train)
    alpha = np.array([float((hyper.alpha or {}).get(f, 1.0)) for f in tasks])
    rng = np.random.default_rng(hyper.seed)
    sizes = {"word": len(vocab.words), "pos": len(vocab.pos), "rel": len(vocab.rels), "lu": 2}
    dims = {"word": hyper.word_dim, "pos": hyper.pos_dim, "rel": hyper.rel_dim, "lu": hyper.lu_dim}
    params = init_params(sizes, dims, hyper.hidden, [len(l) for l in task_labels], rng, pretrained, vocab.words)
    net = NeuralTagger(params, vocab, tasks, task_labels, alpha, dict(train.lu_lexicon))
    examples = [(neural_features(s, train.lu_lexicon, vocab), task_columns(s, tasks, task_labels)) for s in data]
    bs = max(1, hyper.batch_size)
    for epoch in range(hyper.epochs):
        lr = hyper.lr / (1.0 + hyper.decay * epoch)
        order = rng.permutation(len(examples))
        running = 0.0
        for b0 in range(0, len(order), bs):
            idx = order[b0:b0 + bs]
            acc = None
            for i in idx:
                X, gold = examples[i]
                value, grads = loss_and_gradient(params, X, gold, alpha)
                running += value
                if acc is None:
                    acc = grads
                else:
                    for k in acc:
                        acc[k] += grads[k]
            for k in acc:
                acc[k] /= len(idx)
            _clip(acc, hyper.clip)
            for k, g in acc.items():
                params[k] -= lr * g
        net.history.append(running / len(examples))
    return net


def predict(net: NeuralTagger, sentence: Sentence, threshold: float = 0.0) -> list[ScoredColumn]:
    """Decode every task head in one pass.

    A token takes the argmax label of a head; a non-O argmax survives only if
    its probability reaches ``threshold``.  Columns with no surviving label
    are omitted.
    """
    X = neural_features(sentence, net.lu_lexicon, net.vocab)
    probs = forward(net, X)
    out = []
    for frame, labels, p in zip(net.tasks, net.task_labels, probs):
        best = np.argmax(p, axis=1)
        conf = p[np.arange(len(best)), best]
        keep = (best != 0) & (conf >= threshold)
        if not keep.any():
            continue
        col = []
        for t in range(len(best)):
            if not keep[t]:
                col.append(OUTSIDE)
            elif labels[best[t]] == "LU":
                col.append(f"LU:{frame}")
            else:
                kind, role = labels[best[t]].split(":", 1)
                col.append(f"{kind}:{frame}:{role}")
        scores = tuple(float(c) if k else 1.0 for c, k in zip(conf, keep))
        out.append(ScoredColumn(tuple(col), scores))
    return out


# ---------------------------------------------------------------------------
# serialization


def save_tagger(net: NeuralTagger, path) -> None:
    meta = {
        "format": NET_FORMAT,
        "tasks": net.tasks,
        "task_labels": net.task_labels,
        "alpha": net.alpha.tolist(),
        "words": net.vocab.words.itos[1:],
        "pos": net.vocab.pos.itos[1:],
        "rels": net.vocab.rels.itos[1:],
        "lu_lexicon": {k: sorted(v) for k, v in net.lu_lexicon.items()},
        "history": net.history,
    }
    arrays = dict(net.params)
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_tagger(path) -> NeuralTagger:
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise ValueError(f"{path}: not a {NET_FORMAT} file")
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta.get("format") != NET_FORMAT:
            raise ValueError(f"{path}: not a {NET_FORMAT} file")
        params = {k: data[k].astype(np.float64) for k in data.files if k != "__meta__"}
    vocab = NeuralVocab(Vocabulary(meta["words"]), Vocabulary(meta["pos"]), Vocabulary(meta["rels"]))
    lexicon = {k: frozenset(v) for k, v in meta["lu_lexicon"].items()}
    return NeuralTagger(params, vocab, meta["tasks"], meta["task_labels"], np.array(meta["alpha"]),
                        lexicon, meta.get("history", []))
