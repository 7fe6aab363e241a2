"""Feature extraction for the CRF and the recurrent tagger."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .corpus import Corpus, Sentence

UP = "↑"
DOWN = "↓"
DEFAULT_WINDOW = 2
DEFAULT_MAX_PATH = 6


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class DependencyPath:
    steps: tuple[tuple[str, str], ...]  # ("up" | "down", deprel)

    @property
    def rendered(self) -> str:
        return "".join((UP if d == "up" else DOWN) + rel for d, rel in self.steps)

    def __len__(self):
        return len(self.steps)

    def reversed(self) -> "DependencyPath":
        flip = {"up": "down", "down": "up"}
        return DependencyPath(tuple((flip[d], r) for d, r in reversed(self.steps)))


def ancestors(sentence: Sentence) -> list[list[int]]:
    """For each token (1-based, slot 0 unused) the chain token, parent, ..., root."""
    n = len(sentence)
    heads = [0] + [t.head for t in sentence.tokens]
    roots = [i for i in range(1, n + 1) if heads[i] == 0]
    if len(roots) != 1:
        raise TreeError(f"dependency tree needs exactly one root, found {len(roots)}")
    chains: list[list[int]] = [[]]
    for i in range(1, n + 1):
        chain = [i]
        seen = {i}
        node = i
        while heads[node] != 0:
            node = heads[node]
            if not 1 <= node <= n:
                raise TreeError(f"head {node} out of range")
            if node in seen:
                raise TreeError(f"cycle through token {node}")
            seen.add(node)
            chain.append(node)
        chains.append(chain)
    return chains


def tree_depth(sentence: Sentence, index: int) -> int:
    return len(ancestors(sentence)[index]) - 1


def _path_from_chains(sentence: Sentence, up_chain: list[int], down_chain: list[int]) -> DependencyPath:
    on_down = {node: k for k, node in enumerate(down_chain)}
    steps = []
    for node in up_chain:
        if node in on_down:
            lca_pos = on_down[node]
            break
        steps.append(("up", sentence.token(node).deprel))
    else:  # pragma: no cover - a single root guarantees a common ancestor
        raise TreeError("tokens are not connected")
    for node in reversed(down_chain[:lca_pos]):
        steps.append(("down", sentence.token(node).deprel))
    return DependencyPath(tuple(steps))


def dependency_path(sentence: Sentence, source: int, target: int) -> DependencyPath:
    """Shortest tree path: ascending from ``source`` to the common ancestor, then descending to ``target``."""
    n = len(sentence)
    if not (1 <= source <= n and 1 <= target <= n):
        raise IndexError(f"token index out of range for sentence of length {n}")
    chains = ancestors(sentence)
    return _path_from_chains(sentence, chains[source], chains[target])


def render_path(path: DependencyPath, max_len: int = DEFAULT_MAX_PATH) -> str:
    if len(path) <= max_len:
        return path.rendered
    first, last = DependencyPath(path.steps[:1]), DependencyPath(path.steps[-1:])
    return "LONGPATH" + first.rendered + last.rendered


def _window_features(sentence: Sentence, position: int, window: int) -> list[str]:
    n = len(sentence)
    feats = []
    for off in range(-window, window + 1):
        j = position + off
        if j < 1:
            lemma = pos = "<S>"
        elif j > n:
            lemma = pos = "</S>"
        else:
            tok = sentence.token(j)
            lemma, pos = tok.lemma, tok.pos
        feats.append(f"L[{off}]={lemma}")
        feats.append(f"P[{off}]={pos}")
    return feats


def sentence_crf_features(sentence: Sentence, trigger: int, window: int = DEFAULT_WINDOW,
                          max_path: int = DEFAULT_MAX_PATH) -> list[tuple[str, ...]]:
    """CRF observation features for every token, relative to ``trigger``."""
    try:
        chains = ancestors(sentence)
    except TreeError:
        chains = None
    out = []
    for pos in range(1, len(sentence) + 1):
        feats = ["BIAS"] + _window_features(sentence, pos, window)
        if chains is None:
            feats.append("PATH=NOTREE")
        else:
            path = _path_from_chains(sentence, chains[pos], chains[trigger])
            feats.append("PATH=" + render_path(path, max_path))
        if pos == trigger:
            feats.append("TRIGGER")
        out.append(tuple(sorted(set(feats))))
    return out


def crf_features(sentence: Sentence, trigger: int, position: int, window: int = DEFAULT_WINDOW,
                 max_path: int = DEFAULT_MAX_PATH) -> tuple[str, ...]:
    """Lemma, POS and dependency-path-to-trigger features of one token."""
    n = len(sentence)
    if not (1 <= trigger <= n and 1 <= position <= n):
        raise IndexError(f"token index out of range for sentence of length {n}")
    return sentence_crf_features(sentence, trigger, window, max_path)[position - 1]


class FeatureDictionary:
    """String feature -> column id; closed dictionaries drop unseen features."""

    def __init__(self, features: Iterable[str] = ()):
        self.index: dict[str, int] = {}
        self.closed = False
        for f in features:
            self.add(f)

    def add(self, feature: str) -> int | None:
        idx = self.index.get(feature)
        if idx is None and not self.closed:
            idx = self.index[feature] = len(self.index)
        return idx

    def close(self) -> "FeatureDictionary":
        self.closed = True
        return self

    def __len__(self):
        return len(self.index)

    def vectorize(self, features: Iterable[str]) -> np.ndarray:
        ids = set()
        for f in features:
            i = self.index.get(f) if self.closed else self.add(f)
            if i is not None:
                ids.add(i)
        return np.array(sorted(ids), dtype=np.int64)

    def names(self) -> list[str]:
        out = [""] * len(self.index)
        for f, i in self.index.items():
            out[i] = f
        return out


# ---------------------------------------------------------------------------
# neural tagger inputs

UNK = "<unk>"


class Vocabulary:
    """Symbol table with id 0 reserved for unknown symbols."""

    def __init__(self, symbols: Iterable[str] = ()):
        self.itos = [UNK]
        self.stoi = {UNK: 0}
        for s in symbols:
            if s not in self.stoi:
                self.stoi[s] = len(self.itos)
                self.itos.append(s)

    def __len__(self):
        return len(self.itos)

    def __getitem__(self, symbol: str) -> int:
        return self.stoi.get(symbol, 0)

    def lookup(self, idx: int) -> str:
        return self.itos[idx]


@dataclass
class NeuralVocab:
    words: Vocabulary
    pos: Vocabulary
    rels: Vocabulary

    @classmethod
    def build(cls, corpus: Corpus) -> "NeuralVocab":
        words, pos, rels = [], [], []
        for _, sent in corpus.sentences():
            for t in sent.tokens:
                words.append(t.surface)
                pos.append(t.pos)
                rels.append(t.deprel)
        return cls(Vocabulary(words), Vocabulary(sorted(set(pos))), Vocabulary(sorted(set(rels))))


def neural_features(sentence: Sentence, lu_lexicon: Mapping, vocab: NeuralVocab) -> np.ndarray:
    """Per-token ``(word id, POS id, deprel id, is_lu)`` rows."""
    rows = [(vocab.words[t.surface], vocab.pos[t.pos], vocab.rels[t.deprel], int(t.lemma in lu_lexicon))
            for t in sentence.tokens]
    return np.array(rows, dtype=np.int64).reshape(len(rows), 4)


def load_embeddings(path) -> dict[str, np.ndarray]:
    """Read whitespace-separated ``word v1 ... vd`` lines."""
    table: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue  # word2vec-style "count dim" header
            vec = np.array([float(x) for x in parts[1:]])
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, got {len(vec)}")
            table[parts[0]] = vec
    return table


def embedding_matrix(vocab: Vocabulary, dim: int, rng: np.random.Generator,
                     pretrained: Mapping[str, np.ndarray] | None = None, scale: float = 0.05) -> np.ndarray:
    mat = rng.uniform(-scale, scale, size=(len(vocab), dim))
    if pretrained:
        for i, word in enumerate(vocab.itos):
            vec = pretrained.get(word)
            if vec is not None:
                if len(vec) != dim:
                    raise ValueError(f"pretrained vector for {word!r} has dimension {len(vec)}, expected {dim}")
                mat[i] = vec
    return mat


def context_lemmas(sentence: Sentence, position: int, radius: int) -> list[str]:
    n = len(sentence)
    return [sentence.token(j).lemma for j in range(max(1, position - radius), min(n, position + radius) + 1)
            if j != position]
