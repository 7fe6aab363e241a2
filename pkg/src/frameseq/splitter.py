"""Document-atomic train/test splits and k-fold partitions."""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Corpus

MANIFEST_FORMAT = "split-manifest/1"
TOLERANCE = 0.02


class SplitError(ValueError):
    pass


class SplitWarning(UserWarning):
    pass


def document_frame_counts(corpus: Corpus) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Frame names, a (docs, frames) occurrence matrix and per-document sentence counts."""
    per_doc = []
    frames = set()
    for doc in corpus.documents:
        c = Counter(f.frame for s in doc.sentences for f in s.annotated_frames)
        frames.update(c)
        per_doc.append(c)
    names = sorted(frames)
    mat = np.array([[c.get(f, 0) for f in names] for c in per_doc], dtype=float).reshape(len(per_doc), len(names))
    sents = np.array([len(d.sentences) for d in corpus.documents], dtype=float)
    return names, mat, sents


def js_divergence(p: Sequence[float], q: Sequence[float]) -> float:
    """Jensen-Shannon divergence (base 2) between two count vectors."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.sum() == 0 or q.sum() == 0:
        return 0.0 if p.sum() == q.sum() else 1.0
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


@dataclass
class SplitPlan:
    train_ids: list[str]
    test_ids: list[str]
    fraction: float
    seed: int
    frames: list[str]
    train_counts: list[int]
    test_counts: list[int]

    @property
    def achieved(self) -> float:
        total = sum(self.train_counts) + sum(self.test_counts)
        return sum(self.train_counts) / total if total else 0.0

    @property
    def within_tolerance(self) -> bool:
        return abs(self.achieved - self.fraction) <= TOLERANCE + 1e-12

    @property
    def divergence(self) -> float:
        return js_divergence(self.train_counts, self.test_counts)

    def manifest(self) -> dict:
        return {
            "format": MANIFEST_FORMAT,
            "fraction": self.fraction,
            "seed": self.seed,
            "achieved_train_share": self.achieved,
            "tolerance": TOLERANCE,
            "within_tolerance": self.within_tolerance,
            "js_divergence": self.divergence,
            "train_ids": self.train_ids,
            "test_ids": self.test_ids,
            "per_frame": {f: {"train": a, "test": b}
                          for f, a, b in zip(self.frames, self.train_counts, self.test_counts)},
        }

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.manifest(), fh, indent=2)


def _cost(train_vec, total_vec, r, n_frames):
    per_frame = train_vec[:-2] - r * total_vec[:-2]
    overall = train_vec[-2] - r * total_vec[-2]
    sents = train_vec[-1] - r * total_vec[-1]
    # the overall share dominates; the sentence term only breaks ties between frame-less documents
    return float(per_frame @ per_frame + n_frames * overall * overall + 1e-3 * sents * sents)


def plan_split(corpus: Corpus, train_fraction: float = 0.8, seed: int = 0) -> SplitPlan:
    """Largest-first greedy assignment followed by single-move and swap hill climbing."""
    if not 0 < train_fraction < 1:
        raise SplitError(f"train fraction must lie in (0, 1), got {train_fraction}")
    docs = [d.id for d in corpus.documents]
    if len(docs) < 2:
        warnings.warn("fewer than two documents: every document goes to train", SplitWarning)
    names, mat, sents = document_frame_counts(corpus)
    r = train_fraction
    # feature row per document: frame counts, total frames, sentences
    X = np.concatenate([mat, mat.sum(axis=1, keepdims=True), sents[:, None]], axis=1)
    total = X.sum(axis=0)
    nf = max(1, len(names))
    rng = np.random.default_rng(seed)
    order = sorted(range(len(docs)), key=lambda i: (-X[i, -2], -X[i, -1], rng.random()))

    side = np.zeros(len(docs), dtype=bool)  # True = train
    train_vec = np.zeros_like(total)
    seen = np.zeros_like(total)
    for i in order:
        seen += X[i]
        with_doc = _cost(train_vec + X[i], seen, r, nf)
        without = _cost(train_vec, seen, r, nf)
        if with_doc <= without:
            side[i] = True
            train_vec += X[i]

    def final_cost(vec):
        return _cost(vec, total, r, nf)

    improved = True
    while improved:
        improved = False
        best = final_cost(train_vec)
        for i in range(len(docs)):
            cand = train_vec - X[i] if side[i] else train_vec + X[i]
            c = final_cost(cand)
            if c < best - 1e-9:
                side[i] = not side[i]
                train_vec, best, improved = cand, c, True
        if improved or len(docs) > 400:
            continue
        tr = np.flatnonzero(side)
        te = np.flatnonzero(~side)
        for i in tr:
            for j in te:
                cand = train_vec - X[i] + X[j]
                c = final_cost(cand)
                if c < best - 1e-9:
                    side[i], side[j] = False, True
                    train_vec, best, improved = cand, c, True
                    break
            if improved:
                break

    if len(docs) >= 2 and (side.all() or not side.any()):
        # keep both sides non-empty: move the document whose move costs least
        flips = [(final_cost(train_vec - X[i] if side[i] else train_vec + X[i]), i) for i in range(len(docs))]
        _, i = min(flips)
        train_vec = train_vec - X[i] if side[i] else train_vec + X[i]
        side[i] = not side[i]

    train_counts = [int(v) for v in mat[side].sum(axis=0)] if len(names) else []
    test_counts = [int(v) for v in mat[~side].sum(axis=0)] if len(names) else []
    plan = SplitPlan([d for d, s in zip(docs, side) if s], [d for d, s in zip(docs, side) if not s],
                     train_fraction, seed, names, train_counts, test_counts)
    if len(docs) >= 2 and not plan.within_tolerance:
        warnings.warn(f"achieved train share {plan.achieved:.3f} is outside ±{TOLERANCE} of {train_fraction}",
                      SplitWarning)
    return plan


def split(corpus: Corpus, train_fraction: float = 0.8, seed: int = 0) -> tuple[Corpus, Corpus]:
    plan = plan_split(corpus, train_fraction, seed)
    return corpus.subset(plan.train_ids), corpus.subset(plan.test_ids)


def kfold(corpus: Corpus, k: int = 5, seed: int | None = None) -> list[tuple[Corpus, Corpus]]:
    """Document-atomic folds; documents keep corpus order unless ``seed`` shuffles them."""
    n = len(corpus.documents)
    if k < 2:
        raise SplitError(f"k must be at least 2, got {k}")
    if k > n:
        raise SplitError(f"k={k} exceeds the number of documents ({n})")
    ids = [d.id for d in corpus.documents]
    if seed is not None:
        ids = [ids[i] for i in np.random.default_rng(seed).permutation(n)]
    folds = []
    for part in np.array_split(np.arange(n), k):
        held = {ids[i] for i in part}
        folds.append((corpus.subset(set(ids) - held), corpus.subset(held)))
    return folds
