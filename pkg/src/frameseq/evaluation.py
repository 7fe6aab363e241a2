"""TI / TC / RI / RC scoring, threshold sweeps and the equal-error operating point."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Corpus, FrameInstance

SUBTASKS = ("TI", "TC", "RI", "RC")
EXACT = "exact"
PARTIAL = "partial"

SentenceKey = tuple[str, int]
Predictions = Mapping[SentenceKey, Sequence[FrameInstance]]


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class SubtaskScore:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        n = self.tp + self.fp
        return 1.0 if n == 0 else self.tp / n

    @property
    def recall(self) -> float:
        n = self.tp + self.fn
        return 1.0 if n == 0 else self.tp / n

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    def __add__(self, other: "SubtaskScore") -> "SubtaskScore":
        return SubtaskScore(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass
class EvalReport:
    scores: dict[str, SubtaskScore]
    mode: str = EXACT
    threshold: float | None = None
    cascade: bool = True

    def __getitem__(self, subtask: str) -> SubtaskScore:
        return self.scores[subtask]

    @property
    def no_predictions(self) -> bool:
        return self.scores["TI"].tp + self.scores["TI"].fp == 0

    def as_dict(self) -> dict:
        return {"mode": self.mode, "threshold": self.threshold, "cascade": self.cascade,
                "no_predictions": self.no_predictions,
                "subtasks": {k: v.as_dict() for k, v in self.scores.items()}}

    def render(self) -> str:
        lines = [f"{'task':<4} {'P':>6} {'R':>6} {'F1':>6} {'tp':>6} {'fp':>6} {'fn':>6}"]
        for k in SUBTASKS:
            s = self.scores[k]
            lines.append(f"{k:<4} {100 * s.precision:6.1f} {100 * s.recall:6.1f} {100 * s.f1:6.1f} "
                         f"{s.tp:6d} {s.fp:6d} {s.fn:6d}")
        return "\n".join(lines)


def _max_matching(left: Sequence, right: Sequence, compatible) -> int:
    """Size of a maximum bipartite matching (augmenting paths)."""
    adj = [[j for j, r in enumerate(right) if compatible(l, r)] for l in left]
    owner = [-1] * len(right)

    def augment(i, seen):
        for j in adj[i]:
            if j in seen:
                continue
            seen.add(j)
            if owner[j] == -1 or augment(owner[j], seen):
                owner[j] = i
                return True
        return False

    return sum(1 for i in range(len(left)) if adj[i] and augment(i, set()))


def _span_match(mode: str):
    if mode == EXACT:
        return lambda g, p: g.start == p.start and g.end == p.end
    if mode == PARTIAL:
        return lambda g, p: g.start <= p.end and p.start <= g.end
    raise EvaluationError(f"unknown matching mode {mode!r}")


def score_sentence(gold: Iterable[FrameInstance], pred: Iterable[FrameInstance], mode: str = EXACT,
                   cascade: bool = True) -> dict[str, SubtaskScore]:
    gold = [g for g in gold if not g.is_other]
    pred = [p for p in pred if not p.is_other]
    span_ok = _span_match(mode)
    role_ok = lambda g, p: span_ok(g, p) and g.role == p.role  # noqa: E731

    gold_by_trig = {g.trigger: g for g in gold}
    ti = tc = ri = rc = 0
    for p in pred:
        g = gold_by_trig.pop(p.trigger, None)  # each gold frame is matched once
        if g is None:
            continue
        ti += 1
        same_frame = g.frame == p.frame
        tc += same_frame
        if same_frame or not cascade:
            ri += _max_matching(g.elements, p.elements, span_ok)
            rc += _max_matching(g.elements, p.elements, role_ok)
    n_gold_fe = sum(len(g.elements) for g in gold)
    n_pred_fe = sum(len(p.elements) for p in pred)
    return {
        "TI": SubtaskScore(ti, len(pred) - ti, len(gold) - ti),
        "TC": SubtaskScore(tc, len(pred) - tc, len(gold) - tc),
        "RI": SubtaskScore(ri, n_pred_fe - ri, n_gold_fe - ri),
        "RC": SubtaskScore(rc, n_pred_fe - rc, n_gold_fe - rc),
    }


def as_predictions(predicted: Corpus | Predictions) -> dict[SentenceKey, list[FrameInstance]]:
    if isinstance(predicted, Corpus):
        return {key: list(sent.frames) for key, sent in predicted.sentences()}
    return {key: list(v) for key, v in predicted.items()}


def score(gold: Corpus, predicted: Corpus | Predictions, mode: str = EXACT, cascade: bool = True,
          threshold: float | None = None, trigger_pos: Iterable[str] | None = None) -> EvalReport:
    """Micro-averaged subtask scores over every gold sentence.

    ``trigger_pos`` restricts both sides to instances whose trigger token has
    one of the given POS tags.
    """
    preds = as_predictions(predicted)
    gold_sents = dict(gold.sentences())
    unknown = set(preds) - set(gold_sents)
    if unknown:
        raise EvaluationError(f"predictions for unknown sentences: {sorted(unknown)[:5]}")
    pos_filter = None if trigger_pos is None else set(trigger_pos)
    totals = {k: SubtaskScore(0, 0, 0) for k in SUBTASKS}
    for key, sent in gold_sents.items():
        g, p = sent.frames, preds.get(key, [])
        if pos_filter is not None:
            g = [f for f in g if sent.token(f.trigger).pos in pos_filter]
            p = [f for f in p if sent.token(f.trigger).pos in pos_filter]
        one = score_sentence(g, p, mode, cascade)
        totals = {k: totals[k] + one[k] for k in SUBTASKS}
    return EvalReport(totals, mode, threshold, cascade)


# ---------------------------------------------------------------------------
# threshold sweeps


def _conf(x) -> float:
    return 1.0 if x.score is None else float(x.score)


def apply_threshold(predicted: Predictions, threshold: float) -> dict[SentenceKey, list[FrameInstance]]:
    """Keep frames with confidence >= threshold and, under them, FEs with confidence >= threshold."""
    out = {}
    for key, instances in predicted.items():
        kept = []
        for inst in instances:
            if _conf(inst) < threshold:
                continue
            els = tuple(fe for fe in inst.elements if _conf(fe) >= threshold)
            kept.append(FrameInstance(inst.frame, inst.trigger, els, inst.score))
        out[key] = kept
    return out


@dataclass
class PrCurve:
    thresholds: list[float]
    points: dict[str, list[tuple[float, float]]]  # subtask -> [(precision, recall)]
    mode: str = EXACT
    reports: list[EvalReport] = field(default_factory=list, repr=False)

    def precision(self, subtask: str) -> np.ndarray:
        return np.array([p for p, _ in self.points[subtask]])

    def recall(self, subtask: str) -> np.ndarray:
        return np.array([r for _, r in self.points[subtask]])

    def rows(self):
        """One row per threshold with P, R and F1 of every subtask."""
        for i, t in enumerate(self.thresholds):
            row = {"threshold": t}
            for k in SUBTASKS:
                p, r = self.points[k][i]
                row[f"{k}_P"] = p
                row[f"{k}_R"] = r
                row[f"{k}_F1"] = 0.0 if p + r == 0 else 2 * p * r / (p + r)
            yield row


CSV_FIELDS = ["threshold"] + [f"{k}_{m}" for k in SUBTASKS for m in ("P", "R", "F1")]


def default_grid(n: int = 101) -> list[float]:
    return [round(float(t), 10) for t in np.linspace(0.0, 1.0, n)]


def pr_curve(gold: Corpus, predicted: Corpus | Predictions, thresholds: Sequence[float] | None = None,
             mode: str = EXACT, cascade: bool = True) -> PrCurve:
    preds = as_predictions(predicted)
    grid = list(default_grid() if thresholds is None else thresholds)
    if sorted(grid) != grid:
        raise EvaluationError("thresholds must be sorted ascending")
    points = {k: [] for k in SUBTASKS}
    reports = []
    for t in grid:
        rep = score(gold, apply_threshold(preds, t), mode, cascade, threshold=t)
        reports.append(rep)
        for k in SUBTASKS:
            points[k].append((rep[k].precision, rep[k].recall))
    return PrCurve(grid, points, mode, reports)


@dataclass(frozen=True)
class OperatingPoint:
    threshold: float
    value: float
    precision: float
    recall: float
    boundary: bool = False

    def as_dict(self) -> dict:
        return {"threshold": self.threshold, "value": self.value, "precision": self.precision,
                "recall": self.recall, "boundary": self.boundary}


def eer_from_points(thresholds: Sequence[float], precision: Sequence[float],
                    recall: Sequence[float]) -> OperatingPoint:
    """Threshold where P = R, by linear interpolation between grid points.

    The highest-threshold crossing is used.  Without a crossing the grid
    point with the smallest |P - R| is returned with ``boundary`` set.
    """
    t = np.asarray(thresholds, dtype=float)
    P = np.asarray(precision, dtype=float)
    R = np.asarray(recall, dtype=float)
    if len(t) == 0:
        raise EvaluationError("empty curve")
    d = P - R
    for i in range(len(t) - 1, -1, -1):
        if d[i] == 0:
            return OperatingPoint(float(t[i]), float(P[i]), float(P[i]), float(R[i]))
        if i > 0 and np.sign(d[i - 1]) * np.sign(d[i]) < 0:
            frac = d[i - 1] / (d[i - 1] - d[i])
            th = t[i - 1] + frac * (t[i] - t[i - 1])
            p = P[i - 1] + frac * (P[i] - P[i - 1])
            r = R[i - 1] + frac * (R[i] - R[i - 1])
            return OperatingPoint(float(th), float((p + r) / 2), float(p), float(r))
    j = int(np.argmin(np.abs(d)))
    return OperatingPoint(float(t[j]), float((P[j] + R[j]) / 2), float(P[j]), float(R[j]), boundary=True)


def eer_operating_point(curve: PrCurve, subtask: str = "RC") -> OperatingPoint:
    return eer_from_points(curve.thresholds, curve.precision(subtask), curve.recall(subtask))


def eer_summary(curve: PrCurve) -> dict[str, OperatingPoint]:
    return {k: eer_operating_point(curve, k) for k in SUBTASKS}


def write_curve_csv(curve: PrCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in curve.rows():
            writer.writerow(row)


def write_report_json(report: EvalReport, path, extra: Mapping | None = None) -> None:
    payload = report.as_dict()
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)

