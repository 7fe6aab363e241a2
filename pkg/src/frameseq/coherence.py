"""Frame-level repair of tagger output.

Taggers emit label columns that may be locally inconsistent.  The filter
turns them into frame instances: it repairs (or drops) element runs that do
not open with a B label, links every element to a trigger of the same frame
in the sentence, and removes elements whose frame has no trigger.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import FrameElement, FrameInstance, Sentence, encode_bio, parse_label

REPAIR = "repair"
STRICT = "strict"


@dataclass(frozen=True)
class ScoredColumn:
    """One raw tagger column with a confidence per token label."""

    labels: tuple[str, ...]
    scores: tuple[float, ...] | None = None

    def score(self, position: int) -> float:
        return 1.0 if self.scores is None else float(self.scores[position - 1])


def resolve_multi_trigger(candidates: Sequence[int], start: int, end: int) -> int:
    """Trigger nearest to the segment midpoint; ties go to the leftmost trigger."""
    if not candidates:
        raise ValueError("no candidate trigger")
    mid = (start + end) / 2.0
    return min(sorted(candidates), key=lambda t: abs(mid - t))


def _segments(column: ScoredColumn, mode: str):
    """Yield (frame, role, start, end, trigger_hint, score) runs of one column."""
    out = []
    current = None
    dropping = None
    for pos, text in enumerate(column.labels, start=1):
        lab = parse_label(text)
        score = column.score(pos)
        if lab.kind == "I":
            key = (lab.frame, lab.role)
            if current is not None and (current[0], current[1]) == key:
                current[3] = pos
                current[5] = min(current[5], score)
                continue
            if dropping == key:
                continue
            if current is not None:
                out.append(current)
                current = None
            if mode == STRICT:
                dropping = key
                continue
            # promote the leading I to B
            current = [lab.frame, lab.role, pos, pos, lab.trigger, score]
            dropping = None
            continue
        dropping = None
        if current is not None:
            out.append(current)
            current = None
        if lab.kind == "B":
            current = [lab.frame, lab.role, pos, pos, lab.trigger, score]
    if current is not None:
        out.append(current)
    return [tuple(s) for s in out]


def filter_columns(sentence: Sentence, columns: Iterable[ScoredColumn | Sequence[str]],
                   mode: str = REPAIR) -> list[FrameInstance]:
    """Turn raw columns into coherent frame instances (sorted by trigger)."""
    if mode not in (REPAIR, STRICT):
        raise ValueError(f"unknown coherence mode {mode!r}")
    cols = [c if isinstance(c, ScoredColumn) else ScoredColumn(tuple(c)) for c in columns]
    n = len(sentence)
    # one frame per trigger token: keep the most confident LU label
    best: dict[int, tuple[float, str]] = {}
    segments = []
    for col in cols:
        if len(col.labels) != n:
            raise ValueError(f"column of length {len(col.labels)} for a {n}-token sentence")
        for pos, text in enumerate(col.labels, start=1):
            lab = parse_label(text)
            if lab.kind == "LU":
                cand = (col.score(pos), lab.frame)
                prev = best.get(pos)
                if prev is None or cand[0] > prev[0] or (cand[0] == prev[0] and cand[1] < prev[1]):
                    best[pos] = cand
        segments.extend(_segments(col, mode))

    triggers_of: dict[str, list[int]] = {}
    for pos, (_, frame) in sorted(best.items()):
        triggers_of.setdefault(frame, []).append(pos)

    attached: dict[int, list[tuple]] = {pos: [] for pos in best}
    for frame, role, start, end, hint, score in segments:
        cands = triggers_of.get(frame)
        if not cands:
            continue  # FE without a frame in the sentence
        trig = hint if hint in cands else resolve_multi_trigger(cands, start, end)
        attached[trig].append((score, start, end, role))

    out = []
    for pos in sorted(best):
        score, frame = best[pos]
        kept: list[tuple] = []
        # most confident first; overlapping elements of one instance are dropped
        for s, start, end, role in sorted(attached[pos], key=lambda x: (-x[0], x[1], x[2], x[3])):
            if start <= pos <= end:
                continue
            if any(start <= e and s0 <= end for _, s0, e, _ in kept):
                continue
            kept.append((s, start, end, role))
        elements = tuple(FrameElement(role, start, end, pos, score=s) for s, start, end, role in kept)
        out.append(FrameInstance(frame, pos, elements, score=score))
    return out


def instances_to_columns(sentence: Sentence, instances: Iterable[FrameInstance]) -> list[ScoredColumn]:
    """Re-encode filtered instances, carrying their confidences per token."""
    cols = []
    for inst in instances:
        labels = encode_bio(sentence, inst)
        scores = [1.0] * len(labels)
        scores[inst.trigger - 1] = 1.0 if inst.score is None else inst.score
        for fe in inst.elements:
            for i in range(fe.start, fe.end + 1):
                scores[i - 1] = 1.0 if fe.score is None else fe.score
        cols.append(ScoredColumn(tuple(labels), tuple(scores)))
    return cols


def unlinked_elements(instances: Iterable[FrameInstance]) -> int:
    """Count elements whose trigger link does not point at their own instance."""
    return sum(1 for inst in instances for fe in inst.elements if fe.trigger_link != inst.trigger)
