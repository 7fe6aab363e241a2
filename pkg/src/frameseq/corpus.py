"""Corpus data model, B/I/O multi-label encoding and JSON-lines I/O.

Token indices are 1-based everywhere.  A frame annotation is flattened into
one label column per frame instance::

    O                          outside any segment of this instance
    LU:<Frame>                 the trigger token
    B:<Frame>:<Role>:<Trig>    first token of a frame element
    I:<Frame>:<Role>:<Trig>    continuation of a frame element
"""

from __future__ import annotations

import json
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

OTHER = "OTHER"
OUTSIDE = "O"
FORMAT_TAG = "frame-corpus/1"


class CorpusError(ValueError):
    """Base class for corpus problems."""


class EncodingError(CorpusError):
    pass


class MalformedColumnError(CorpusError):
    pass


class CorpusFormatError(CorpusError):
    """Schema violation in a corpus file; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class ValidationError(CorpusError):
    pass


class AnnotationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Token:
    index: int
    surface: str
    lemma: str
    pos: str
    head: int
    deprel: str


@dataclass(frozen=True)
class FrameElement:
    role: str
    start: int
    end: int
    trigger_link: int
    score: float | None = field(default=None, compare=False)

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class FrameInstance:
    frame: str
    trigger: int
    elements: tuple[FrameElement, ...] = ()
    score: float | None = field(default=None, compare=False)

    def __post_init__(self):
        # canonical order so structural equality ignores input order
        ordered = tuple(sorted(self.elements, key=lambda e: (e.start, e.end, e.role)))
        object.__setattr__(self, "elements", ordered)

    @property
    def is_other(self) -> bool:
        return self.frame == OTHER


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    frames: tuple[FrameInstance, ...] = ()
    source_id: str = ""
    # trigger positions whose annotation is still pending (annotation loop)
    pending: frozenset[int] = field(default_factory=frozenset)

    def __len__(self):
        return len(self.tokens)

    def token(self, index: int) -> Token:
        return self.tokens[index - 1]

    @property
    def annotated_frames(self) -> tuple[FrameInstance, ...]:
        """Frame instances excluding OTHER (no-frame) markers."""
        return tuple(f for f in self.frames if not f.is_other)

    def with_frames(self, frames: Iterable[FrameInstance]) -> "Sentence":
        return Sentence(self.tokens, tuple(frames), self.source_id, self.pending)


@dataclass(frozen=True)
class Document:
    id: str
    source: str
    sentences: tuple[Sentence, ...]


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]
    lu_lexicon: Mapping[str, frozenset[str]] = field(default_factory=dict)

    def sentences(self):
        """Yield ``((doc_id, position), sentence)`` for every sentence."""
        for doc in self.documents:
            for i, sent in enumerate(doc.sentences):
                yield (doc.id, i), sent

    def subset(self, doc_ids: Iterable[str]) -> "Corpus":
        keep = set(doc_ids)
        return Corpus(tuple(d for d in self.documents if d.id in keep), self.lu_lexicon)

    @property
    def n_sentences(self) -> int:
        return sum(len(d.sentences) for d in self.documents)


# ---------------------------------------------------------------------------
# labels


@dataclass(frozen=True)
class Label:
    kind: str  # "O", "LU", "B" or "I"
    frame: str | None = None
    role: str | None = None
    trigger: int | None = None

    def __str__(self):
        return format_label(self)


def parse_label(text: str) -> Label:
    """Parse a column label.  B/I labels may omit the trigger index."""
    if text == OUTSIDE:
        return Label(OUTSIDE)
    parts = text.split(":")
    kind = parts[0]
    if kind == "LU" and len(parts) == 2 and parts[1]:
        return Label("LU", parts[1])
    if kind in ("B", "I") and len(parts) in (3, 4) and parts[1] and parts[2]:
        trigger = None
        if len(parts) == 4:
            try:
                trigger = int(parts[3])
            except ValueError:
                raise MalformedColumnError(f"bad trigger index in label {text!r}") from None
        return Label(kind, parts[1], parts[2], trigger)
    raise MalformedColumnError(f"unparseable label {text!r}")


def format_label(label: Label) -> str:
    if label.kind == OUTSIDE:
        return OUTSIDE
    if label.kind == "LU":
        return f"LU:{label.frame}"
    base = f"{label.kind}:{label.frame}:{label.role}"
    return base if label.trigger is None else f"{base}:{label.trigger}"


def _check_name(name: str, what: str):
    if not name or ":" in name or any(c.isspace() for c in name):
        raise EncodingError(f"{what} name {name!r} must be non-empty without ':' or whitespace")


def encode_bio(sentence: Sentence, instance: FrameInstance) -> list[str]:
    """Flatten one frame instance into a label column over ``sentence``.

    An OTHER marker encodes as an all-O column.
    """
    n = len(sentence)
    labels = [OUTSIDE] * n
    if instance.is_other:
        return labels
    _check_name(instance.frame, "frame")
    if not 1 <= instance.trigger <= n:
        raise EncodingError(f"trigger {instance.trigger} outside sentence of length {n}")
    labels[instance.trigger - 1] = f"LU:{instance.frame}"
    covered: dict[int, FrameElement] = {}
    for fe in instance.elements:
        _check_name(fe.role, "role")
        if not (1 <= fe.start <= fe.end <= n):
            raise EncodingError(f"span [{fe.start},{fe.end}] outside sentence of length {n}")
        for i in range(fe.start, fe.end + 1):
            if i in covered:
                raise EncodingError(
                    f"elements {covered[i].role} and {fe.role} overlap at token {i}")
            covered[i] = fe
            if i == instance.trigger:
                # the trigger label wins; the element cannot be expressed
                raise EncodingError(f"element {fe.role} covers its own trigger {i}")
            prefix = "B" if i == fe.start else "I"
            labels[i - 1] = f"{prefix}:{instance.frame}:{fe.role}:{instance.trigger}"
    return labels


def encode_sentence(sentence: Sentence) -> list[list[str]]:
    """One column per annotated (non-OTHER) frame instance."""
    return [encode_bio(sentence, f) for f in sentence.annotated_frames]


def column_segments(column: Sequence[str], strict: bool = True):
    """Split a column into ``(frame, role, start, end, trigger_hint)`` runs.

    Leading-I runs raise in strict mode and are dropped otherwise.  Also
    returns the list of ``(position, frame)`` LU labels.
    """
    segments = []
    lus = []
    current = None  # [frame, role, trigger, start, end]
    dropping = None  # (frame, role, trigger) of a run being discarded
    for pos, text in enumerate(column, start=1):
        lab = parse_label(text)
        if lab.kind == "I":
            key = (lab.frame, lab.role, lab.trigger)
            if current is not None and tuple(current[:3]) == key:
                current[4] = pos
                continue
            if dropping == key:
                continue
            if strict:
                raise MalformedColumnError(f"I label at token {pos} without opening B: {text}")
            if current is not None:
                segments.append(tuple(current))
                current = None
            dropping = key
            continue
        dropping = None
        if current is not None:
            segments.append(tuple(current))
            current = None
        if lab.kind == "B":
            current = [lab.frame, lab.role, lab.trigger, pos, pos]
        elif lab.kind == "LU":
            lus.append((pos, lab.frame))
    if current is not None:
        segments.append(tuple(current))
    return [(f, r, s, e, t) for f, r, t, s, e in segments], lus


def decode_bio(sentence: Sentence, column: Sequence[str], strict: bool = True) -> FrameInstance | None:
    """Inverse of :func:`encode_bio`; an all-O column decodes to ``None``."""
    if len(column) != len(sentence):
        raise MalformedColumnError(
            f"column has {len(column)} labels for a sentence of {len(sentence)} tokens")
    segments, lus = column_segments(column, strict=strict)
    if not lus:
        if segments and strict:
            raise MalformedColumnError("column has frame elements but no LU label")
        return None
    if len(lus) > 1:
        if strict:
            raise MalformedColumnError(f"column has {len(lus)} LU labels")
    trigger, frame = lus[0]
    elements = []
    for f, role, start, end, hint in segments:
        if f != frame or (hint is not None and hint != trigger):
            if strict:
                raise MalformedColumnError(
                    f"segment {role}[{start},{end}] does not belong to {frame}@{trigger}")
            continue
        elements.append(FrameElement(role, start, end, trigger))
    return FrameInstance(frame, trigger, tuple(elements))


def export_table(corpus: Corpus, abbreviations: Mapping[str, str] | None = None) -> str:
    """Tab-separated blocks: index, surface, then one column per frame instance.

    ``abbreviations`` shortens frame and role names inside B/I labels only
    (display form); the LU labels keep the full frame name.
    """
    blocks = []
    for _, sent in corpus.sentences():
        columns = [render_column(c, abbreviations) for c in encode_sentence(sent)]
        rows = []
        for i, tok in enumerate(sent.tokens):
            rows.append("\t".join([str(tok.index), tok.surface] + [c[i] for c in columns]))
        blocks.append("\n".join(rows))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def render_column(column: Sequence[str], abbreviations: Mapping[str, str] | None = None) -> list[str]:
    if not abbreviations:
        return list(column)
    out = []
    for text in column:
        lab = parse_label(text)
        if lab.kind in ("B", "I"):
            lab = Label(lab.kind, abbreviations.get(lab.frame, lab.frame),
                        abbreviations.get(lab.role, lab.role), lab.trigger)
        out.append(format_label(lab))
    return out


# ---------------------------------------------------------------------------
# validation


def validate_sentence(sent: Sentence, where: str = "sentence", lexicon: Mapping | None = None):
    n = len(sent)
    for pos, tok in enumerate(sent.tokens, start=1):
        if tok.index != pos:
            raise ValidationError(f"{where}: token indices must be contiguous from 1, got {tok.index} at {pos}")
        if tok.head == tok.index:
            raise ValidationError(f"{where}: token {pos} is its own head")
        if not 0 <= tok.head <= n:
            raise ValidationError(f"{where}: token {pos} head {tok.head} out of range")
    triggers = set()
    for fr in sent.frames:
        if not 1 <= fr.trigger <= n:
            raise ValidationError(f"{where}: dangling trigger index {fr.trigger} (sentence has {n} tokens)")
        if fr.trigger in triggers:
            raise ValidationError(f"{where}: token {fr.trigger} triggers more than one frame")
        triggers.add(fr.trigger)
        if lexicon is not None:
            lemma = sent.token(fr.trigger).lemma
            cands = lexicon.get(lemma)
            if cands is None:
                raise ValidationError(f"{where}: trigger lemma {lemma!r} not in LU lexicon")
            if not fr.is_other and fr.frame not in cands:
                raise ValidationError(f"{where}: frame {fr.frame} not a candidate of lemma {lemma!r}")
        if fr.is_other and fr.elements:
            raise ValidationError(f"{where}: OTHER marker at {fr.trigger} carries frame elements")
        spans = []
        for fe in fr.elements:
            if not (1 <= fe.start <= fe.end <= n):
                raise ValidationError(
                    f"{where}: FE {fe.role} span [{fe.start},{fe.end}] exceeds sentence length {n}")
            if fe.trigger_link != fr.trigger:
                raise ValidationError(f"{where}: FE {fe.role} linked to {fe.trigger_link}, owner is {fr.trigger}")
            if fe.start <= fr.trigger <= fe.end:
                warnings.warn(f"{where}: FE {fe.role} covers its own trigger {fr.trigger}", AnnotationWarning)
            spans.append((fe.start, fe.end, fe.role))
        spans.sort()
        for (s0, e0, r0), (s1, e1, r1) in zip(spans, spans[1:]):
            if s1 <= e0:
                raise ValidationError(f"{where}: FEs {r0} and {r1} of {fr.frame}@{fr.trigger} overlap")


def validate_corpus(corpus: Corpus):
    for (doc_id, i), sent in corpus.sentences():
        validate_sentence(sent, f"sentence {doc_id}:{i}", corpus.lu_lexicon)


# ---------------------------------------------------------------------------
# JSON-lines I/O


def _frame_to_json(fr: FrameInstance) -> dict:
    out = {"frame": fr.frame, "trigger": fr.trigger,
           "fes": [_fe_to_json(fe) for fe in fr.elements]}
    if fr.score is not None:
        out["score"] = fr.score
    return out


def _fe_to_json(fe: FrameElement) -> dict:
    out = {"role": fe.role, "start": fe.start, "end": fe.end}
    if fe.score is not None:
        out["score"] = fe.score
    return out


def document_to_json(doc: Document) -> dict:
    sentences = []
    for sent in doc.sentences:
        entry = {
            "tokens": [{"i": t.index, "w": t.surface, "lemma": t.lemma, "pos": t.pos,
                        "head": t.head, "rel": t.deprel} for t in sent.tokens],
            "frames": [_frame_to_json(f) for f in sent.frames],
        }
        if sent.pending:
            entry["pending"] = sorted(sent.pending)
        sentences.append(entry)
    return {"id": doc.id, "source": doc.source, "sentences": sentences}


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"format": FORMAT_TAG,
                  "lu_lexicon": {k: sorted(v) for k, v in sorted(corpus.lu_lexicon.items())}}
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for doc in corpus.documents:
            fh.write(json.dumps(document_to_json(doc), ensure_ascii=False) + "\n")


def _require(obj, key, kind, line, what):
    if not isinstance(obj, dict) or key not in obj:
        raise CorpusFormatError(f"{what}: missing field {key!r}", line)
    value = obj[key]
    if kind is int and isinstance(value, bool):
        raise CorpusFormatError(f"{what}: field {key!r} must be int", line)
    if not isinstance(value, kind):
        raise CorpusFormatError(f"{what}: field {key!r} must be {kind.__name__ if isinstance(kind, type) else kind}", line)
    return value


def _parse_score(obj, line, what):
    score = obj.get("score")
    if score is not None and (isinstance(score, bool) or not isinstance(score, (int, float))):
        raise CorpusFormatError(f"{what}: score must be a number", line)
    return None if score is None else float(score)


def document_from_json(obj, line: int | None = None) -> Document:
    doc_id = _require(obj, "id", str, line, "document")
    source = obj.get("source", "")
    if not isinstance(source, str):
        raise CorpusFormatError("document: field 'source' must be str", line)
    sentences = []
    for si, s in enumerate(_require(obj, "sentences", list, line, "document")):
        what = f"sentence {doc_id}:{si}"
        tokens = []
        for t in _require(s, "tokens", list, line, what):
            tokens.append(Token(
                index=_require(t, "i", int, line, what),
                surface=_require(t, "w", str, line, what),
                lemma=_require(t, "lemma", str, line, what),
                pos=_require(t, "pos", str, line, what),
                head=_require(t, "head", int, line, what),
                deprel=_require(t, "rel", str, line, what),
            ))
        frames = []
        for f in s.get("frames", []):
            name = _require(f, "frame", str, line, what)
            trigger = _require(f, "trigger", int, line, what)
            fes = []
            for fe in f.get("fes", []):
                if isinstance(fe, dict) and "spans" in fe:
                    spans = fe["spans"]
                    if not isinstance(spans, list) or len(spans) != 1:
                        raise ValidationError(f"{what}: discontiguous FE {fe.get('role')!r} cannot be encoded")
                    fe = {**fe, "start": spans[0][0], "end": spans[0][1]}
                fes.append(FrameElement(
                    role=_require(fe, "role", str, line, what),
                    start=_require(fe, "start", int, line, what),
                    end=_require(fe, "end", int, line, what),
                    trigger_link=trigger,
                    score=_parse_score(fe, line, what),
                ))
            frames.append(FrameInstance(name, trigger, tuple(fes), score=_parse_score(f, line, what)))
        pending = s.get("pending", [])
        sentences.append(Sentence(tuple(tokens), tuple(frames), doc_id, frozenset(pending)))
    return Document(doc_id, source, tuple(sentences))


def lexicon_from_annotations(documents: Iterable[Document]) -> dict[str, frozenset[str]]:
    lex: dict[str, set[str]] = {}
    for doc in documents:
        for sent in doc.sentences:
            for fr in sent.frames:
                if not 1 <= fr.trigger <= len(sent):
                    continue  # reported by validation
                cands = lex.setdefault(sent.token(fr.trigger).lemma, set())
                if not fr.is_other:
                    cands.add(fr.frame)
    return {k: frozenset(v) for k, v in lex.items()}


def read_corpus(path, validate: bool = True) -> Corpus:
    """Read a JSON-lines corpus; an optional first header line carries the lexicon."""
    documents = []
    lexicon = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"invalid JSON ({exc.msg})", lineno) from None
            if isinstance(obj, dict) and "format" in obj and "sentences" not in obj:
                if obj["format"] != FORMAT_TAG:
                    raise CorpusFormatError(f"unsupported format {obj['format']!r}", lineno)
                lexicon = {k: frozenset(v) for k, v in obj.get("lu_lexicon", {}).items()}
                continue
            try:
                documents.append(document_from_json(obj, lineno))
            except ValidationError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from None
    if lexicon is None:
        lexicon = lexicon_from_annotations(documents)
    corpus = Corpus(tuple(documents), lexicon)
    if validate:
        validate_corpus(corpus)
    return corpus


# ---------------------------------------------------------------------------
# statistics


@dataclass
class SourceStats:
    sentences: int = 0
    words: int = 0
    frames: int = 0
    other: int = 0
    fes: int = 0
    lexicon: int = 0
    sentences_with_frame: int = 0

    @property
    def pct_with_frame(self) -> float:
        return 100.0 * self.sentences_with_frame / self.sentences if self.sentences else 0.0

    @property
    def fe_per_frame(self) -> float:
        return self.fes / self.frames if self.frames else 0.0

    def as_dict(self) -> dict:
        return {"sentences": self.sentences, "words": self.words, "frames": self.frames,
                "other": self.other, "fes": self.fes, "lexicon": self.lexicon,
                "sentences_with_frame": self.sentences_with_frame,
                "pct_with_frame": round(self.pct_with_frame, 1),
                "fe_per_frame": round(self.fe_per_frame, 3)}


@dataclass
class StatsReport:
    per_source: dict[str, SourceStats]
    total: SourceStats
    lu_lexicon_size: int = 0

    def as_dict(self) -> dict:
        return {"per_source": {k: v.as_dict() for k, v in self.per_source.items()},
                "total": self.total.as_dict(), "lu_lexicon_size": self.lu_lexicon_size}

    def render(self) -> str:
        head = ["source", "sentences", "words", "frames", "other", "fes", "lexicon", "%with_frame", "fe/frame"]
        rows = [head]
        for name, st in list(self.per_source.items()) + [("All", self.total)]:
            rows.append([name, st.sentences, st.words, st.frames, st.other, st.fes, st.lexicon,
                         f"{st.pct_with_frame:.1f}", f"{st.fe_per_frame:.2f}"])
        return "\n".join("\t".join(str(c) for c in r) for r in rows) + "\n"


def corpus_stats(corpus: Corpus) -> StatsReport:
    """Per-source and total counts; lexicon is the number of distinct word forms."""
    per: dict[str, SourceStats] = {}
    vocab: dict[str, set[str]] = {}
    all_vocab: set[str] = set()
    for doc in corpus.documents:
        st = per.setdefault(doc.source, SourceStats())
        words = vocab.setdefault(doc.source, set())
        for sent in doc.sentences:
            st.sentences += 1
            st.words += len(sent)
            framed = sent.annotated_frames
            st.frames += len(framed)
            st.other += sum(1 for f in sent.frames if f.is_other)
            st.fes += sum(len(f.elements) for f in framed)
            st.sentences_with_frame += bool(framed)
            words.update(t.surface for t in sent.tokens)
        all_vocab |= words
    total = SourceStats()
    for name, st in per.items():
        st.lexicon = len(vocab[name])
        for attr in ("sentences", "words", "frames", "other", "fes", "sentences_with_frame"):
            setattr(total, attr, getattr(total, attr) + getattr(st, attr))
    total.lexicon = len(all_vocab)
    return StatsReport(per, total, len(corpus.lu_lexicon))


def lemma_counts(corpus: Corpus) -> Counter:
    """Occurrences of lexicon lemmas in the corpus."""
    counts: Counter = Counter()
    for _, sent in corpus.sentences():
        for tok in sent.tokens:
            if tok.lemma in corpus.lu_lexicon:
                counts[tok.lemma] += 1
    return counts
