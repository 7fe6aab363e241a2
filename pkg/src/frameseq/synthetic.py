"""Deterministic generator of small annotated corpora with known patterns.

Sentences are built from a handful of clause templates (verbal trigger with
subject/object/oblique elements, nominal trigger with "of"/"by" phrases, a
control construction whose complement contains a second trigger, an
idiomatic no-frame use of a trigger lemma, and frame-free filler clauses).
Dependency trees are produced together with the tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import OTHER, Corpus, Document, FrameElement, FrameInstance, Sentence, Token


@dataclass(frozen=True)
class FrameSpec:
    name: str
    roles: tuple[str, str, str]            # subject-like, object-like, oblique
    verbs: tuple[str, ...] = ()
    nouns: tuple[str, ...] = ()
    objects: tuple[str, ...] = ()          # head nouns filling the object role
    obliques: tuple[tuple[str, str], ...] = ()  # (preposition, noun)
    complement_role: str | None = None     # role that may take a "to"-clause

    @property
    def lemmas(self) -> tuple[str, ...]:
        return self.verbs + self.nouns


BUILTIN_FRAMES = (
    FrameSpec("Attack", ("Assailant", "Victim", "Place"), verbs=("attack", "bomb"), nouns=("offensive",),
              objects=("city", "fort", "village", "garrison", "harbour"),
              obliques=(("in", "valley"), ("near", "river"), ("in", "north"), ("near", "hills"))),
    FrameSpec("Building", ("Agent", "Created_entity", "Place"), verbs=("build", "erect"), nouns=("construction",),
              objects=("temple", "wall", "bridge", "tower", "road"),
              obliques=(("on", "island"), ("in", "capital"), ("on", "hill"), ("in", "square"))),
    FrameSpec("Deciding", ("Cognizer", "Decision", "Time"), verbs=("decide",), nouns=("decision",),
              objects=("plan", "retreat", "treaty", "strategy"),
              obliques=(("after", "battle"), ("before", "winter"), ("after", "meeting")),
              complement_role="Decision"),
    FrameSpec("Killing", ("Killer", "Victim", "Instrument"), verbs=("kill",), nouns=("murder",),
              objects=("prisoner", "rival", "traitor", "beast"),
              obliques=(("with", "sword"), ("with", "spear"), ("with", "poison"))),
    FrameSpec("Leadership", ("Leader", "Governed", "Time"), verbs=("command", "lead"), nouns=(),
              objects=("troops", "province", "fleet", "legion"),
              obliques=(("during", "war"), ("during", "campaign"), ("for", "years"))),
)

PERSONS = ("general", "king", "soldier", "emperor", "queen", "chief", "army", "governor", "tribe", "captain")
ADJECTIVES = ("old", "young", "great", "small", "famous", "ancient", "northern", "brave")
ADVERBS = ("then", "also", "finally", "quickly", "later")
FILLER_VERBS = ("describe", "mention", "see", "visit", "study", "admire")
FILLER_NOUNS = ("book", "letter", "map", "statue", "museum", "coin", "story", "city", "temple")
FILLER_OBLIQUES = (("in", "book"), ("at", "museum"), ("in", "spring"), ("from", "south"))
PARTICLES = ("off", "away", "around")
SOURCES = ("WGM", "WA", "CTGM", "VKH")

_IRREGULAR = {"build": "built", "lead": "led", "see": "saw", "study": "studied"}


def past(verb: str) -> str:
    if verb in _IRREGULAR:
        return _IRREGULAR[verb]
    return verb + ("d" if verb.endswith("e") else "ed")


def make_inventory(n_frames: int = 5, n_lus: int = 12, seed: int = 0) -> tuple[FrameSpec, ...]:
    """Builtin frames when they suffice, otherwise nonce frames and lemmas."""
    rng = np.random.default_rng(seed)
    frames = list(BUILTIN_FRAMES[:n_frames])
    for i in range(len(frames), n_frames):
        frames.append(FrameSpec(
            f"Frame{i:02d}", (f"Agent{i:02d}", f"Theme{i:02d}", f"Setting{i:02d}"),
            objects=tuple(f"obj{i:02d}x{j}" for j in range(4)),
            obliques=tuple((str(rng.choice(["in", "near", "with", "after"])), f"obl{i:02d}x{j}")
                           for j in range(3))))
    # bring the lemma count to n_lus: trim builtin extras, then add nonce lemmas
    lemmas = [list(f.verbs) + list(f.nouns) for f in frames]
    total = sum(len(x) for x in lemmas)
    while total > n_lus and any(len(x) > 1 for x in lemmas):
        k = max(range(len(lemmas)), key=lambda j: (len(lemmas[j]), -j))
        lemmas[k].pop()
        total -= 1
    k = 0
    while total < n_lus or any(not x for x in lemmas):
        j = k % len(frames)
        if total >= n_lus and lemmas[j]:
            k += 1
            continue
        # three verbs for every two nouns
        lemmas[j].append(f"lu{len(lemmas[j])}f{j:02d}" + ("v" if (k % 5) < 3 else "n"))
        total += 1
        k += 1
    out = []
    for spec, lem in zip(frames, lemmas):
        verbs = tuple(x for x in lem if x in spec.verbs or (x.startswith("lu") and x.endswith("v")))
        nouns = tuple(x for x in lem if x not in verbs)
        out.append(replace(spec, verbs=verbs, nouns=nouns))
    return tuple(out)


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    n_documents: int = 10
    sentences_per_doc: int = 10
    frame_inventory: tuple[FrameSpec, ...] = field(default_factory=lambda: BUILTIN_FRAMES)
    ambiguity_rate: float = 0.0
    noise_rate: float = 0.13
    filler_rate: float = 0.3
    second_clause_rate: float = 0.25
    control_rate: float = 0.5
    adjective_rate: float = 0.3
    adverb_rate: float = 0.2
    topic_concentration: float | None = None
    sources: tuple[str, ...] = SOURCES

    def __post_init__(self):
        for name in ("ambiguity_rate", "noise_rate", "filler_rate", "second_clause_rate",
                     "control_rate", "adjective_rate", "adverb_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if not self.frame_inventory or not any(f.lemmas for f in self.frame_inventory):
            raise ValueError("frame inventory needs at least one frame with a trigger lemma")
        if self.n_documents < 0 or self.sentences_per_doc < 0:
            raise ValueError("document and sentence counts must be non-negative")


class _Builder:
    def __init__(self):
        self.tokens: list[list] = []  # surface, lemma, pos, head (0-based or -1), rel
        self.frames: list[tuple[str, int, list[tuple[str, int, int]]]] = []

    def add(self, surface, lemma, pos, head=None, rel="dep") -> int:
        self.tokens.append([surface, lemma, pos, head, rel])
        return len(self.tokens) - 1

    def attach(self, child: int, head: int, rel: str):
        self.tokens[child][3] = head
        self.tokens[child][4] = rel

    def to_sentence(self, source_id: str) -> Sentence:
        toks = tuple(Token(i + 1, s, l, p, (h + 1 if h is not None and h >= 0 else 0), r)
                     for i, (s, l, p, h, r) in enumerate(self.tokens))
        frames = []
        for name, trig, fes in self.frames:
            if name == OTHER:
                frames.append(FrameInstance(OTHER, trig + 1))
            else:
                frames.append(FrameInstance(name, trig + 1, tuple(
                    FrameElement(role, s + 1, e + 1, trig + 1) for role, s, e in fes)))
        frames.sort(key=lambda f: f.trigger)
        return Sentence(toks, tuple(frames), source_id)


class _Generator:
    def __init__(self, config: GeneratorConfig):
        self.cfg = config
        self.rng = np.random.default_rng(config.seed)
        self.frames = {f.name: f for f in config.frame_inventory}
        self.pos_of: dict[str, str] = {}
        self.lexicon: dict[str, set[str]] = {}
        for f in config.frame_inventory:
            for v in f.verbs:
                self.pos_of[v] = "VERB"
                self.lexicon.setdefault(v, set()).add(f.name)
            for n in f.nouns:
                self.pos_of[n] = "NOUN"
                self.lexicon.setdefault(n, set()).add(f.name)
        lemmas = sorted(self.lexicon)
        n_amb = int(round(config.ambiguity_rate * len(lemmas))) if len(self.frames) > 1 else 0
        for lemma in self.rng.permutation(lemmas)[:n_amb]:
            others = sorted(set(self.frames) - self.lexicon[lemma])
            self.lexicon[str(lemma)].add(str(self.rng.choice(others)))
        self.triggers_of: dict[str, list[str]] = {name: [] for name in self.frames}
        for lemma in lemmas:
            for fname in sorted(self.lexicon[lemma]):
                self.triggers_of[fname].append(lemma)
        self.lemmas = lemmas
        self.frame_names = [n for n in self.frames if self.triggers_of[n]]

    # -- helpers -----------------------------------------------------------
    def choice(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def coin(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    def noun_phrase(self, b: _Builder, noun: str) -> tuple[int, int, int]:
        start = b.add("the", "the", "DET")
        adj = None
        if self.coin(self.cfg.adjective_rate):
            a = self.choice(ADJECTIVES)
            adj = b.add(a, a, "ADJ")
        head = b.add(noun, noun, "NOUN")
        b.attach(start, head, "det")
        if adj is not None:
            b.attach(adj, head, "amod")
        return start, head, head

    def prep_phrase(self, b: _Builder, prep: str, noun: str) -> tuple[int, int, int]:
        p = b.add(prep, prep, "ADP")
        _, end, head = self.noun_phrase(b, noun)
        b.attach(p, head, "case")
        return p, end, head

    def maybe_adverb(self, b: _Builder) -> int | None:
        if self.coin(self.cfg.adverb_rate):
            a = self.choice(ADVERBS)
            return b.add(a, a, "ADV")
        return None

    # -- clauses (each returns the clause root) ----------------------------
    def verbal(self, b: _Builder, frame: FrameSpec, lemma: str) -> int:
        fes = []
        s0, s1, subj = self.noun_phrase(b, self.choice(PERSONS))
        fes.append((frame.roles[0], s0, s1))
        adv = self.maybe_adverb(b)
        trig = b.add(past(lemma), lemma, "VERB")
        b.attach(subj, trig, "nsubj")
        if adv is not None:
            b.attach(adv, trig, "advmod")
        if self.coin(0.85):
            o0, o1, obj = self.noun_phrase(b, self.choice(frame.objects))
            b.attach(obj, trig, "obj")
            fes.append((frame.roles[1], o0, o1))
        if frame.obliques and self.coin(0.5):
            prep, noun = self.choice(frame.obliques)
            p0, p1, obl = self.prep_phrase(b, prep, noun)
            b.attach(obl, trig, "obl")
            fes.append((frame.roles[2], p0, p1))
        b.frames.append((frame.name, trig, fes))
        return trig

    def control(self, b: _Builder, frame: FrameSpec, lemma: str, inner: FrameSpec, inner_lemma: str) -> int:
        s0, s1, subj = self.noun_phrase(b, self.choice(PERSONS))
        trig = b.add(past(lemma), lemma, "VERB")
        b.attach(subj, trig, "nsubj")
        to = b.add("to", "to", "PART")
        trig2 = b.add(inner_lemma, inner_lemma, "VERB")
        b.attach(to, trig2, "mark")
        b.attach(trig2, trig, "xcomp")
        inner_fes = [(inner.roles[0], s0, s1)]
        o0, o1, obj = self.noun_phrase(b, self.choice(inner.objects))
        b.attach(obj, trig2, "obj")
        inner_fes.append((inner.roles[1], o0, o1))
        end = o1
        if inner.obliques and self.coin(0.4):
            prep, noun = self.choice(inner.obliques)
            p0, p1, obl = self.prep_phrase(b, prep, noun)
            b.attach(obl, trig2, "obl")
            inner_fes.append((inner.roles[2], p0, p1))
            end = p1
        b.frames.append((frame.name, trig, [(frame.roles[0], s0, s1), (frame.complement_role, to, end)]))
        b.frames.append((inner.name, trig2, inner_fes))
        return trig

    def nominal(self, b: _Builder, frame: FrameSpec, lemma: str) -> int:
        _, _, subj = self.noun_phrase(b, self.choice(PERSONS))
        fv = self.choice(FILLER_VERBS)
        verb = b.add(past(fv), fv, "VERB")
        b.attach(subj, verb, "nsubj")
        the = b.add("the", "the", "DET")
        trig = b.add(lemma, lemma, "NOUN")
        b.attach(the, trig, "det")
        b.attach(trig, verb, "obj")
        of = b.add("of", "of", "ADP")
        o0, o1, obj = self.noun_phrase(b, self.choice(frame.objects))
        b.attach(of, obj, "case")
        b.attach(obj, trig, "nmod")
        fes = [(frame.roles[1], o0, o1)]
        if self.coin(0.4):
            p0, p1, agent = self.prep_phrase(b, "by", self.choice(PERSONS))
            b.attach(agent, trig, "nmod")
            fes.append((frame.roles[0], p0, p1))
        if frame.obliques and self.coin(0.3):
            prep, noun = self.choice(frame.obliques)
            p0, p1, obl = self.prep_phrase(b, prep, noun)
            b.attach(obl, trig, "nmod")
            fes.append((frame.roles[2], p0, p1))
        b.frames.append((frame.name, trig, fes))
        return verb

    def no_frame(self, b: _Builder, lemma: str) -> int:
        """Idiomatic use of an LU lemma that evokes none of the frames."""
        if self.pos_of[lemma] == "VERB":
            _, _, subj = self.noun_phrase(b, self.choice(PERSONS))
            trig = b.add(past(lemma), lemma, "VERB")
            b.attach(subj, trig, "nsubj")
            prt = self.choice(PARTICLES)
            p = b.add(prt, prt, "ADP")
            b.attach(p, trig, "compound:prt")
            root = trig
        else:
            _, _, subj = self.noun_phrase(b, self.choice(PERSONS))
            fv = self.choice(FILLER_VERBS)
            root = b.add(past(fv), fv, "VERB")
            b.attach(subj, root, "nsubj")
            the = b.add("the", "the", "DET")
            so = b.add("so-called", "so-called", "ADJ")
            trig = b.add(lemma, lemma, "NOUN")
            b.attach(the, trig, "det")
            b.attach(so, trig, "amod")
            b.attach(trig, root, "obj")
        b.frames.append((OTHER, trig, []))
        return root

    def filler(self, b: _Builder) -> int:
        _, _, subj = self.noun_phrase(b, self.choice(PERSONS))
        fv = self.choice(FILLER_VERBS)
        verb = b.add(past(fv), fv, "VERB")
        b.attach(subj, verb, "nsubj")
        _, _, obj = self.noun_phrase(b, self.choice(FILLER_NOUNS))
        b.attach(obj, verb, "obj")
        if self.coin(0.3):
            prep, noun = self.choice(FILLER_OBLIQUES)
            _, _, obl = self.prep_phrase(b, prep, noun)
            b.attach(obl, verb, "obl")
        return verb

    def framed_clause(self, b: _Builder, weights) -> int:
        frame = self.frames[self.frame_names[int(self.rng.choice(len(self.frame_names), p=weights))]]
        lemma = self.choice(self.triggers_of[frame.name])
        if self.coin(self.cfg.noise_rate):
            return self.no_frame(b, lemma)
        if self.pos_of[lemma] == "NOUN":
            return self.nominal(b, frame, lemma)
        if frame.complement_role and self.coin(self.cfg.control_rate):
            inner_frames = [n for n in self.frame_names if n != frame.name
                            and any(self.pos_of[x] == "VERB" for x in self.triggers_of[n])
                            and self.frames[n].objects]
            if inner_frames:
                inner = self.frames[self.choice(inner_frames)]
                verbs = [x for x in self.triggers_of[inner.name] if self.pos_of[x] == "VERB"]
                return self.control(b, frame, lemma, inner, self.choice(verbs))
        return self.verbal(b, frame, lemma)

    def sentence(self, source_id: str, weights) -> Sentence:
        b = _Builder()
        if self.coin(self.cfg.filler_rate):
            root = self.filler(b)
            framed_second = False
        else:
            root = self.framed_clause(b, weights)
            framed_second = True
        b.attach(root, -1, "root")
        if self.coin(self.cfg.second_clause_rate):
            cc = b.add("and", "and", "CCONJ")
            if framed_second and self.coin(0.5):
                root2 = self.framed_clause(b, weights)
            else:
                root2 = self.filler(b)
            b.attach(cc, root2, "cc")
            b.attach(root2, root, "conj")
        p = b.add(".", ".", "PUNCT")
        b.attach(p, root, "punct")
        return b.to_sentence(source_id)

    def corpus(self) -> Corpus:
        docs = []
        n = len(self.frame_names)
        for d in range(self.cfg.n_documents):
            if self.cfg.topic_concentration:
                weights = self.rng.dirichlet([self.cfg.topic_concentration] * n)
            else:
                weights = np.full(n, 1.0 / n)
            doc_id = f"doc{d:04d}"
            sents = tuple(self.sentence(doc_id, weights) for _ in range(self.cfg.sentences_per_doc))
            docs.append(Document(doc_id, self.cfg.sources[d % len(self.cfg.sources)], sents))
        lexicon = {k: frozenset(v) for k, v in sorted(self.lexicon.items())}
        return Corpus(tuple(docs), lexicon)


def generate(config: GeneratorConfig) -> Corpus:
    """Generate a corpus; a pure function of ``config``."""
    return _Generator(config).corpus()
