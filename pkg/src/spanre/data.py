"""Corpus ingestion, overlap categories, dataset statistics and a synthetic
corpus generator with controlled Normal / SEO / EPO composition.

Corpus files are JSON lines, one sentence per line::

    {"sentText": "...", "relationMentions": [{"em1Text": "...", "em2Text": "...", "label": "..."}]}

``em1Text`` is the subject and ``em2Text`` the object.
"""

from __future__ import annotations

import enum
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .structs import Span, Triplet

log = logging.getLogger(__name__)

TOKEN_RE = re.compile(r"\w+|[^\w\s]")
NONE_LABEL = "None"


class CorpusFormatError(ValueError):
    """A corpus line is not valid JSON or lacks required fields."""


class SchemaError(ValueError):
    """A relation label is not in the schema."""


def tokenize(text: str) -> list:
    """Whitespace tokenization with punctuation split into separate tokens."""
    return TOKEN_RE.findall(text)


@dataclass
class AnnotatedExample:
    tokens: list
    triplets: list = field(default_factory=list)
    text: str = ""

    def __len__(self) -> int:
        return len(self.tokens)

    def span_text(self, span: Span) -> str:
        return " ".join(self.tokens[span.start:span.end + 1])

    def to_json(self) -> dict:
        return {
            "sentText": self.text or " ".join(self.tokens),
            "relationMentions": [
                {"em1Text": self.span_text(t.subject), "em2Text": self.span_text(t.object), "label": t.relation}
                for t in self.triplets
            ],
        }


class RelationSchema:
    """Bijection between relation labels and dense ids ``0..R-1``."""

    def __init__(self, labels: Iterable[str] = ()):
        self.labels: list = []
        self.index: dict = {}
        for lab in labels:
            self.add(lab)

    def add(self, label: str) -> int:
        if label == NONE_LABEL:
            raise SchemaError('the "None" relation cannot be part of a schema')
        if label not in self.index:
            self.index[label] = len(self.labels)
            self.labels.append(label)
        return self.index[label]

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label) -> bool:
        return label in self.index

    def __iter__(self):
        return iter(self.labels)

    def id(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise SchemaError(f"unknown relation label {label!r}") from None

    def label(self, idx: int) -> str:
        return self.labels[idx]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf8") as fh:
            json.dump({"relations": self.labels}, fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "RelationSchema":
        with open(path, encoding="utf8") as fh:
            obj = json.load(fh)
        labels = obj["relations"] if isinstance(obj, dict) else obj
        return cls(labels)


class Corpus(list):
    """A list of :class:`AnnotatedExample` with ingestion warning counts."""

    def __init__(self, items=(), warnings: Optional[Counter] = None):
        super().__init__(items)
        self.warnings = warnings if warnings is not None else Counter()


def find_subsequence(tokens: Sequence[str], needle: Sequence[str]) -> Optional[Span]:
    n = len(needle)
    if n == 0:
        return None
    for i in range(len(tokens) - n + 1):
        if tokens[i] == needle[0] and list(tokens[i:i + n]) == list(needle):
            return Span(i, i + n - 1)
    return None


def clean_triplets(triplets: Iterable[Triplet], warnings: Counter) -> list:
    """Deduplicate and drop triplets the span tags cannot represent.

    Distinct subjects must not overlap, and neither may distinct objects
    sharing a subject and relation. The first-seen triplet wins.
    """
    kept: list = []
    seen = set()
    subjects: list = []
    objects: dict = {}
    for t in triplets:
        t = Triplet(Span(*t.subject), t.relation, Span(*t.object))
        if t in seen:
            warnings["duplicate_triplet"] += 1
            continue
        if any(s != t.subject and s.overlaps(t.subject) for s in subjects):
            warnings["overlapping_subject"] += 1
            continue
        key = (t.subject, t.relation)
        if any(o != t.object and o.overlaps(t.object) for o in objects.get(key, ())):
            warnings["overlapping_object"] += 1
            continue
        seen.add(t)
        kept.append(t)
        if t.subject not in subjects:
            subjects.append(t.subject)
        objects.setdefault(key, []).append(t.object)
    return kept


def parse_example(obj: dict, schema: Optional[RelationSchema], warnings: Counter,
                  max_len: int = 120, auto_extend: bool = False) -> AnnotatedExample:
    text = obj["sentText"]
    tokens = tokenize(text)
    if len(tokens) > max_len:
        warnings["truncated_sentence"] += 1
        tokens = tokens[:max_len]
    triplets = []
    for m in obj.get("relationMentions", []):
        label = m["label"]
        if label == NONE_LABEL:
            warnings["none_relation"] += 1
            continue
        if schema is not None and label not in schema:
            if not auto_extend:
                raise SchemaError(f"unknown relation label {label!r}")
            schema.add(label)
        subj = find_subsequence(tokens, tokenize(m["em1Text"]))
        obj_span = find_subsequence(tokens, tokenize(m["em2Text"]))
        if subj is None or obj_span is None:
            warnings["entity_not_found"] += 1
            continue
        triplets.append(Triplet(subj, label, obj_span))
    return AnnotatedExample(tokens=tokens, triplets=clean_triplets(triplets, warnings), text=text)


def load_corpus(path, schema: Optional[RelationSchema] = None, max_len: int = 120,
                auto_extend: bool = False) -> Corpus:
    """Read a JSON-lines corpus, resolving entity strings to their first token match.

    ``"None"`` mentions are dropped; entities that cannot be located and
    triplets the tagger cannot represent are dropped and counted in
    ``corpus.warnings``. With ``schema=None`` every label is accepted.
    """
    warnings: Counter = Counter()
    out = Corpus(warnings=warnings)
    with open(path, encoding="utf8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict) or "sentText" not in obj:
                    raise KeyError("sentText")
                out.append(parse_example(obj, schema, warnings, max_len, auto_extend))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: malformed corpus line ({exc})") from exc
    for key, n in sorted(warnings.items()):
        log.warning("%s: %d x %s", path, n, key)
    return out


def write_corpus(corpus: Iterable[AnnotatedExample], path) -> None:
    with open(path, "w", encoding="utf8") as fh:
        for ex in corpus:
            fh.write(json.dumps(ex.to_json(), ensure_ascii=False) + "\n")


# --------------------------------------------------------------------------
# Overlap categories


class OverlapCategory(str, enum.Enum):
    NORMAL = "Normal"
    SEO = "SEO"
    EPO = "EPO"


def categorize_triplet(t: Triplet, others: Iterable[Triplet]) -> OverlapCategory:
    """Category of ``t`` relative to the other triplets of its sentence."""
    pair = frozenset((t.subject, t.object))
    shared = False
    for o in others:
        other_pair = frozenset((o.subject, o.object))
        if other_pair == pair:
            return OverlapCategory.EPO
        if pair & other_pair:
            shared = True
    return OverlapCategory.SEO if shared else OverlapCategory.NORMAL


def categorize_overlap(example) -> list:
    """Per-triplet category, parallel to ``example.triplets`` (or a triplet list)."""
    trips = list(example.triplets if hasattr(example, "triplets") else example)
    return [categorize_triplet(t, trips[:i] + trips[i + 1:]) for i, t in enumerate(trips)]


@dataclass(frozen=True)
class CorpusStats:
    relations: int
    sentences: int
    normal: int
    seo: int
    epo: int

    def as_tuple(self) -> tuple:
        return (self.relations, self.sentences, self.normal, self.seo, self.epo)


def corpus_stats(corpus: Sequence[AnnotatedExample], schema: Optional[RelationSchema] = None) -> CorpusStats:
    """Relation count, sentence count and per-category triplet counts.

    The relation count is the schema size when one is given, otherwise the
    number of distinct labels in the corpus.
    """
    counts: Counter = Counter()
    labels = set()
    for ex in corpus:
        counts.update(categorize_overlap(ex))
        labels.update(t.relation for t in ex.triplets)
    return CorpusStats(
        relations=len(schema) if schema is not None else len(labels),
        sentences=len(corpus),
        normal=counts[OverlapCategory.NORMAL],
        seo=counts[OverlapCategory.SEO],
        epo=counts[OverlapCategory.EPO],
    )


def format_stats_table(columns: dict) -> str:
    """Render ``{dataset name: CorpusStats}`` with one row per statistic."""
    rows = [("# Relations", "relations"), ("# Sentences", "sentences"),
            ("# Normal", "normal"), ("# SEO", "seo"), ("# EPO", "epo")]
    names = list(columns)
    width = max([len(r[0]) for r in rows] + [7])
    colw = [max(len(n), 8) for n in names]
    lines = ["Dataset".ljust(width) + "".join("  " + n.rjust(w) for n, w in zip(names, colw))]
    for title, attr in rows:
        lines.append(title.ljust(width) + "".join(
            "  " + str(getattr(columns[n], attr)).rjust(w) for n, w in zip(names, colw)))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# Synthetic corpora

DEFAULT_RELATIONS = (
    "parent_company_of", "shareholders_of", "founded_by", "located_in",
    "works_for", "born_in", "capital_of", "advisor_of",
)

EPO_DEMO_TOKENS = ("IBM", "is", "the", "parent", "company", "of", "and", "shareholders", "of", "Informix", ".")

_PREFIXES = ((), ("In", "2004", ","), ("According", "to", "officials", ","), ("Last", "year", ","),
             ("Reportedly", ","))
_SUFFIXES = ((), ("last", "week"), ("according", "to", "reports"))
_ENTITY_LENGTH_WEIGHTS = (0.35, 0.25, 0.2, 0.1, 0.1)
_RESERVED = {"IBM", "Informix", "In", "According", "Last", "Reportedly"}


class SyntheticConfigError(ValueError):
    pass


def _pseudo_words(rng: np.random.Generator, n: int) -> list:
    onsets = list("bdfgklmnprstvz") + ["br", "kr", "st", "tr", "pl", "sh", "ch"]
    vowels = ["a", "e", "i", "o", "u", "ai", "ou"]
    codas = ["", "", "n", "r", "s", "l", "x"]
    words, seen = [], set(_RESERVED)
    while len(words) < n:
        k = int(rng.integers(2, 4))
        w = "".join(onsets[rng.integers(len(onsets))] + vowels[rng.integers(len(vowels))] for _ in range(k))
        w = (w + codas[rng.integers(len(codas))]).capitalize()
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def cue_tokens(label: str) -> list:
    return [tok for tok in re.split(r"[_\s]+", label) if tok]


def _allocate(n: int, weights: Sequence[float]) -> list:
    """Largest-remainder split of ``n`` by nonnegative weights."""
    w = np.asarray(weights, dtype=float)
    if w.sum() == 0:
        return [0] * len(w)
    raw = n * w / w.sum()
    base = np.floor(raw).astype(int)
    order = np.argsort(-(raw - base), kind="stable")
    for i in order[: n - base.sum()]:
        base[i] += 1
    return base.tolist()


def generate_synthetic(seed: int, n: int, schema, overlap_mix: Sequence[float] = (0.4, 0.4, 0.2),
                       vocab_size: int = 400) -> Corpus:
    """Template sentences with gold annotations by construction.

    ``overlap_mix`` gives the target (Normal, SEO, EPO) fractions of
    *triplets*. Entities are made of 1-5 capitalized pseudo-words, unique
    within a sentence, so first-occurrence span resolution recovers them.
    """
    labels = list(schema)
    mix = [float(x) for x in overlap_mix]
    if len(mix) != 3 or min(mix) < 0 or abs(sum(mix) - 1.0) > 1e-9:
        raise SyntheticConfigError(f"overlap_mix must be three nonnegative fractions summing to 1, got {overlap_mix}")
    if not labels:
        raise SyntheticConfigError("schema has no relations")
    if mix[2] > 0 and len(labels) < 2:
        raise SyntheticConfigError("EPO sentences need at least two relations")
    if n < 0:
        raise SyntheticConfigError("n must be nonnegative")
    rng = np.random.default_rng(seed)
    pool = _pseudo_words(rng, vocab_size)
    # Normal sentences alternate between one and two triplets (1.5 on average); SEO/EPO carry two.
    counts = _allocate(n, [mix[0] / 1.5, mix[1] / 2.0, mix[2] / 2.0])
    plan = ["normal"] * counts[0] + ["seo"] * counts[1] + ["epo"] * counts[2]
    plan = [plan[i] for i in rng.permutation(len(plan))]

    corpus = Corpus()
    normal_seen = 0
    for kind in plan:
        if kind == "normal":
            variant = "single" if normal_seen % 2 == 0 else "pair"
            normal_seen += 1
        elif kind == "seo":
            variant = ("shared_subject", "chain", "shared_object")[int(rng.integers(3))]
        else:
            variant = "epo"
        corpus.append(_realize(rng, variant, labels, pool))
    return corpus


def _realize(rng, variant: str, labels: list, pool: list) -> AnnotatedExample:
    n_ent = {"single": 2, "pair": 4, "shared_subject": 3, "chain": 3, "shared_object": 3, "epo": 2}[variant]
    lengths = rng.choice(np.arange(1, 6), size=n_ent, p=_ENTITY_LENGTH_WEIGHTS)
    picked = rng.choice(len(pool), size=int(lengths.sum()), replace=False)
    ents, pos = [], 0
    for L in lengths:
        ents.append([pool[i] for i in picked[pos:pos + L]])
        pos += L

    def rel():
        return labels[int(rng.integers(len(labels)))]

    tokens: list = list(_PREFIXES[int(rng.integers(len(_PREFIXES)))])
    spans: list = []

    def put(ent):
        spans.append(Span(len(tokens), len(tokens) + len(ent) - 1))
        tokens.extend(ent)
        return spans[-1]

    def words(*ws):
        tokens.extend(ws)

    trips = []
    if variant == "single":
        r = rel()
        a = put(ents[0]); words("is", "the", *cue_tokens(r)); b = put(ents[1])
        trips = [Triplet(a, r, b)]
    elif variant == "pair":
        r1, r2 = rel(), rel()
        a = put(ents[0]); words("is", "the", *cue_tokens(r1)); b = put(ents[1])
        words(",", "while"); c = put(ents[2]); words("is", "the", *cue_tokens(r2)); d = put(ents[3])
        trips = [Triplet(a, r1, b), Triplet(c, r2, d)]
    elif variant == "shared_subject":
        r1, r2 = rel(), rel()
        a = put(ents[0]); words("is", "the", *cue_tokens(r1)); b = put(ents[1])
        words("and", "the", *cue_tokens(r2)); c = put(ents[2])
        trips = [Triplet(a, r1, b), Triplet(a, r2, c)]
    elif variant == "chain":
        r1, r2 = rel(), rel()
        a = put(ents[0]); words("is", "the", *cue_tokens(r1)); b = put(ents[1])
        words(",", "which", "is", "the", *cue_tokens(r2)); c = put(ents[2])
        trips = [Triplet(a, r1, b), Triplet(b, r2, c)]
    elif variant == "shared_object":
        r = rel()
        a = put(ents[0]); words("and"); b = put(ents[1]); words("are", "the", *cue_tokens(r)); c = put(ents[2])
        trips = [Triplet(a, r, c), Triplet(b, r, c)]
    else:
        i, j = rng.choice(len(labels), size=2, replace=False)
        r1, r2 = labels[int(i)], labels[int(j)]
        a = put(ents[0]); words("is", "the", *cue_tokens(r1), "and", *cue_tokens(r2)); b = put(ents[1])
        trips = [Triplet(a, r1, b), Triplet(a, r2, b)]
    words(*_SUFFIXES[int(rng.integers(len(_SUFFIXES)))], ".")
    return AnnotatedExample(tokens=tokens, triplets=trips, text=" ".join(tokens))


def epo_demo_example() -> AnnotatedExample:
    """One sentence whose two triplets share the same entity pair."""
    tokens = list(EPO_DEMO_TOKENS)
    ibm, informix = Span(0, 0), Span(9, 9)
    return AnnotatedExample(
        tokens=tokens,
        triplets=[Triplet(ibm, "parent_company_of", informix), Triplet(ibm, "shareholders_of", informix)],
        text=" ".join(tokens),
    )
