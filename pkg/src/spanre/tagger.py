"""Span taggers and their decoders.

Subjects use one start and one end tag per token. Objects use a ``T x R``
start matrix and end matrix, one column per relation, so a single object
can carry several relations and a single subject can own several objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import tensor as tn
from .attention import fuse
from .model import ModelParams, SentenceInput, featurize
from .representation import encode
from .structs import Span, Triplet
from .tensor import Tensor


@dataclass
class SubjectTags:
    start: np.ndarray  # (T,)
    end: np.ndarray  # (T,)


@dataclass
class ObjRelTags:
    start: np.ndarray  # (T, R)
    end: np.ndarray  # (T, R)


def subject_logits(P: Tensor, params: ModelParams) -> tuple:
    """Start and end logits, each of shape ``(T,)``."""
    T = P.shape[0]
    out = []
    for head in ("sub_start", "sub_end"):
        h = P
        if params.config.subject_mlp_hidden:
            h = tn.tanh(tn.add(tn.matmul(P, params[f"{head}.hidden.weight"]), params[f"{head}.hidden.bias"]))
        z = tn.add(tn.matmul(h, params[f"{head}.out.weight"]), params[f"{head}.out.bias"])
        out.append(tn.reshape(z, (T,)))
    return tuple(out)


def objrel_logits(F: Tensor, params: ModelParams) -> tuple:
    """Start and end logits, each of shape ``(T, R)``."""
    return tuple(
        tn.add(tn.matmul(F, params[f"{head}.weight"]), params[f"{head}.bias"])
        for head in ("obj_start", "obj_end")
    )


def predict_subject_tags(P: Tensor, params: ModelParams) -> SubjectTags:
    start, end = subject_logits(P, params)
    return SubjectTags(tn.sigmoid(start).data, tn.sigmoid(end).data)


def predict_objrel_tags(F: Tensor, params: ModelParams) -> ObjRelTags:
    start, end = objrel_logits(F, params)
    return ObjRelTags(tn.sigmoid(start).data, tn.sigmoid(end).data)


def decode_spans(start: Sequence, end: Sequence) -> list:
    """Pair binary start/end tags into spans.

    Starts are taken left to right; each claims the nearest end at or after
    it that no earlier start has claimed. Unpaired tags are dropped.
    """
    start = np.asarray(start)
    end = np.asarray(end)
    if start.shape != end.shape or start.ndim != 1:
        raise ValueError(f"start/end tags must be equal-length vectors, got {start.shape} and {end.shape}")
    ends = np.flatnonzero(end).tolist()
    spans = []
    j = 0
    for s in np.flatnonzero(start).tolist():
        # claimed ends are a prefix of the eligible ones, so a single pointer suffices
        while j < len(ends) and ends[j] < s:
            j += 1
        if j == len(ends):
            break
        spans.append(Span(s, ends[j]))
        j += 1
    return spans


def decode_objrel(tags: ObjRelTags, threshold: float = 0.5) -> list:
    """``(object span, relation id)`` pairs, decoding each relation column independently."""
    start = np.asarray(tags.start) > threshold
    end = np.asarray(tags.end) > threshold
    if start.shape != end.shape or start.ndim != 2:
        raise ValueError(f"obj_rel tags must be equal T x R matrices, got {start.shape} and {end.shape}")
    out = []
    for r in range(start.shape[1]):
        out.extend((span, r) for span in decode_spans(start[:, r], end[:, r]))
    return out


def decode_subjects(tags: SubjectTags, threshold: float = 0.5) -> list:
    return decode_spans(np.asarray(tags.start) > threshold, np.asarray(tags.end) > threshold)


def encode_gold_tags(T: int, triplets: Iterable[Triplet], num_relations: int) -> tuple:
    """Gold 0/1 targets: subject tags plus one :class:`ObjRelTags` per distinct gold subject.

    Relations must already be integer ids.
    """
    sub = SubjectTags(np.zeros(T), np.zeros(T))
    per_subject: dict = {}
    for trip in triplets:
        s, r, o = Span(*trip.subject), trip.relation, Span(*trip.object)
        if not (s.valid_for(T) and o.valid_for(T)):
            raise ValueError(f"triplet {trip} has a span outside a {T}-token sentence")
        if not (isinstance(r, (int, np.integer)) and 0 <= r < num_relations):
            raise ValueError(f"relation id {r!r} is outside [0, {num_relations})")
        sub.start[s.start] = 1.0
        sub.end[s.end] = 1.0
        tags = per_subject.get(s)
        if tags is None:
            tags = per_subject[s] = ObjRelTags(np.zeros((T, num_relations)), np.zeros((T, num_relations)))
        tags.start[o.start, r] = 1.0
        tags.end[o.end, r] = 1.0
    return sub, dict(sorted(per_subject.items()))


def decode_gold_tags(sub: SubjectTags, per_subject: dict) -> set:
    """Inverse of :func:`encode_gold_tags` for well-formed tag sets."""
    out = set()
    for s in decode_subjects(sub):
        tags = per_subject.get(s)
        if tags is None:
            continue
        for o, r in decode_objrel(tags):
            out.add(Triplet(s, r, o))
    return out


def extract_triplets(sentence, params: ModelParams, P: Optional[Tensor] = None) -> set:
    """Full inference for one sentence: subjects first, then objects and
    relations per subject. Relations are returned as integer ids."""
    sent = sentence if isinstance(sentence, SentenceInput) else featurize(list(sentence), params)
    if P is None:
        P = encode(sent, params, train=False)
    tau = params.config.threshold
    out = set()
    for subj in decode_subjects(predict_subject_tags(P, params), tau):
        F = fuse(P, subj, params)
        for obj, r in decode_objrel(predict_objrel_tags(F, params), tau):
            out.add(Triplet(subj, r, obj))
    return out
