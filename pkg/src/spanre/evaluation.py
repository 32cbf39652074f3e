"""Exact-match triplet scoring with overlap-category and entity-length breakdowns."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

from .data import NONE_LABEL, OverlapCategory, categorize_triplet
from .structs import Triplet

LENGTH_BUCKETS = ("1", "2", "3", "4", "5+")


class AlignmentError(ValueError):
    """Predictions and gold do not cover the same sentences."""


def length_bucket(t: Triplet) -> str:
    n = max(t.subject[1] - t.subject[0] + 1, t.object[1] - t.object[0] + 1)
    return LENGTH_BUCKETS[min(n, 5) - 1]


def _prf(correct: int, pred: int, gold: int) -> tuple:
    p = correct / pred if pred else 0.0
    r = correct / gold if gold else 0.0
    # 2PR/(P+R) reduces to 2c/(p+g); this form is exactly rounded
    f = 2 * correct / (pred + gold) if correct else 0.0
    return p, r, f


@dataclass
class Score:
    gold: int = 0
    pred: int = 0
    correct: int = 0

    @property
    def precision(self) -> float:
        return _prf(self.correct, self.pred, self.gold)[0]

    @property
    def recall(self) -> float:
        return _prf(self.correct, self.pred, self.gold)[1]

    @property
    def f1(self) -> float:
        return _prf(self.correct, self.pred, self.gold)[2]

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "gold": self.gold, "pred": self.pred, "correct": self.correct}


@dataclass
class EvalReport:
    overall: Score
    by_category: dict = field(default_factory=dict)
    by_length: dict = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return self.overall.precision

    @property
    def recall(self) -> float:
        return self.overall.recall

    @property
    def f1(self) -> float:
        return self.overall.f1

    def to_dict(self) -> dict:
        return {
            "overall": self.overall.to_dict(),
            "by_category": {k: v.to_dict() for k, v in self.by_category.items()},
            "by_length": {k: v.to_dict() for k, v in self.by_length.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=False)

    def format_table(self, breakdown: str = "all") -> str:
        rows = [("overall", self.overall)]
        if breakdown in ("overlap", "all"):
            rows += [(k, v) for k, v in self.by_category.items()]
        if breakdown in ("length", "all"):
            rows += [(f"length {k}", v) for k, v in self.by_length.items()]
        head = f"{'subset':<12}{'Precise':>9}{'Recall':>9}{'F1':>9}{'gold':>7}{'pred':>7}{'correct':>9}"
        lines = [head]
        for name, s in rows:
            lines.append(f"{name:<12}{s.precision:>9.3f}{s.recall:>9.3f}{s.f1:>9.3f}"
                         f"{s.gold:>7d}{s.pred:>7d}{s.correct:>9d}")
        return "\n".join(lines)


def _aligned(pred, gold) -> list:
    if isinstance(gold, Mapping):
        if not isinstance(pred, Mapping) or set(pred) != set(gold):
            missing = set(gold) ^ set(pred if isinstance(pred, Mapping) else ())
            raise AlignmentError(f"prediction and gold sentence ids differ: {sorted(map(str, missing))[:5]}")
        return [(pred[k], gold[k]) for k in gold]
    if isinstance(pred, Mapping) or len(pred) != len(gold):
        raise AlignmentError(f"{len(pred)} prediction sets for {len(gold)} gold sentences")
    return list(zip(pred, gold))


def evaluate(pred, gold) -> EvalReport:
    """Micro precision / recall / F1 over exact-match triplets.

    ``pred`` and ``gold`` are aligned sequences (or id-keyed mappings) of
    triplet collections. A triplet is correct only if both spans and the
    relation match. Categories come from the gold triplets of the sentence;
    a wrong prediction is categorized against that same gold set.
    """
    overall = Score()
    by_cat = {c.value: Score() for c in OverlapCategory}
    by_len = {b: Score() for b in LENGTH_BUCKETS}
    for p_set, g_set in _aligned(pred, gold):
        p_set = {Triplet(*t) for t in p_set if t[1] != NONE_LABEL}
        g_list = list(dict.fromkeys(Triplet(*t) for t in g_set if t[1] != NONE_LABEL))
        g_set = set(g_list)
        for t in g_list:
            cat = categorize_triplet(t, [o for o in g_list if o != t]).value
            hit = t in p_set
            for s in (overall, by_cat[cat], by_len[length_bucket(t)]):
                s.gold += 1
                s.correct += hit
        for t in p_set:
            cat = categorize_triplet(t, [o for o in g_list if o != t]).value
            for s in (overall, by_cat[cat], by_len[length_bucket(t)]):
                s.pred += 1
    return EvalReport(overall=overall, by_category=by_cat, by_length=by_len)
