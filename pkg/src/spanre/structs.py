"""Small value types shared across the pipeline."""

from __future__ import annotations

from typing import Hashable, NamedTuple


class Span(NamedTuple):
    """Inclusive token range ``[start, end]``."""

    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def valid_for(self, T: int) -> bool:
        return 0 <= self.start <= self.end < T

    def overlaps(self, other: "Span") -> bool:
        return self.start <= other.end and other.start <= self.end

    def check(self, T: int) -> "Span":
        if not self.valid_for(T):
            raise ValueError(f"span {tuple(self)} is invalid for a sentence of {T} tokens")
        return self


class Triplet(NamedTuple):
    """``(subject, relation, object)``; relation is an id or a label."""

    subject: Span
    relation: Hashable
    object: Span
