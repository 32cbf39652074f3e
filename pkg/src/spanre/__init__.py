"""Span-based joint extraction of entities and overlapping relations.

The package is organized bottom up: :mod:`spanre.tensor` (autodiff),
:mod:`spanre.representation` (sentence encoder), :mod:`spanre.attention`
(subject fusion), :mod:`spanre.tagger` (span heads and decoding),
:mod:`spanre.training`, :mod:`spanre.data` / :mod:`spanre.evaluation`, and
the :mod:`spanre.cli` front end.
"""

from .structs import Span, Triplet

__version__ = "0.1.0"

__all__ = ["Span", "Triplet", "__version__"]
