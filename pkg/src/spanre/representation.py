"""Sentence encoder: word + multi-scale character CNN features, a multi-branch
convolutional context layer, and a gated relation layer giving global context.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from . import tensor as tn
from .model import ModelParams, SentenceInput, Vocab, featurize
from .tensor import Tensor

log = logging.getLogger(__name__)

__all__ = [
    "Vocab",
    "load_word_vectors",
    "encode_chars",
    "encode_chars_batch",
    "embed_sentence",
    "context_features",
    "gated_relation",
    "encode",
]


def load_word_vectors(path, dim: int, vocab: Optional[Vocab] = None) -> dict:
    """Read GloVe-style ``token v1 ... v_dim`` lines.

    Only tokens present in ``vocab`` are kept when one is given. Lines with
    the wrong number of values are skipped.
    """
    vectors = {}
    skipped = 0
    with open(path, encoding="utf8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                skipped += 1
                continue
            tok = parts[0]
            if vocab is not None and tok not in vocab:
                continue
            vectors[tok] = np.array(parts[1:], dtype=np.float64)
    if skipped:
        log.warning("skipped %d malformed word-vector lines in %s", skipped, path)
    return vectors


def encode_chars(char_ids: np.ndarray, params: ModelParams) -> Tensor:
    """Character features of one word: per-kernel convolution, max over
    character positions, and concatenation across kernel sizes."""
    ids = np.asarray(char_ids, dtype=np.int64)
    if ids.size == 0:
        ids = np.zeros(1, dtype=np.int64)
    emb = tn.take_rows(params["char_emb"], ids)
    feats = []
    for k in params.config.active_char_kernels:
        conv = tn.conv1d_same(emb, params[f"char_conv.k{k}.kernel"], params[f"char_conv.k{k}.bias"])
        feats.append(tn.max_over_time(conv))
    return feats[0] if len(feats) == 1 else tn.concat(feats)


def encode_chars_batch(words: list, params: ModelParams) -> Tensor:
    """Character features for several words at once, one row per word.

    Words are laid end to end with zero rows between them, so one
    convolution per kernel size reproduces the per-word zero padding of
    :func:`encode_chars` exactly.
    """
    kernels = params.config.active_char_kernels
    gap = max(k // 2 for k in kernels)
    words = [np.asarray(w, dtype=np.int64) if len(w) else np.zeros(1, dtype=np.int64) for w in words]
    positions, bounds, cursor = [], [], 0
    for w in words:
        bounds.append((cursor, cursor + len(w)))
        positions.extend(range(cursor, cursor + len(w)))
        cursor += len(w) + gap
    total = cursor - gap
    emb = tn.scatter_rows(tn.take_rows(params["char_emb"], np.concatenate(words)), positions, total)
    feats = []
    for k in kernels:
        conv = tn.conv1d_same(emb, params[f"char_conv.k{k}.kernel"], params[f"char_conv.k{k}.bias"])
        feats.append(tn.segment_max(conv, bounds))
    return feats[0] if len(feats) == 1 else tn.concat(feats, axis=1)


def embed_sentence(sent: SentenceInput, params: ModelParams, train: bool = False,
                   rng: Optional[np.random.Generator] = None) -> Tensor:
    """Rows ``z_i = [char features; word embedding]``, with word-layer dropout in train mode."""
    T = len(sent)
    if T < 1 or len(sent.word_ids) != T or len(sent.char_ids) != T:
        raise ValueError("token ids and character ids must both cover a nonempty sentence")
    # identical words share one char encoding; the tape sums their gradients
    distinct: dict = {}
    for ids in sent.char_ids:
        distinct.setdefault(tuple(int(i) for i in ids), len(distinct))
    feats = encode_chars_batch([list(k) for k in distinct], params)
    rows = [distinct[tuple(int(i) for i in ids)] for ids in sent.char_ids]
    chars = tn.take_rows(feats, rows)
    words = tn.take_rows(params["word_emb"], sent.word_ids)
    z = tn.concat([chars, words], axis=1)
    return tn.dropout(z, params.config.dropout, train, rng)


def context_features(Z: Tensor, params: ModelParams) -> Tensor:
    """Each branch convolves Z with its own kernel width; tanh, then the
    strongest branch wins per component."""
    branches = [
        tn.tanh(tn.conv1d_same(Z, params[f"ctx.k{k}.kernel"], params[f"ctx.k{k}.bias"]))
        for k in params.config.context_kernels
    ]
    return tn.elementwise_max(branches)


def gated_relation(X: Tensor, params: ModelParams) -> Tensor:
    """``p_i = tanh(mean_j r_ij * x_j)`` with ``r_ij = sigmoid(W [x_i; x_j] + b)``.

    ``W [x_i; x_j]`` splits into ``W_left x_i + W_right x_j``, so all pair
    scores come from two matrix products. With ``vector_gate`` each pair
    gets one gate per feature; otherwise a single scalar gate.
    """
    T, d = X.shape
    w = params["grl.weight"]
    left = tn.matmul(X, tn.take_rows(w, np.arange(d)))
    right = tn.matmul(X, tn.take_rows(w, np.arange(d, 2 * d)))
    return tn.tanh(tn.pairwise_gate(left, right, params["grl.bias"], X))


def encode(sentence, params: ModelParams, train: bool = False,
           rng: Optional[np.random.Generator] = None) -> Tensor:
    """Token strings (or a prepared :class:`SentenceInput`) to final features ``T x hidden``."""
    sent = sentence if isinstance(sentence, SentenceInput) else featurize(list(sentence), params)
    if len(sent) == 0:
        raise ValueError("cannot encode an empty sentence")
    Z = embed_sentence(sent, params, train=train, rng=rng)
    return gated_relation(context_features(Z, params), params)
