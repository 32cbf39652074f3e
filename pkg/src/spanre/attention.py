"""Entity attention: condition the sentence features on one candidate subject."""

from __future__ import annotations

import numpy as np

from . import tensor as tn
from .model import ModelParams
from .structs import Span
from .tensor import Tensor


def sample_indices(span: Span, K: int) -> np.ndarray:
    """Row indices for a fixed-length subject sample.

    Exact fit keeps the rows; short spans repeat their last row; long spans
    keep the first ``K - 1`` rows and the last one.
    """
    s, e = span
    n = e - s + 1
    if n >= K:
        return np.array(list(range(s, s + K - 1)) + [e], dtype=np.int64)
    return np.array(list(range(s, e + 1)) + [e] * (K - n), dtype=np.int64)


def sample_subject(P: Tensor, span: Span, K: int) -> Tensor:
    Span(*span).check(P.shape[0])
    if K < 1:
        raise ValueError("sample length K must be >= 1")
    return tn.take_rows(P, sample_indices(Span(*span), K))


def encode_subject(B: Tensor, params: ModelParams) -> Tensor:
    """BiLSTM over the sampled rows; returns [last forward state; last backward state]."""
    K = B.shape[0]
    if K < 1:
        raise ValueError("subject sample must have at least one row")
    finals = []
    for direction, order in (("fwd", np.arange(K)), ("bwd", np.arange(K - 1, -1, -1))):
        seq = B if direction == "fwd" else tn.take_rows(B, order)
        H = tn.lstm_sequence(seq, params[f"subj_lstm.{direction}.weight"], params[f"subj_lstm.{direction}.bias"])
        finals.append(tn.take_rows(H, K - 1))
    return tn.concat(finals)


def relative_offsets(span: Span, T: int, max_len: int) -> np.ndarray:
    """Embedding-table rows for offsets ``i - span.start``, clamped to ``[-max_len, max_len]``."""
    off = np.arange(T) - span[0]
    return np.clip(off, -max_len, max_len) + max_len


def broadcast_subject(h: Tensor, span: Span, T: int, params: ModelParams) -> Tensor:
    """Repeat the subject state over all positions and add relative-position embeddings."""
    table = params["relpos"]
    if table.shape[1] != h.shape[0]:
        raise tn.ShapeError(f"relative-position width {table.shape[1]} != subject state width {h.shape[0]}")
    rel = tn.take_rows(table, relative_offsets(span, T, params.config.max_len))
    return tn.add(rel, h)


def attend(Q: Tensor, P: Tensor, params: ModelParams) -> Tensor:
    """Bilinear attention ``s_ij = (U q_i) . (V p_j)``, row softmax, weighted sum of P."""
    U, V = params["att.U"], params["att.V"]
    if Q.shape[0] != P.shape[0]:
        raise tn.ShapeError(f"Q has {Q.shape[0]} rows but P has {P.shape[0]}")
    uq = tn.matmul(Q, tn.transpose(U))
    vp = tn.matmul(P, tn.transpose(V))
    alpha = tn.row_softmax(tn.matmul(uq, tn.transpose(vp)))
    return tn.matmul(alpha, P)


def fuse(P: Tensor, span: Span, params: ModelParams) -> Tensor:
    """Subject-conditioned token features ``[q_i; p_i; p1_i]`` for the object/relation heads.

    ``p1_i`` is the attention read-out of ``attend``. With entity attention
    disabled the read-out is dropped, leaving ``[q_i; p_i]``, so the two
    modes differ by the attention term alone.
    """
    T = P.shape[0]
    span = Span(*span).check(T)
    B = sample_subject(P, span, params.config.sample_len)
    Q = broadcast_subject(encode_subject(B, params), span, T, params)
    if not params.config.entity_attention:
        return tn.concat([Q, P], axis=1)
    return tn.concat([Q, P, attend(Q, P, params)], axis=1)
