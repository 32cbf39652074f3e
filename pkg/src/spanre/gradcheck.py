"""Finite-difference gradient suite over every differentiable op and the
full joint loss on a small random model."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import tensor as tn
from .data import AnnotatedExample
from .model import ModelConfig, build_vocabs, init_params
from .structs import Span, Triplet
from .tensor import Tape, Tensor

TOLERANCE = 1e-4


@dataclass
class CheckResult:
    name: str
    error: float
    seconds: float

    @property
    def ok(self) -> bool:
        return self.error < TOLERANCE


def _rand(rng, *shape, scale=1.0):
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=True)


def op_cases(rng: np.random.Generator) -> Iterator[tuple]:
    """``(name, fn, inputs)`` triples covering each primitive."""
    a, b = _rand(rng, 4, 5), _rand(rng, 5, 3)
    yield "matmul", tn.matmul, [a, b]
    yield "add", tn.add, [_rand(rng, 4, 3), _rand(rng, 3)]
    yield "sub", tn.sub, [_rand(rng, 4, 3), _rand(rng, 4, 1)]
    yield "mul", tn.mul, [_rand(rng, 4, 3), _rand(rng, 4, 3)]
    yield "scalar_mul", lambda x: tn.scalar_mul(x, -2.5), [_rand(rng, 3, 2)]
    yield "sigmoid", tn.sigmoid, [_rand(rng, 3, 4, scale=5)]
    yield "tanh", tn.tanh, [_rand(rng, 3, 4, scale=3)]
    yield "concat", lambda x, y: tn.concat([x, y], axis=1), [_rand(rng, 3, 2), _rand(rng, 3, 4)]
    yield "row_softmax", tn.row_softmax, [_rand(rng, 4, 5, scale=3)]
    yield "take_rows", lambda x: tn.take_rows(x, [2, 0, 2, 1]), [_rand(rng, 4, 3)]
    yield "scatter_rows", lambda x: tn.scatter_rows(x, [3, 0, 1], 5), [_rand(rng, 3, 2)]
    yield "transpose", tn.transpose, [_rand(rng, 2, 5)]
    yield "sum", tn.sum_all, [_rand(rng, 3, 3)]
    yield "mean", tn.mean_all, [_rand(rng, 3, 3)]
    yield "add_n", lambda x, y, z: tn.add_n([x, y, z]), [_rand(rng, 2, 3) for _ in range(3)]
    yield "pairwise_gate (scalar)", tn.pairwise_gate, [_rand(rng, 5, 1), _rand(rng, 5, 1), _rand(rng, 1), _rand(rng, 5, 3)]
    yield "pairwise_gate (vector)", tn.pairwise_gate, [_rand(rng, 5, 3), _rand(rng, 5, 3), _rand(rng, 3), _rand(rng, 5, 3)]
    mask_rng_seed = int(rng.integers(1 << 31))
    yield ("dropout", lambda x: tn.dropout(x, 0.25, True, np.random.default_rng(mask_rng_seed)),
           [_rand(rng, 4, 4)])
    yield "conv1d_same k=3", tn.conv1d_same, [_rand(rng, 6, 3), _rand(rng, 3, 3, 4), _rand(rng, 4)]
    yield "conv1d_same k=2", tn.conv1d_same, [_rand(rng, 6, 3), _rand(rng, 2, 3, 4), _rand(rng, 4)]
    yield "conv1d_same k=5", tn.conv1d_same, [_rand(rng, 3, 2), _rand(rng, 5, 2, 3), _rand(rng, 3)]
    yield "max_over_time", tn.max_over_time, [_rand(rng, 7, 4)]
    yield "segment_max", lambda x: tn.segment_max(x, [(0, 3), (4, 7)]), [_rand(rng, 7, 4)]
    yield "elementwise_max", lambda *bs: tn.elementwise_max(bs), [_rand(rng, 3, 4) for _ in range(3)]
    targets = (rng.random((5, 3)) < 0.5).astype(float)
    yield "bce_with_logits", lambda z: tn.bce_with_logits(z, targets), [_rand(rng, 5, 3, scale=4)]
    d_in, d_h = 4, 3
    yield ("lstm_cell", lambda x, h, c, W, bb: tn.lstm_cell(x, h, c, W, bb)[0],
           [_rand(rng, d_in), _rand(rng, d_h), _rand(rng, d_h), _rand(rng, d_in + d_h, 4 * d_h), _rand(rng, 4 * d_h)])
    yield ("lstm_cell (cell state)", lambda x, h, c, W, bb: tn.lstm_cell(x, h, c, W, bb)[1],
           [_rand(rng, d_in), _rand(rng, d_h), _rand(rng, d_h), _rand(rng, d_in + d_h, 4 * d_h), _rand(rng, 4 * d_h)])
    yield ("lstm_sequence", tn.lstm_sequence,
           [_rand(rng, 4, d_in), _rand(rng, d_in + d_h, 4 * d_h), _rand(rng, 4 * d_h)])


def tiny_config(**overrides) -> ModelConfig:
    """Smallest configuration that still exercises every code path."""
    base = dict(word_dim=5, char_dim=4, char_out=3, hidden=6, att_hidden=4, sample_len=4, max_len=8)
    base.update(overrides)
    return ModelConfig(**base)


def tiny_example() -> AnnotatedExample:
    tokens = ["IBM", "owns", "big", "Informix", "."]
    return AnnotatedExample(tokens=tokens, triplets=[
        Triplet(Span(0, 0), "parent_company_of", Span(3, 3)),
        Triplet(Span(0, 0), "shareholders_of", Span(3, 3)),
        Triplet(Span(2, 3), "located_in", Span(0, 0)),
    ], text=" ".join(tokens))


def model_loss_check(seed: int = 0, **config_overrides) -> float:
    """Worst relative error over all model parameters of the joint loss."""
    from .training import joint_loss, make_instance

    ex = tiny_example()
    vocab, chars = build_vocabs([ex.tokens])
    params = init_params(tiny_config(**config_overrides), vocab, chars,
                         ["parent_company_of", "shareholders_of", "located_in"],
                         np.random.default_rng(seed))
    # at the small default init the subject-encoder gradients sit near the
    # finite-difference noise floor; a wider draw gives a meaningful check
    prng = np.random.default_rng(seed + 1)
    for _, t in params:
        t.data[...] = prng.uniform(-1.0, 1.0, size=t.shape)
    inst = make_instance(ex, params)
    dropout_seed = seed + 2

    def loss(train=True):
        return joint_loss(inst, params, train=train, rng=np.random.default_rng(dropout_seed)).total

    params.zero_grad()
    with Tape() as tape:
        total = loss()
    tn.backward(total, tape)
    worst = 0.0
    for name, t in params:
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        numeric = tn.numerical_grad(lambda: loss().item(), t)
        worst = max(worst, tn.relative_error(analytic, numeric))
    return worst


def run_suite(seed: int = 0, report: Callable[[CheckResult], None] = None) -> list:
    rng = np.random.default_rng(seed)
    results = []

    def emit(name, fn):
        t0 = time.perf_counter()
        err = fn()
        res = CheckResult(name, err, time.perf_counter() - t0)
        results.append(res)
        if report:
            report(res)

    for name, fn, inputs in op_cases(rng):
        emit(name, lambda: max(tn.gradcheck(fn, inputs).values()))
    emit("joint loss (entity attention)", lambda: model_loss_check(seed))
    emit("joint loss (concat ablation)", lambda: model_loss_check(seed, entity_attention=False))
    emit("joint loss (single char kernel)", lambda: model_loss_check(seed, multi_scale_chars=False))
    emit("joint loss (scalar relation gate)", lambda: model_loss_check(seed, vector_gate=False))
    return results
