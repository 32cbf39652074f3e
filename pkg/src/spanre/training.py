"""Joint objective, Adam with linear warmup, and the training loop."""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Optional, Sequence

import numpy as np

from . import checkpoint as ckpt_io
from . import tensor as tn
from .attention import fuse
from .data import AnnotatedExample, RelationSchema
from .evaluation import EvalReport, evaluate
from .model import PADDED_TABLES, ModelConfig, ModelParams, SentenceInput, build_vocabs, featurize, init_params
from .representation import encode
from .structs import Span, Triplet
from .tagger import SubjectTags, encode_gold_tags, extract_triplets, objrel_logits, subject_logits
from .tensor import Tape, Tensor, backward

log = logging.getLogger(__name__)


class NoGoldSubjects(ValueError):
    """An example has no gold triplet and cannot train the object heads."""


class TrainingDiverged(RuntimeError):
    """Loss or gradients became non-finite. ``best`` holds the last good parameters."""

    def __init__(self, message: str, best: Optional[ModelParams], history: list):
        super().__init__(message)
        self.best = best
        self.history = history


@dataclass
class TrainConfig:
    base_lr: float = 1e-4
    warmup_steps: int = 500
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    patience: int = 20
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    threads: int = 1
    target_f1: Optional[float] = None
    eval_every: int = 1

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError("base_lr must be positive")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.epochs < 1 or self.batch_size < 1 or self.threads < 1 or self.eval_every < 1:
            raise ValueError("epochs, batch_size, threads and eval_every must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


# --------------------------------------------------------------------------
# Objective


@dataclass
class Instance:
    """A featurized sentence with its gold tag targets (relation ids)."""

    sentence: SentenceInput
    subject_tags: SubjectTags
    objrel_tags: dict
    gold: set


def make_instance(example: AnnotatedExample, params: ModelParams) -> Instance:
    index = {lab: i for i, lab in enumerate(params.relations)}
    trips = set()
    for t in example.triplets:
        if t.relation not in index:
            raise ValueError(f"relation {t.relation!r} is not in the model schema")
        trips.add(Triplet(Span(*t.subject), index[t.relation], Span(*t.object)))
    sub, per_subject = encode_gold_tags(len(example.tokens), sorted(trips), params.num_relations)
    return Instance(featurize(example.tokens, params), sub, per_subject, trips)


@dataclass
class LossTerms:
    total: Tensor
    sub_start: Tensor
    sub_end: Tensor
    obj_start: Tensor
    obj_end: Tensor

    def components(self) -> dict:
        return {k: getattr(self, k).item() for k in ("sub_start", "sub_end", "obj_start", "obj_end")}


def joint_loss(inst: Instance, params: ModelParams, train: bool = False,
               rng: Optional[np.random.Generator] = None) -> LossTerms:
    """Sum of four mean-BCE terms: subject start/end plus object-relation
    start/end, the latter averaged over the sentence's gold subjects.

    The object heads see gold subjects only (teacher forcing).
    """
    if not inst.objrel_tags:
        raise NoGoldSubjects("example has no gold subjects")
    P = encode(inst.sentence, params, train=train, rng=rng)
    s_start, s_end = subject_logits(P, params)
    e_ss = tn.bce_with_logits(s_start, inst.subject_tags.start)
    e_se = tn.bce_with_logits(s_end, inst.subject_tags.end)
    starts, ends = [], []
    for span, tags in inst.objrel_tags.items():
        o_start, o_end = objrel_logits(fuse(P, span, params), params)
        starts.append(tn.bce_with_logits(o_start, tags.start))
        ends.append(tn.bce_with_logits(o_end, tags.end))
    n = len(starts)
    e_os = tn.scalar_mul(tn.add_n(starts), 1.0 / n) if n > 1 else starts[0]
    e_oe = tn.scalar_mul(tn.add_n(ends), 1.0 / n) if n > 1 else ends[0]
    total = tn.add_n([e_ss, e_se, e_os, e_oe])
    return LossTerms(total, e_ss, e_se, e_os, e_oe)


# --------------------------------------------------------------------------
# Optimizer


def lr_at(step: int, cfg: TrainConfig) -> float:
    """Linear ramp from 0 to ``base_lr`` over ``warmup_steps``, then constant."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if cfg.warmup_steps == 0 or step >= cfg.warmup_steps:
        return cfg.base_lr
    return cfg.base_lr * step / cfg.warmup_steps


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: ModelParams, state: AdamState, lr: float, weight_decay: float = 0.0) -> None:
    """One bias-corrected Adam update from the tensors' ``grad`` slots.

    Missing gradients count as zero. Embedding ``<pad>`` rows are never
    updated.
    """
    grads = {}
    for name, t in params:
        g = np.zeros(t.shape) if t.grad is None else t.grad
        if not np.isfinite(g).all():
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        if weight_decay:
            g = g + weight_decay * t.data
        if name in PADDED_TABLES:
            g = g.copy()
            g[0] = 0.0
        grads[name] = g
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, t in params:
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(t.shape)
            state.v[name] = np.zeros(t.shape)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


# --------------------------------------------------------------------------
# Loop


def predict(corpus: Sequence[AnnotatedExample], params: ModelParams) -> list:
    """Predicted triplet sets with relation labels, one per example."""
    out = []
    for ex in corpus:
        ids = extract_triplets(featurize(ex.tokens, params), params)
        out.append({Triplet(t.subject, params.relations[t.relation], t.object) for t in ids})
    return out


def evaluate_model(corpus: Sequence[AnnotatedExample], params: ModelParams) -> EvalReport:
    return evaluate(predict(corpus, params), [set(ex.triplets) for ex in corpus])


def length_bucketed_batches(lengths: Sequence[int], batch_size: int, rng: np.random.Generator) -> list:
    """Batches of similar-length examples, in random order."""
    jitter = rng.random(len(lengths))
    order = np.lexsort((jitter, np.asarray(lengths)))
    batches = [order[i:i + batch_size].tolist() for i in range(0, len(order), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def _instance_grads(inst: Instance, params: ModelParams, rng, scale: float, accumulate: bool):
    with Tape() as tape:
        terms = joint_loss(inst, params, train=True, rng=rng)
        loss = tn.scalar_mul(terms.total, scale)
    grads = backward(loss, tape, accumulate=accumulate)
    return terms, grads


@dataclass
class TrainResult:
    params: ModelParams
    history: list
    best_f1: float
    best_epoch: int
    final_params: ModelParams = None


def train(corpus: Sequence[AnnotatedExample], cfg: TrainConfig, model_config: Optional[ModelConfig] = None,
          valid: Optional[Sequence[AnnotatedExample]] = None, schema: Optional[RelationSchema] = None,
          word_vectors: Optional[dict] = None, checkpoint_path=None, log_path=None,
          on_epoch: Optional[Callable[[dict], None]] = None, init: Optional[ModelParams] = None) -> TrainResult:
    """Train from scratch (or from ``init``) and keep the best-validation-F1 parameters.

    Validation defaults to the training corpus. Everything random is driven
    by ``cfg.seed``: initialization, batch order and per-example dropout.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    model_config = model_config or ModelConfig()
    valid = corpus if valid is None else valid
    if schema is None:
        schema = RelationSchema()
        for ex in corpus:
            for t in ex.triplets:
                schema.add(t.relation)
    init_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    if init is None:
        vocab, chars = build_vocabs((ex.tokens for ex in corpus), model_config.lowercase)
        params = init_params(model_config, vocab, chars, list(schema), np.random.default_rng(init_seq),
                             word_vectors=word_vectors)
    else:
        params = init
    instances = []
    skipped = 0
    for ex in corpus:
        if not ex.triplets:
            skipped += 1
            continue
        instances.append(make_instance(ex, params))
    if skipped:
        log.warning("skipped %d training sentences without gold triplets", skipped)
    if not instances:
        raise ValueError("no training sentence has a gold triplet")

    shuffle_rng = np.random.default_rng(shuffle_seq)
    state = AdamState(beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    history: list = []
    best, best_f1, best_epoch, stale = params.copy(), -1.0, 0, 0
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    log_fh = open(log_path, "w", encoding="utf8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            t0 = time.perf_counter()
            sums = {"loss": 0.0, "sub_start": 0.0, "sub_end": 0.0, "obj_start": 0.0, "obj_end": 0.0}
            batches = length_bucketed_batches([len(i.sentence) for i in instances], cfg.batch_size, shuffle_rng)
            try:
                for batch in batches:
                    params.zero_grad()
                    scale = 1.0 / len(batch)
                    rngs = [np.random.default_rng([cfg.seed, epoch, i]) for i in batch]
                    if pool is None:
                        results = [_instance_grads(instances[i], params, r, scale, True)
                                   for i, r in zip(batch, rngs)]
                    else:
                        results = list(pool.map(
                            lambda a: _instance_grads(instances[a[0]], params, a[1], scale, False),
                            zip(batch, rngs)))
                        for _, grads in results:  # fixed reduce order keeps runs reproducible
                            for leaf, g in grads.items():
                                leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
                    for terms, _ in results:
                        sums["loss"] += terms.total.item()
                        for k, v in terms.components().items():
                            sums[k] += v
                    adam_step(params, state, lr_at(state.step + 1, cfg), cfg.weight_decay)
            except FloatingPointError as exc:
                raise TrainingDiverged(f"training diverged in epoch {epoch}: {exc}", best, history) from exc
            entry = {"epoch": epoch, "step": state.step, "lr": lr_at(state.step, cfg)}
            entry.update({k: v / len(instances) for k, v in sums.items()})
            if not math.isfinite(entry["loss"]):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}", best, history)
            if epoch % cfg.eval_every == 0 or epoch == cfg.epochs:
                try:
                    report = evaluate_model(valid, params)
                except FloatingPointError as exc:
                    raise TrainingDiverged(f"training diverged in epoch {epoch}: {exc}", best, history) from exc
                entry.update(precision=report.precision, recall=report.recall, f1=report.f1)
                if report.f1 > best_f1:
                    best, best_f1, best_epoch, stale = params.copy(), report.f1, epoch, 0
                    if checkpoint_path:
                        ckpt_io.save(checkpoint_path, ckpt_io.Checkpoint(
                            best, train_config=cfg.to_dict(), seed=cfg.seed,
                            metadata={"epoch": epoch, "valid_f1": best_f1}))
                else:
                    stale += cfg.eval_every
            entry["seconds"] = round(time.perf_counter() - t0, 3)
            history.append(entry)
            if log_fh:
                log_fh.write(json.dumps({k: v for k, v in entry.items() if k != "seconds"}) + "\n")
                log_fh.flush()
            if on_epoch:
                on_epoch(entry)
            log.info("epoch %d loss %.5f f1 %s", epoch, entry["loss"], entry.get("f1"))
            if cfg.target_f1 is not None and best_f1 >= cfg.target_f1:
                break
            if stale >= cfg.patience:
                log.info("early stop: %d epochs without validation improvement", stale)
                break
    finally:
        if pool is not None:
            pool.shutdown()
        if log_fh:
            log_fh.close()
    return TrainResult(params=best, history=history, best_f1=best_f1, best_epoch=best_epoch, final_params=params)
