import json
import math

import numpy as np
import pytest

from spanre import checkpoint as ckpt_io
from spanre import tensor as tn
from spanre.data import AnnotatedExample, epo_demo_example
from spanre.gradcheck import tiny_config, tiny_example
from spanre.model import ModelParams, build_vocabs, init_params
from spanre.structs import Span, Triplet
from spanre.tensor import Tape, Tensor
from spanre.training import (AdamState, NoGoldSubjects, TrainConfig, TrainingDiverged, adam_step, joint_loss,
                             length_bucketed_batches, lr_at, make_instance, train)

RELS = ["parent_company_of", "shareholders_of", "located_in"]


def setup(example=None, seed=0, **overrides):
    ex = example or tiny_example()
    vocab, chars = build_vocabs([ex.tokens])
    params = init_params(tiny_config(**overrides), vocab, chars, RELS, np.random.default_rng(seed))
    return params, make_instance(ex, params)


def loss_value(inst, params):
    return joint_loss(inst, params).total.item()


def small_corpus():
    ex = epo_demo_example()
    other = AnnotatedExample(["Paris", "is", "in", "France", "."],
                             [Triplet(Span(0, 0), "located_in", Span(3, 3))])
    return [ex, other]


class TestJointLoss:
    def test_components_sum_to_total(self):
        params, inst = setup()
        terms = joint_loss(inst, params)
        assert abs(sum(terms.components().values()) - terms.total.item()) < 1e-12
        assert terms.total.item() >= 0

    def test_zero_heads_give_ln2_per_term(self):
        params, inst = setup()
        for name, t in params:
            if name.startswith(("sub_start.out", "sub_end.out", "obj_start", "obj_end")):
                t.data[:] = 0.0
        terms = joint_loss(inst, params)
        for v in terms.components().values():
            assert v == pytest.approx(math.log(2), abs=1e-12)
        assert terms.total.item() >= 2 * math.log(2)

    def test_saturated_heads_near_zero(self):
        # one token, so constant logits of +/-40 can match every gold tag
        ex = AnnotatedExample(["IBM"], [Triplet(Span(0, 0), "parent_company_of", Span(0, 0))])
        params, inst = setup(ex)
        for head in ("sub_start", "sub_end"):
            params[f"{head}.out.weight"].data[:] = 0.0
            params[f"{head}.out.bias"].data[:] = 40.0
        for head in ("obj_start", "obj_end"):
            params[f"{head}.weight"].data[:] = 0.0
            params[f"{head}.bias"].data[:] = [40.0, -40.0, -40.0]
        assert joint_loss(inst, params).total.item() < 1e-8

    def test_objrel_terms_average_over_subjects(self):
        params, inst = setup()
        assert len(inst.objrel_tags) == 2
        terms = joint_loss(inst, params)
        from spanre.attention import fuse
        from spanre.representation import encode
        from spanre.tagger import objrel_logits
        P = encode(inst.sentence, params)
        per = [tn.bce_with_logits(objrel_logits(fuse(P, s, params), params)[0], t.start).item()
               for s, t in inst.objrel_tags.items()]
        assert terms.obj_start.item() == pytest.approx(np.mean(per), abs=1e-12)

    def test_no_gold_subjects(self):
        params, _ = setup()
        inst = make_instance(AnnotatedExample(["IBM", "owns"], []), params)
        with pytest.raises(NoGoldSubjects):
            joint_loss(inst, params)

    def test_unknown_relation(self):
        params, _ = setup()
        with pytest.raises(ValueError):
            make_instance(AnnotatedExample(["a", "b"], [Triplet(Span(0, 0), "nope", Span(1, 1))]), params)


class TestSchedule:
    cfg = TrainConfig(base_lr=1e-3, warmup_steps=4)

    def test_examples(self):
        assert [lr_at(s, self.cfg) for s in (0, 1, 2, 4, 100)] == [0.0, 2.5e-4, 5e-4, 1e-3, 1e-3]

    def test_no_warmup(self):
        assert lr_at(0, TrainConfig(base_lr=1e-3, warmup_steps=0)) == 1e-3

    def test_monotone(self):
        values = [lr_at(s, self.cfg) for s in range(10)]
        assert values == sorted(values) and values[4:] == [1e-3] * 6

    def test_invalid(self):
        with pytest.raises(ValueError):
            lr_at(-1, self.cfg)
        with pytest.raises(ValueError):
            TrainConfig(base_lr=0)
        with pytest.raises(ValueError):
            TrainConfig(warmup_steps=-1)


def single_param(value):
    """A ModelParams holding one scalar-vector tensor ``w``."""
    vocab, chars = build_vocabs([["x"]])
    return ModelParams(config=tiny_config(), vocab=vocab, chars=chars, relations=["r"],
                       tensors={"w": Tensor(np.array(value, dtype=float), requires_grad=True)})


class TestAdam:
    def test_first_step_moves_by_lr(self):
        p = single_param([1.0, -2.0])
        p["w"].grad = np.array([0.3, -5.0])
        adam_step(p, AdamState(), lr=0.01)
        # bias correction makes the first step exactly lr * sign(g), up to eps
        np.testing.assert_allclose(p["w"].data, [0.99, -1.99], atol=1e-9)

    def test_zero_gradient_is_no_op(self):
        p = single_param([1.0, 2.0])
        before = p["w"].data.copy()
        adam_step(p, AdamState(), lr=0.1)
        np.testing.assert_array_equal(p["w"].data, before)

    def test_minimizes_quadratic(self):
        p = single_param([0.0])
        state = AdamState()
        for _ in range(2000):
            p["w"].grad = 2 * (p["w"].data - 3.0)
            adam_step(p, state, lr=0.05)
        assert abs(p["w"].data[0] - 3.0) < 1e-3

    def test_nan_gradient_named(self):
        p = single_param([0.0])
        p["w"].grad = np.array([np.nan])
        with pytest.raises(FloatingPointError, match="'w'"):
            adam_step(p, AdamState(), lr=0.1)

    def test_pad_rows_frozen(self):
        params, inst = setup()
        with Tape() as tape:
            loss = joint_loss(inst, params).total
        tn.backward(loss, tape)
        params["word_emb"].grad[0] = 1.0
        pad = params["word_emb"].data[0].copy()
        adam_step(params, AdamState(), lr=0.1)
        np.testing.assert_array_equal(params["word_emb"].data[0], pad)

    @pytest.mark.parametrize("lr", [1e-5, 1e-6])
    def test_small_step_decreases_loss(self, lr):
        params, inst = setup(seed=3)
        before = loss_value(inst, params)
        params.zero_grad()
        with Tape() as tape:
            loss = joint_loss(inst, params).total
        tn.backward(loss, tape)
        adam_step(params, AdamState(), lr=lr)
        assert loss_value(inst, params) < before


class TestBatches:
    def test_partition(self):
        rng = np.random.default_rng(0)
        batches = length_bucketed_batches([5, 1, 9, 3, 3, 7, 2], 3, rng)
        assert sorted(i for b in batches for i in b) == list(range(7))
        assert all(len(b) <= 3 for b in batches)

    def test_similar_lengths_grouped(self):
        lengths = [1, 50, 2, 51, 3, 52]
        batches = length_bucketed_batches(lengths, 3, np.random.default_rng(1))
        assert sorted(sorted(lengths[i] for i in b) for b in batches) == [[1, 2, 3], [50, 51, 52]]


FAST = dict(base_lr=1e-2, warmup_steps=2, epochs=3, batch_size=2, patience=100)


class TestTrainLoop:
    def test_deterministic(self):
        a = train(small_corpus(), TrainConfig(**FAST), tiny_config())
        b = train(small_corpus(), TrainConfig(**FAST), tiny_config())
        assert [h["loss"] for h in a.history] == [h["loss"] for h in b.history]
        for (n, x), (_, y) in zip(a.final_params, b.final_params):
            assert x.data.tobytes() == y.data.tobytes(), n

    def test_threads_match_single(self):
        a = train(small_corpus(), TrainConfig(**FAST), tiny_config())
        b = train(small_corpus(), TrainConfig(threads=2, **FAST), tiny_config())
        for (n, x), (_, y) in zip(a.final_params, b.final_params):
            np.testing.assert_allclose(x.data, y.data, atol=1e-12, err_msg=n)

    def test_loss_falls(self):
        res = train(small_corpus(), TrainConfig(**{**FAST, "epochs": 30}), tiny_config())
        assert res.history[-1]["loss"] < res.history[0]["loss"]

    def test_log_and_checkpoint(self, tmp_path):
        res = train(small_corpus(), TrainConfig(**FAST), tiny_config(),
                    checkpoint_path=tmp_path / "m.ckpt", log_path=tmp_path / "log.jsonl")
        lines = [json.loads(l) for l in (tmp_path / "log.jsonl").read_text().splitlines()]
        assert [l["epoch"] for l in lines] == [1, 2, 3]
        assert {"loss", "sub_start", "obj_end", "lr", "f1"} <= set(lines[0])
        loaded = ckpt_io.load(tmp_path / "m.ckpt").params
        for (n, x), (_, y) in zip(res.params, loaded):
            np.testing.assert_array_equal(x.data, y.data)

    def test_early_stop(self):
        cfg = TrainConfig(**{**FAST, "epochs": 50, "patience": 2, "base_lr": 1e-9})
        res = train(small_corpus(), cfg, tiny_config())
        assert len(res.history) < 50

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_keeps_best(self):
        cfg = TrainConfig(**{**FAST, "base_lr": 1e300, "warmup_steps": 0, "epochs": 5})
        with pytest.raises(TrainingDiverged) as info:
            train(small_corpus(), cfg, tiny_config())
        assert info.value.best is not None

    def test_empty_corpus(self):
        with pytest.raises(ValueError):
            train([], TrainConfig(**FAST), tiny_config())
        with pytest.raises(ValueError):
            train([AnnotatedExample(["a"], [])], TrainConfig(**FAST), tiny_config())


class TestCheckpoint:
    def test_byte_identical_round_trip(self, tmp_path):
        params, _ = setup()
        ck = ckpt_io.Checkpoint(params, train_config=TrainConfig().to_dict(), seed=7, metadata={"epoch": 3})
        first = ckpt_io.to_bytes(ck)
        again = ckpt_io.to_bytes(ckpt_io.from_bytes(first))
        assert first == again
        ckpt_io.save(tmp_path / "a.ckpt", ckpt_io.from_bytes(first))
        assert (tmp_path / "a.ckpt").read_bytes() == first

    def test_records_ablation_flags(self):
        params, _ = setup(entity_attention=False, multi_scale_chars=False)
        loaded = ckpt_io.from_bytes(ckpt_io.to_bytes(ckpt_io.Checkpoint(params))).params
        assert loaded.config.entity_attention is False and loaded.config.multi_scale_chars is False

    def test_bad_magic(self):
        with pytest.raises(ckpt_io.CheckpointError):
            ckpt_io.from_bytes(b"NOTACKPT" + bytes(16))

    def test_truncated(self):
        params, _ = setup()
        buf = ckpt_io.to_bytes(ckpt_io.Checkpoint(params))
        with pytest.raises(ckpt_io.CheckpointError):
            ckpt_io.from_bytes(buf[:-8])

    def test_loaded_params_are_trainable(self):
        params, inst = setup()
        loaded = ckpt_io.from_bytes(ckpt_io.to_bytes(ckpt_io.Checkpoint(params))).params
        with Tape() as tape:
            loss = joint_loss(make_instance(tiny_example(), loaded), loaded).total
        tn.backward(loss, tape)
        adam_step(loaded, AdamState(), lr=1e-3)
