import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spanre.data import RelationSchema, DEFAULT_RELATIONS, generate_synthetic
from spanre.structs import Span, Triplet
from spanre.tagger import (ObjRelTags, decode_gold_tags, decode_objrel, decode_spans,
                           encode_gold_tags, extract_triplets, objrel_logits, subject_logits)
from spanre.representation import encode
from spanre.attention import fuse

from conftest import make_params


def brute_force_spans(start, end):
    """Definition-level matcher: each start in order takes the smallest
    unclaimed end position at or after it."""
    claimed = set()
    out = []
    for s in range(len(start)):
        if not start[s]:
            continue
        candidates = [e for e in range(s, len(end)) if end[e] and e not in claimed]
        if candidates:
            e = min(candidates)
            claimed.add(e)
            out.append(Span(s, e))
    return out


def column_oracle(start, end, threshold):
    out = []
    for r in range(start.shape[1]):
        for span in brute_force_spans(start[:, r] > threshold, end[:, r] > threshold):
            out.append((span, r))
    return out


class TestDecodeSpans:
    def test_exhaustive_t5(self):
        mismatches = 0
        for bits in itertools.product([0, 1], repeat=10):
            start, end = np.array(bits[:5]), np.array(bits[5:])
            mismatches += decode_spans(start, end) != brute_force_spans(start, end)
        assert mismatches == 0

    def test_single_token_entity(self):
        assert decode_spans([0, 1, 0], [0, 1, 0]) == [Span(1, 1)]

    def test_end_before_start_is_dropped(self):
        assert decode_spans([0, 0, 1], [1, 0, 0]) == []

    def test_nearest_end_policy(self):
        assert decode_spans([1, 0, 0, 0], [0, 1, 0, 1]) == [Span(0, 1)]

    def test_two_starts_share_no_end(self):
        # the second start must take a later end
        assert decode_spans([1, 1, 0, 0], [0, 0, 1, 1]) == [Span(0, 2), Span(1, 3)]

    def test_unpaired_tags(self):
        assert decode_spans([1, 0], [0, 0]) == []
        assert decode_spans([0, 0], [1, 1]) == []

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            decode_spans([1, 0], [1, 0, 0])

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=30))
    @settings(max_examples=200, deadline=None)
    def test_output_ordering(self, pairs):
        start = np.array([p[0] for p in pairs])
        end = np.array([p[1] for p in pairs])
        spans = decode_spans(start, end)
        assert all(s.start <= s.end for s in spans)
        # starts and ends both strictly increase, so no span is nested in another
        assert all(a.start < b.start and a.end < b.end for a, b in zip(spans, spans[1:]))
        assert all(start[s.start] and end[s.end] for s in spans)
        assert spans == brute_force_spans(start, end)


class TestDecodeObjRel:
    def test_random_matrices_match_oracle(self):
        rng = np.random.default_rng(0)
        mismatches = 0
        for _ in range(1000):
            start, end = rng.random((8, 4)), rng.random((8, 4))
            got = decode_objrel(ObjRelTags(start, end), 0.5)
            mismatches += got != column_oracle(start, end, 0.5)
        assert mismatches == 0

    def test_threshold_is_strict(self):
        tags = ObjRelTags(np.array([[0.5]]), np.array([[0.9]]))
        assert decode_objrel(tags, 0.5) == []
        tags = ObjRelTags(np.array([[0.51]]), np.array([[0.9]]))
        assert decode_objrel(tags, 0.5) == [(Span(0, 0), 0)]

    def test_one_object_two_relations(self):
        start = np.zeros((3, 2))
        end = np.zeros((3, 2))
        start[2] = end[2] = 1.0
        assert decode_objrel(ObjRelTags(start, end)) == [(Span(2, 2), 0), (Span(2, 2), 1)]

    def test_bad_shapes(self):
        with pytest.raises(ValueError):
            decode_objrel(ObjRelTags(np.zeros(3), np.zeros(3)))


class TestGoldTags:
    def test_epo_pair_pattern(self):
        trips = [Triplet(Span(0, 0), 0, Span(9, 9)), Triplet(Span(0, 0), 1, Span(9, 9))]
        sub, per = encode_gold_tags(11, trips, 2)
        assert sub.start[0] == sub.end[0] == 1 and sub.start.sum() == 1
        tags = per[Span(0, 0)]
        np.testing.assert_array_equal(tags.start[9], [1, 1])
        assert decode_gold_tags(sub, per) == set(trips)

    def test_rejects_bad_spans_and_ids(self):
        with pytest.raises(ValueError):
            encode_gold_tags(3, [Triplet(Span(0, 3), 0, Span(1, 1))], 1)
        with pytest.raises(ValueError):
            encode_gold_tags(3, [Triplet(Span(0, 0), 2, Span(1, 1))], 2)
        with pytest.raises(ValueError):
            encode_gold_tags(3, [Triplet(Span(0, 0), "located_in", Span(1, 1))], 2)

    def test_round_trip_on_generated_corpus(self):
        schema = RelationSchema(DEFAULT_RELATIONS)
        corpus = generate_synthetic(3, 500, schema)
        failures = 0
        for ex in corpus:
            trips = {Triplet(t.subject, schema.id(t.relation), t.object) for t in ex.triplets}
            sub, per = encode_gold_tags(len(ex.tokens), sorted(trips), len(schema))
            failures += decode_gold_tags(sub, per) != trips
        assert failures == 0

    def test_subject_tags_one_matrix_per_subject(self):
        trips = [Triplet(Span(0, 1), 0, Span(3, 3)), Triplet(Span(3, 3), 1, Span(5, 6))]
        _, per = encode_gold_tags(7, trips, 2)
        assert list(per) == [Span(0, 1), Span(3, 3)]


class TestHeads:
    def test_shapes(self, tiny_params):
        P = encode(["IBM", "owns", "Informix"], tiny_params)
        s, e = subject_logits(P, tiny_params)
        assert s.shape == e.shape == (3,)
        a, b = objrel_logits(fuse(P, Span(0, 0), tiny_params), tiny_params)
        assert a.shape == b.shape == (3, 3)

    def test_linear_subject_heads(self):
        params = make_params(subject_mlp_hidden=False)
        assert "sub_start.hidden.weight" not in dict(params)
        P = encode(["IBM", "owns"], params)
        assert subject_logits(P, params)[0].shape == (2,)

    def test_extract_with_saturated_subject_head(self, tiny_params):
        p = tiny_params
        # hidden layer output is bounded, so a huge negative bias silences every subject
        p["sub_start.out.bias"].data[:] = -1e3
        assert extract_triplets(["IBM", "owns", "Informix"], p) == set()

    def test_extract_returns_integer_relations(self, tiny_params):
        p = tiny_params
        for head in ("sub_start", "sub_end"):
            p[f"{head}.out.weight"].data[:] = 0.0
            p[f"{head}.out.bias"].data[:] = 50.0
        for head in ("obj_start", "obj_end"):
            p[f"{head}.weight"].data[:] = 0.0
            p[f"{head}.bias"].data[:] = [50.0, -50.0, -50.0]
        found = extract_triplets(["IBM", "owns", "Informix"], p)
        # every token is a subject and every token an object of relation 0
        assert found == {Triplet(Span(s, s), 0, Span(o, o)) for s in range(3) for o in range(3)}
