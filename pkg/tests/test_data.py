import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spanre.data import (DEFAULT_RELATIONS, CorpusFormatError, OverlapCategory, RelationSchema,
                         SchemaError, SyntheticConfigError, categorize_overlap, corpus_stats, cue_tokens,
                         epo_demo_example, format_stats_table, generate_synthetic, load_corpus, tokenize,
                         write_corpus)
from spanre.structs import Span, Triplet

N, S, E = OverlapCategory.NORMAL, OverlapCategory.SEO, OverlapCategory.EPO

# hand-annotated expectations for tests/fixtures/ingest10.jsonl
INGEST_EXPECTED = [
    [(Span(0, 0), "parent_company_of", Span(6, 6))],
    [(Span(0, 1), "born_in", Span(5, 5))],
    # first occurrence of "New York" sits inside the subject
    [(Span(1, 3), "located_in", Span(1, 2))],
    [(Span(0, 0), "founded_by", Span(4, 5)), (Span(0, 0), "founded_by", Span(7, 8))],
    [(Span(0, 0), "capital_of", Span(5, 5))],
    [(Span(0, 0), "works_for", Span(3, 5))],
    [(Span(5, 5), "founded_by", Span(0, 1)), (Span(0, 1), "advisor_of", Span(5, 5))],
    [],
    [],
    [(Span(0, 0), "capital_of", Span(5, 5))],
]


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf8")


class TestTokenize:
    def test_punctuation_splits(self):
        assert tokenize("Acme-Corp, Inc.") == ["Acme", "-", "Corp", ",", "Inc", "."]

    def test_whitespace_runs(self):
        assert tokenize("  a \t b\n") == ["a", "b"]


class TestSchema:
    def test_dense_ids(self):
        s = RelationSchema(["a", "b"])
        assert s.add("c") == 2 and s.add("a") == 0
        assert s.id("b") == 1 and s.label(2) == "c" and len(s) == 3

    def test_none_label_rejected(self):
        with pytest.raises(SchemaError):
            RelationSchema(["None"])

    def test_unknown_label(self):
        with pytest.raises(SchemaError):
            RelationSchema(["a"]).id("b")

    def test_save_load(self, tmp_path):
        s = RelationSchema(["x", "y"])
        s.save(tmp_path / "s.json")
        assert list(RelationSchema.load(tmp_path / "s.json")) == ["x", "y"]


class TestLoadCorpus:
    def test_fixture_spans(self, fixtures_dir):
        corpus = load_corpus(fixtures_dir / "ingest10.jsonl")
        assert len(corpus) == 10
        for ex, expected in zip(corpus, INGEST_EXPECTED):
            assert [tuple(t) for t in ex.triplets] == expected

    def test_fixture_warnings(self, fixtures_dir):
        corpus = load_corpus(fixtures_dir / "ingest10.jsonl")
        assert corpus.warnings["none_relation"] == 2
        assert corpus.warnings["entity_not_found"] == 1
        assert corpus.warnings["duplicate_triplet"] == 1

    def test_none_mention_filtered(self, tmp_path):
        write_jsonl(tmp_path / "c.jsonl", [{"sentText": "A met B .", "relationMentions": [
            {"em1Text": "A", "em2Text": "B", "label": "None"},
            {"em1Text": "A", "em2Text": "B", "label": "met"}]}])
        assert len(load_corpus(tmp_path / "c.jsonl")[0].triplets) == 1

    def test_malformed_line_reports_number(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"sentText": "ok .", "relationMentions": []}\n{not json\n', encoding="utf8")
        with pytest.raises(CorpusFormatError, match=":2:"):
            load_corpus(p)

    def test_missing_text_field(self, tmp_path):
        write_jsonl(tmp_path / "c.jsonl", [{"relationMentions": []}])
        with pytest.raises(CorpusFormatError):
            load_corpus(tmp_path / "c.jsonl")

    def test_unknown_label_and_auto_extend(self, tmp_path):
        write_jsonl(tmp_path / "c.jsonl", [{"sentText": "A met B .", "relationMentions": [
            {"em1Text": "A", "em2Text": "B", "label": "met"}]}])
        schema = RelationSchema(["other"])
        with pytest.raises(SchemaError):
            load_corpus(tmp_path / "c.jsonl", schema=schema)
        load_corpus(tmp_path / "c.jsonl", schema=schema, auto_extend=True)
        assert "met" in schema

    def test_truncation(self, tmp_path):
        text = " ".join(["w"] * 10)
        write_jsonl(tmp_path / "c.jsonl", [{"sentText": text, "relationMentions": []}])
        corpus = load_corpus(tmp_path / "c.jsonl", max_len=4)
        assert len(corpus[0].tokens) == 4 and corpus.warnings["truncated_sentence"] == 1

    def test_entity_past_truncation_dropped(self, tmp_path):
        write_jsonl(tmp_path / "c.jsonl", [{"sentText": "A x x x B", "relationMentions": [
            {"em1Text": "A", "em2Text": "B", "label": "r"}]}])
        corpus = load_corpus(tmp_path / "c.jsonl", max_len=3)
        assert corpus[0].triplets == [] and corpus.warnings["entity_not_found"] == 1

    def test_write_then_load_round_trip(self, tmp_path):
        corpus = generate_synthetic(0, 30, RelationSchema(DEFAULT_RELATIONS))
        write_corpus(corpus, tmp_path / "s.jsonl")
        again = load_corpus(tmp_path / "s.jsonl")
        for a, b in zip(corpus, again):
            assert a.tokens == b.tokens and set(a.triplets) == set(b.triplets)


class TestOverlap:
    def test_single_triplet_normal(self):
        assert categorize_overlap([Triplet(Span(0, 0), "r", Span(2, 2))]) == [N]

    def test_shared_entity_seo(self):
        trips = [Triplet(Span(0, 0), "r", Span(2, 2)), Triplet(Span(0, 0), "q", Span(4, 5))]
        assert categorize_overlap(trips) == [S, S]

    def test_demo_sentence_is_epo(self):
        assert categorize_overlap(epo_demo_example()) == [E, E]

    def test_reversed_pair_is_epo(self):
        trips = [Triplet(Span(0, 0), "r", Span(2, 2)), Triplet(Span(2, 2), "r", Span(0, 0))]
        assert categorize_overlap(trips) == [E, E]

    def test_epo_beats_seo(self):
        trips = [Triplet(Span(0, 0), "r", Span(2, 2)), Triplet(Span(0, 0), "q", Span(2, 2)),
                 Triplet(Span(0, 0), "s", Span(4, 4))]
        assert categorize_overlap(trips) == [E, E, S]

    def test_overlapping_but_distinct_spans_do_not_share(self):
        trips = [Triplet(Span(0, 1), "r", Span(3, 3)), Triplet(Span(1, 1), "r", Span(5, 5))]
        assert categorize_overlap(trips) == [N, N]

    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 2), st.integers(0, 3)), min_size=1, max_size=6),
           st.randoms())
    @settings(max_examples=100, deadline=None)
    def test_permutation_invariant(self, raw, rnd):
        trips = list(dict.fromkeys(Triplet(Span(a, a), r, Span(b, b)) for a, r, b in raw))
        cats = dict(zip(trips, categorize_overlap(trips)))
        shuffled = trips[:]
        rnd.shuffle(shuffled)
        assert dict(zip(shuffled, categorize_overlap(shuffled))) == cats


class TestStats:
    def test_fixture(self, fixtures_dir):
        schema = RelationSchema.load(fixtures_dir / "stats3.schema.json")
        corpus = load_corpus(fixtures_dir / "stats3.jsonl", schema=schema)
        assert corpus_stats(corpus, schema).as_tuple() == (1, 3, 1, 2, 2)

    def test_empty(self):
        assert corpus_stats([]).as_tuple() == (0, 0, 0, 0, 0)

    def test_table_layout(self, fixtures_dir):
        corpus = load_corpus(fixtures_dir / "stats3.jsonl")
        table = format_stats_table({"fixture": corpus_stats(corpus)})
        lines = table.splitlines()
        assert [l.split("  ")[0].strip() for l in lines[1:]] == [
            "# Relations", "# Sentences", "# Normal", "# SEO", "# EPO"]
        assert lines[3].split()[-1] == "1"


class TestSynthetic:
    schema = RelationSchema(DEFAULT_RELATIONS)

    def test_deterministic(self):
        a = generate_synthetic(5, 40, self.schema)
        b = generate_synthetic(5, 40, self.schema)
        assert [x.to_json() for x in a] == [x.to_json() for x in b]

    def test_all_normal(self):
        corpus = generate_synthetic(1, 60, self.schema, (1.0, 0.0, 0.0))
        st_ = corpus_stats(corpus)
        assert st_.seo == 0 and st_.epo == 0 and st_.normal > 0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_mix_within_ten_percent(self, seed):
        st_ = corpus_stats(generate_synthetic(seed, 100, self.schema, (0.4, 0.4, 0.2)))
        total = st_.normal + st_.seo + st_.epo
        for got, want in zip((st_.normal, st_.seo, st_.epo), (0.4, 0.4, 0.2)):
            assert abs(got / total - want) <= 0.1

    def test_entity_lengths_cover_one_to_five(self):
        corpus = generate_synthetic(0, 300, self.schema)
        lengths = {s.length for ex in corpus for t in ex.triplets for s in (t.subject, t.object)}
        assert lengths == {1, 2, 3, 4, 5}

    def test_annotations_match_text(self):
        corpus = generate_synthetic(4, 50, self.schema)
        for ex in corpus:
            assert ex.text == " ".join(ex.tokens)
            for t in ex.triplets:
                assert t.subject.valid_for(len(ex.tokens)) and t.object.valid_for(len(ex.tokens))

    def test_cue_words_present(self):
        ex = generate_synthetic(0, 1, RelationSchema(["born_in"]), (1.0, 0.0, 0.0))[0]
        assert "born" in ex.tokens and cue_tokens("born_in") == ["born", "in"]

    def test_invalid_mix(self):
        with pytest.raises(SyntheticConfigError):
            generate_synthetic(0, 10, self.schema, (0.5, 0.5, 0.5))
        with pytest.raises(SyntheticConfigError):
            generate_synthetic(0, 10, RelationSchema(["only"]), (0.5, 0.3, 0.2))

    def test_demo_sentence(self):
        ex = epo_demo_example()
        assert ex.span_text(ex.triplets[0].subject) == "IBM"
        assert ex.span_text(ex.triplets[0].object) == "Informix"
        assert {t.relation for t in ex.triplets} == {"parent_company_of", "shareholders_of"}
