import random

import pytest

from graphseg.corpus import (CorpusError, Lexicon, NormalizationError,
                             Sentence, build_lexicon, from_bmes, is_legal_labels,
                             load_segmented_corpus, normalize, oov_words,
                             split_train_dev, to_bmes, LAT_TOKEN, NUM_TOKEN,
                             PUNC_TOKEN)


class TestNormalize:
    def test_digit_run_collapses(self):
        assert normalize("共123人") == f"共{NUM_TOKEN}人"

    def test_fullwidth_latin_unified(self):
        assert normalize("ＡＢＣ") == LAT_TOKEN
        assert normalize("ABC") == LAT_TOKEN

    def test_fullwidth_digits_unified(self):
        assert normalize("１２３") == normalize("123") == NUM_TOKEN

    def test_cjk_passthrough(self):
        assert normalize("武汉市长江大桥") == "武汉市长江大桥"

    def test_punctuation_per_codepoint(self):
        assert normalize("。，") == PUNC_TOKEN * 2

    def test_idempotent(self):
        rng = random.Random(5)
        pools = "武汉市长江大桥019８ＡzＢ。，（）  \tabc汉"
        for _ in range(200):
            text = "".join(rng.choice(pools) for _ in range(rng.randint(0, 12)))
            once = normalize(text)
            assert normalize(once) == once

    def test_surrogate_rejected_with_position(self):
        with pytest.raises(NormalizationError) as exc:
            normalize("共\ud800人")
        assert exc.value.position == 1

    def test_token_count_matches_sentence(self):
        sent = Sentence.from_raw("共123人ＡＢ。")
        assert sent.tokens == ("共", NUM_TOKEN, "人", LAT_TOKEN, PUNC_TOKEN)
        assert [sent.raw[b:e] for b, e in sent.offsets] == ["共", "123", "人", "ＡＢ", "。"]

    def test_offsets_strictly_increasing(self):
        sent = Sentence.from_raw("a1武。b")
        starts = [b for b, _ in sent.offsets]
        assert starts == sorted(set(starts))


class TestBmes:
    def test_paper_example(self):
        assert to_bmes(["武汉市", "长江", "大桥"]) == "BMEBEBE"

    def test_single_char_word(self):
        assert to_bmes(["人"]) == "S"

    def test_empty_word_rejected(self):
        with pytest.raises(CorpusError):
            to_bmes(["武汉", ""])
        with pytest.raises(CorpusError):
            to_bmes([])

    def test_from_bmes_inverse(self):
        spans, repaired = from_bmes("BMEBEBE", 7)
        assert spans == [(0, 3), (3, 5), (5, 7)]
        assert not repaired

    def test_all_singles(self):
        spans, repaired = from_bmes("SSSS")
        assert spans == [(0, 1), (1, 2), (2, 3), (3, 4)]
        assert not repaired

    def test_repair_bbe(self):
        # greedy fix-up by hand: first B closes when the second opens
        spans, repaired = from_bmes("BBE")
        assert spans == [(0, 1), (1, 3)]
        assert repaired

    def test_repair_dangling(self):
        assert from_bmes("ME") == ([(0, 2)], True)
        assert from_bmes("EB") == ([(0, 1), (1, 2)], True)
        assert from_bmes("BM") == ([(0, 2)], True)

    def test_length_mismatch_rejected(self):
        with pytest.raises(CorpusError):
            from_bmes("BE", 3)

    def test_roundtrip_property(self):
        rng = random.Random(11)
        for _ in range(500):
            n = rng.randint(1, 30)
            cuts = sorted(rng.sample(range(1, n), rng.randint(0, n - 1))) if n > 1 else []
            bounds = [0] + cuts + [n]
            words = [b - a for a, b in zip(bounds, bounds[1:])]
            labels = to_bmes(words)
            assert is_legal_labels(labels)
            spans, repaired = from_bmes(labels, n)
            assert not repaired
            assert spans == list(zip(bounds, bounds[1:]))


class TestLoad:
    def test_wuhan_line(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("武汉市 长江 大桥\n", encoding="utf-8")
        corpus = load_segmented_corpus(p)
        assert len(corpus) == 1
        sent, spans = corpus.sentences[0]
        assert len(sent) == 7
        assert spans == [(0, 3), (3, 5), (5, 7)]

    def test_empty_file_warns(self, tmp_path, caplog):
        p = tmp_path / "c.txt"
        p.write_text("", encoding="utf-8")
        with caplog.at_level("WARNING"):
            corpus = load_segmented_corpus(p)
        assert len(corpus) == 0
        assert any("empty corpus" in r.message for r in caplog.records)

    def test_latin_word_normalized(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("IBM 公司\n", encoding="utf-8")
        corpus = load_segmented_corpus(p)
        sent, spans = corpus.sentences[0]
        # derived by hand: normalize then label each word
        assert sent.tokens == (LAT_TOKEN, "公", "司")
        assert spans == [(0, 1), (1, 3)]

    def test_latin_runs_do_not_merge_across_words(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("IBM PC\n", encoding="utf-8")
        sent, spans = load_segmented_corpus(p).sentences[0]
        assert sent.tokens == (LAT_TOKEN, LAT_TOKEN)
        assert spans == [(0, 1), (1, 2)]

    def test_empty_lines_skipped_and_counted(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("人\n\n\n山 水\n", encoding="utf-8")
        corpus = load_segmented_corpus(p)
        assert len(corpus) == 2
        assert corpus.n_skipped == 2

    def test_embedded_whitespace_rejected(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("武汉\t市 长江\n", encoding="utf-8")
        with pytest.raises(CorpusError):
            load_segmented_corpus(p)

    def test_invalid_utf8_rejected_with_position(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_bytes("人 ".encode("utf-8") + b"\xff\xfe")
        with pytest.raises(CorpusError) as exc:
            load_segmented_corpus(p)
        assert "byte" in str(exc.value)

    def test_long_sentence_split_at_punctuation(self, tmp_path):
        words = ["春夏" for _ in range(6)] + ["。"] + ["秋冬" for _ in range(6)]
        p = tmp_path / "c.txt"
        p.write_text(" ".join(words) + "\n", encoding="utf-8")
        corpus = load_segmented_corpus(p, max_len=16)
        assert len(corpus) == 2
        lens = [len(sent) for sent, _ in corpus.sentences]
        assert all(n <= 16 for n in lens)
        assert {sent.line_no for sent, _ in corpus.sentences} == {0}
        # pieces together cover the original words
        text = "".join(sent.text for sent, _ in corpus.sentences)
        assert text == normalize("".join(words))

    def test_line_numbers_recorded(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("人\n山\n", encoding="utf-8")
        corpus = load_segmented_corpus(p)
        assert [sent.line_no for sent, _ in corpus.sentences] == [0, 1]


class TestSplit:
    def _corpus(self, n):
        from helpers import corpus_from_words

        return corpus_from_words([[c] for c in ["人"] * n])

    def test_ratio_split(self):
        train, dev = split_train_dev(self._corpus(100), 0.1, seed=7)
        assert len(train) == 90 and len(dev) == 10

    def test_small_corpus_dev_at_least_one(self):
        train, dev = split_train_dev(self._corpus(5), 0.1, seed=7)
        assert len(dev) == 1 and len(train) == 4

    def test_deterministic_and_exhaustive(self):
        from helpers import corpus_from_words

        corpus = corpus_from_words([["春夏", "秋冬"], ["人"], ["山", "水"], ["中年"]] * 5)
        a = split_train_dev(corpus, 0.25, seed=3)
        b = split_train_dev(corpus, 0.25, seed=3)
        assert [s.raw for s, _ in a[0]] == [s.raw for s, _ in b[0]]
        assert [s.raw for s, _ in a[1]] == [s.raw for s, _ in b[1]]
        assert len(a[0]) + len(a[1]) == len(corpus)

    def test_too_small_rejected(self):
        with pytest.raises(CorpusError):
            split_train_dev(self._corpus(1), 0.1, seed=0)

    def test_bad_ratio_rejected(self):
        with pytest.raises(CorpusError):
            split_train_dev(self._corpus(10), 1.5, seed=0)


class TestLexicon:
    def test_counts(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("武汉市 长江 大桥\n长江 大桥\n", encoding="utf-8")
        lex = build_lexicon(load_segmented_corpus(p))
        assert lex.counts == {"武汉市": 1, "长江": 2, "大桥": 2}

    def test_single_sentence(self):
        from helpers import corpus_from_words

        lex = build_lexicon(corpus_from_words([["人"]]))
        assert lex.counts == {"人": 1}

    def test_unseen_membership(self):
        from helpers import corpus_from_words

        lex = build_lexicon(corpus_from_words([["人"]]))
        assert "山" not in lex

    def test_counts_sum_to_gold_spans(self):
        from helpers import corpus_from_words

        corpus = corpus_from_words([["春夏", "人"], ["春夏", "秋冬", "人"]])
        lex = build_lexicon(corpus)
        assert lex.total() == sum(len(spans) for _, spans in corpus)

    def test_file_roundtrip(self, tmp_path):
        lex = Lexicon(counts={"长江": 2, "武汉市": 1})
        path = tmp_path / "lex.tsv"
        lex.save(path)
        assert Lexicon.load(path).counts == lex.counts

    def test_empty_word_rejected(self):
        with pytest.raises(CorpusError):
            Lexicon().add("")


class TestOov:
    def test_half_oov(self):
        from helpers import corpus_from_words

        lex = Lexicon(counts={"长江": 1, "大桥": 1})
        test = corpus_from_words([["武汉市", "长江"]])
        report = oov_words(test, lex)
        assert report.spans == {(0, 0, 3)}
        assert report.rate == 0.5

    def test_no_oov(self):
        from helpers import corpus_from_words

        lex = Lexicon(counts={"长江": 1})
        assert oov_words(corpus_from_words([["长江"]]), lex).rate == 0.0

    def test_empty_lexicon_all_oov(self):
        from helpers import corpus_from_words

        report = oov_words(corpus_from_words([["长江", "大桥"]]), Lexicon())
        assert report.rate == 1.0
