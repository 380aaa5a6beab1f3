import random

import numpy as np
import pytest

from graphseg.corpus import Lexicon, Sentence
from graphseg.graph import (CHAR, GraphConfig, GraphConfigError, LEX_SOURCE,
                            NGRAM, NGRAM_SOURCE, WORD, build_graph, dump_graph,
                            edges_to_adjacency, match_spans,
                            normalize_adjacency)
from graphseg.ngrams import NgramVocab
from graphseg.parses import DepParse

SENT = Sentence.from_raw("武汉市长江大桥")
LEX = Lexicon(counts={"武汉": 1, "市长": 1, "长江": 1, "大桥": 1})
VOCAB = NgramVocab(entries={"长江大桥": (6, 3)})
PARSE = DepParse(tokens=["武汉市", "长江", "大桥"], heads=[3, 3, 0],
                 spans=[(0, 3), (3, 5), (5, 7)])


class TestMatchSpans:
    def test_figure_sentence_matches(self):
        matches = match_spans(SENT, LEX, VOCAB, GraphConfig())
        assert matches == [
            ((0, 2), LEX_SOURCE),
            ((2, 4), LEX_SOURCE),
            ((3, 5), LEX_SOURCE),
            ((3, 7), NGRAM_SOURCE),
            ((5, 7), LEX_SOURCE),
        ]

    def test_empty_sources(self):
        assert match_spans(SENT, Lexicon(), NgramVocab(), GraphConfig()) == []

    def test_lexicon_wins_on_overlap(self):
        both = NgramVocab(entries={"长江": (9, 9), "长江大桥": (6, 3)})
        matches = match_spans(SENT, LEX, both, GraphConfig())
        assert ((3, 5), LEX_SOURCE) in matches
        assert ((3, 5), NGRAM_SOURCE) not in matches

    def test_overlapping_self_match(self):
        sent = Sentence.from_tokens(["甲", "甲", "甲"])
        lex = Lexicon(counts={"甲甲": 1})
        matches = match_spans(sent, lex, None, GraphConfig())
        assert matches == [((0, 2), LEX_SOURCE), ((1, 3), LEX_SOURCE)]

    def test_source_toggles(self):
        no_lex = match_spans(SENT, LEX, VOCAB, GraphConfig(use_lexicon=False))
        assert no_lex == [((3, 7), NGRAM_SOURCE)]
        no_ng = match_spans(SENT, LEX, VOCAB, GraphConfig(use_ngrams=False))
        assert all(src == LEX_SOURCE for _, src in no_ng)

    def test_single_char_words_never_match(self):
        lex = Lexicon(counts={"市": 3})
        assert match_spans(SENT, lex, None, GraphConfig()) == []


class TestBuildGraph:
    def figure_graph(self, config=GraphConfig()):
        matches = match_spans(SENT, LEX, VOCAB, config)
        return build_graph(SENT, matches, parse=PARSE, config=config)

    def test_node_inventory(self):
        g = self.figure_graph()
        assert len(g) == 7 + 5
        assert [n.kind for n in g.nodes[:7]] == [CHAR] * 7
        assert [n.surface for n in g.nodes[7:]] == ["武汉", "市长", "长江", "长江大桥", "大桥"]
        assert [n.kind for n in g.nodes[7:]] == [WORD, WORD, WORD, NGRAM, WORD]

    def test_edge_counts_match_analytic_formulas(self):
        g = self.figure_graph()
        # syntax: 2*3 (大桥->武汉市) + 2*2 (大桥->长江) crossed characters
        assert len(g.edges["OUT"]) == 10
        assert len(g.edges["IN"]) == 10
        # candidates: 2 edges per match, plus the T-1 character chain
        assert len(g.edges["CWN"]) == 2 * 5 + 6
        assert sum(g.adj[rel].nnz for rel in g.relations) == 10 + 10 + 16

    def test_char3_candidate_connections(self):
        # the character at index 3 closes 市长, opens 长江 and opens 长江大桥
        g = self.figure_graph()
        word_index = {n.surface: 7 + k for k, n in enumerate(g.nodes[7:])}
        cwn = set(g.edges["CWN"])
        assert (word_index["市长"], 3) in cwn
        assert (3, word_index["长江"]) in cwn
        assert (3, word_index["长江大桥"]) in cwn
        touching = {
            g.nodes[a if a >= 7 else b].surface
            for a, b in cwn
            if (a == 3 and b >= 7) or (b == 3 and a >= 7)
        }
        assert touching == {"市长", "长江", "长江大桥"}

    def test_config_invariant(self):
        with pytest.raises(GraphConfigError):
            GraphConfig(use_syntax=False, use_cwn=False)

    def test_no_parse_fallback(self):
        matches = match_spans(SENT, LEX, VOCAB, GraphConfig())
        g = build_graph(SENT, matches, parse=None, config=GraphConfig())
        assert g.adj["IN"].nnz == 0 and g.adj["OUT"].nnz == 0
        assert np.allclose(g.norm["IN"].toarray(), np.eye(len(g)))

    def test_deterministic(self):
        a, b = self.figure_graph(), self.figure_graph()
        assert a.nodes == b.nodes
        for rel in a.relations:
            assert (a.adj[rel] != b.adj[rel]).nnz == 0
            assert np.array_equal(a.norm[rel].toarray(), b.norm[rel].toarray())

    def test_disabling_subgraphs(self):
        no_syntax = GraphConfig(use_syntax=False)
        g = build_graph(SENT, match_spans(SENT, LEX, VOCAB, no_syntax),
                        parse=PARSE, config=no_syntax)
        assert g.relations == ("CWN",)
        no_cwn = GraphConfig(use_cwn=False)
        g2 = build_graph(SENT, match_spans(SENT, LEX, VOCAB, no_cwn), parse=PARSE, config=no_cwn)
        assert g2.relations == ("IN", "OUT")
        assert len(g2) == 7  # candidate nodes gone, characters unchanged
        assert [n.surface for n in g2.nodes] == list(SENT.tokens)

    def test_split_cwn_partition(self):
        cfg = GraphConfig(split_cwn=True)
        matches = match_spans(SENT, LEX, VOCAB, cfg)
        g = build_graph(SENT, matches, parse=PARSE, config=cfg)
        assert g.relations == ("IN", "OUT", "CWN_BEG", "CWN_END", "CWN_SEQ")
        merged = sorted(g.edges["CWN_BEG"] + g.edges["CWN_END"] + g.edges["CWN_SEQ"])
        base = build_graph(SENT, matches, parse=PARSE, config=GraphConfig())
        assert merged == sorted(base.edges["CWN"])

    def test_both_directions_mode(self):
        cfg = GraphConfig(cwn_both_directions=True)
        matches = match_spans(SENT, LEX, VOCAB, cfg)
        g = build_graph(SENT, matches, parse=None, config=cfg)
        assert len(g.edges["CWN"]) == 4 * 5 + 6

    def test_dump_format(self):
        sent = Sentence.from_tokens(["人", "间"])
        lex = Lexicon(counts={"人间": 1})
        cfg = GraphConfig(use_syntax=False)
        g = build_graph(sent, match_spans(sent, lex, None, cfg), config=cfg)
        assert dump_graph(g).splitlines() == [
            "node\tCHAR:0\t人\t0\t1",
            "node\tCHAR:1\t间\t1\t2",
            "node\tWORD:0\t人间\t0\t2",
            "CWN\tCHAR:0\tCHAR:1",
            "CWN\tCHAR:0\tWORD:0",
            "CWN\tWORD:0\tCHAR:1",
        ]


class TestNormalizeAdjacency:
    def test_isolated_node(self):
        out = normalize_adjacency(np.zeros((1, 1))).toarray()
        assert np.array_equal(out, [[1.0]])

    def test_mutual_pair(self):
        A = np.array([[0.0, 1.0], [1.0, 0.0]])
        out = normalize_adjacency(A).toarray()
        assert np.allclose(out, 0.5 * np.ones((2, 2)))

    def test_three_cycle_row_sums(self):
        A = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]], dtype=float)
        out = normalize_adjacency(A).toarray()
        assert np.allclose(out.sum(axis=1), 1.0)
        assert np.allclose(out[out > 0], 1.0 / 3.0)

    def test_support_equals_a_plus_i(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            n = rng.integers(2, 9)
            A = (rng.random((n, n)) < 0.3).astype(float)
            np.fill_diagonal(A, 0.0)
            out = normalize_adjacency(A).toarray()
            assert np.array_equal(out > 0, (A + np.eye(n)) > 0)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            normalize_adjacency(np.zeros((2, 3)))


class TestEdgeCountInvariant:
    def test_random_graphs(self):
        rng = random.Random(1)
        pool = "甲乙丙丁戊己庚辛壬癸"
        for _ in range(15):
            T = rng.randint(2, 8)
            toks = [rng.choice(pool) for _ in range(T)]
            sent = Sentence.from_tokens(toks)
            lex = Lexicon()
            for _ in range(rng.randint(0, 3)):
                b = rng.randrange(T - 1)
                e = rng.randint(b + 2, min(T, b + 3))
                lex.add("".join(toks[b:e]))
            cut = rng.randint(1, T - 1)
            parse = DepParse(
                tokens=["".join(toks[:cut]), "".join(toks[cut:])],
                heads=[2, 0], spans=[(0, cut), (cut, T)])
            matches = match_spans(sent, lex, None, GraphConfig())
            g = build_graph(sent, matches, parse=parse, config=GraphConfig())
            syntax = cut * (T - cut)
            total = sum(g.adj[rel].nnz for rel in g.relations)
            assert total == 2 * syntax + 2 * len(matches) + (T - 1)

    def test_storage_order_independent(self):
        edges = [(0, 1), (2, 3), (1, 2), (3, 0)]
        a = edges_to_adjacency(edges, 4)
        b = edges_to_adjacency(list(reversed(edges)), 4)
        assert np.array_equal(a.toarray(), b.toarray())
        na, nb = normalize_adjacency(a), normalize_adjacency(b)
        assert np.array_equal(na.toarray(), nb.toarray())
