"""Shared test utilities: in-memory corpora, independent oracles and
synthetic dataset generators."""

from __future__ import annotations

import itertools
import random

import numpy as np

from graphseg.corpus import Corpus, Sentence

# normalization-neutral character pools (CJK passes the normalizer untouched)
POOL_A = "东南西北中春夏秋冬年"
POOL_S = "甲乙丙丁戊己庚辛壬癸"


def corpus_from_words(sentences_of_words, split: str = "") -> Corpus:
    """Corpus from lists of already-normalized words (1 token per char)."""
    items = []
    for line_no, words in enumerate(sentences_of_words):
        toks = [c for w in words for c in w]
        spans, pos = [], 0
        for w in words:
            spans.append((pos, pos + len(w)))
            pos += len(w)
        items.append((Sentence.from_tokens(toks, line_no=line_no), spans))
    return Corpus(sentences=items, split=split)


def write_corpus(path, sentences_of_words) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for words in sentences_of_words:
            f.write(" ".join(words) + "\n")


# ---------------------------------------------------------------------------
# CRF enumeration oracle

def crf_enumerate(s: np.ndarray, trans: np.ndarray):
    """Scores of every label sequence by exhaustive enumeration."""
    T, L = s.shape
    seqs = np.array(list(itertools.product(range(L), repeat=T)), dtype=np.int64)
    scores = s[np.arange(T)[None, :], seqs].sum(axis=1)
    if T > 1:
        scores = scores + trans[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
    return seqs, scores


def brute_log_partition(s, trans) -> float:
    _, scores = crf_enumerate(s, trans)
    m = scores.max()
    return float(m + np.log(np.exp(scores - m).sum()))


def brute_viterbi(s, trans):
    """(best score, argmax sequence) with ties resolved like the decoder:
    the smallest label index wins at each backtracking step, i.e. the
    sequence minimal under reversed lexicographic order."""
    seqs, scores = crf_enumerate(s, trans)
    best = scores.max()
    tied = [tuple(seq) for seq, sc in zip(seqs, scores) if sc >= best - 1e-12]
    pick = min(tied, key=lambda t: tuple(reversed(t)))
    return float(best), np.array(pick, dtype=np.int64)


# ---------------------------------------------------------------------------
# accessor-variety brute-force oracle (nested-loop substring scan)

def brute_accessor_counts(corpus: Corpus, max_len: int) -> dict:
    sentences = [sent.tokens for sent, _ in corpus]
    candidates = set()
    for toks in sentences:
        for i in range(len(toks)):
            for j in range(i + 2, min(i + max_len, len(toks)) + 1):
                candidates.add(toks[i:j])
    out = {}
    for cand in candidates:
        k = len(cand)
        freq = 0
        preds, succs, init_ids, final_ids = set(), set(), set(), set()
        for sid, toks in enumerate(sentences):
            for i in range(len(toks) - k + 1):
                if toks[i : i + k] != cand:
                    continue
                freq += 1
                if i == 0:
                    init_ids.add(sid)
                else:
                    preds.add(toks[i - 1])
                if i + k == len(toks):
                    final_ids.add(sid)
                else:
                    succs.add(toks[i + k])
        out["".join(cand)] = (freq, len(preds) + len(init_ids), len(succs) + len(final_ids))
    return out


# ---------------------------------------------------------------------------
# dense graph-convolution reference

def dense_normalize(A: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    sym = ((A + A.T) > 0).astype(float)
    deg = 1.0 + sym.sum(axis=1)
    return (A + np.eye(n)) / np.sqrt(np.outer(deg, deg))


def dense_layer_reference(H, graph, weights, activation="relu"):
    pre = np.zeros_like(H)
    for rel in graph.relations:
        rw = weights[rel]
        A = graph.adj[rel].toarray()
        An = dense_normalize(A)
        g = 1.0 / (1.0 + np.exp(-(H @ rw.gate_w + float(rw.gate_b))))
        pre += An @ (g[:, None] * (H @ rw.w))
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "tanh":
        return np.tanh(pre)
    return pre


# ---------------------------------------------------------------------------
# synthetic sentence generators

def random_word_sentences(rng: random.Random, words, singles, n_sentences,
                          n_items=(3, 6), extra_words=(), extra_prob=0.0):
    """Sentences as word lists; never places two singles next to each other
    so multi-char strings of single-character words stay rare."""
    out = []
    for _ in range(n_sentences):
        items = []
        prev_single = True  # avoid a leading single
        for _ in range(rng.randint(*n_items)):
            if extra_words and rng.random() < extra_prob:
                items.append(rng.choice(extra_words))
                prev_single = False
            elif not prev_single and singles and rng.random() < 0.3:
                items.append(rng.choice(singles))
                prev_single = True
            else:
                items.append(rng.choice(words))
                prev_single = False
        out.append(items)
    return out


# fixed inventories for the training-vs-OOV constructions
TRAIN_WORDS = [
    "东南", "西北", "中春", "夏秋", "冬年", "东夏", "南冬", "北春", "中年", "秋东",
    "甲东", "乙南丙", "丁西", "戊北己", "庚中", "辛春壬", "癸夏", "甲乙秋", "丙冬丁", "戊年",
]
OOV_WORDS = ["甲丙戊", "乙丁己", "庚壬甲", "辛癸乙", "丙庚辛", "丁壬癸", "己甲丁", "戊乙庚"]
