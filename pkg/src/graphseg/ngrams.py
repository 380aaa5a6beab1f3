"""Unsupervised n-gram vocabulary construction via accessor variety.

For a string s of two or more characters, the left accessor variety is the
number of distinct characters preceding s anywhere in the corpus plus the
number of distinct sentences in which s occurs sentence-initially; the
right accessor variety mirrors this with following characters and
sentence-final occurrences.  The score of s is min(left, right), and the
vocabulary keeps strings passing length, frequency and score thresholds.

Counting never crosses sentence boundaries and operates on normalized
tokens, so an entry's length is its number of token positions.
"""

from __future__ import annotations

import random
from collections import namedtuple
from dataclasses import dataclass, field

from .corpus import Corpus, scan

AccessorCounts = namedtuple("AccessorCounts", "frequency l_av r_av")

# accumulator slots: [frequency, predecessors, successors, initial-sentence
# ids, final-sentence ids]
_FREQ, _PRED, _SUCC, _INIT, _FINAL = range(5)


def token_length(s: str) -> int:
    """Number of token positions a normalized string occupies."""
    return len(scan(s))


def count_shard(sentences, max_len: int, base_index: int = 0) -> dict:
    """Accumulate accessor statistics for one shard of sentences.

    Sentence identity (for the initial/final sets) is the global sentence
    index ``base_index + local position``, so shards merge associatively.
    """
    acc: dict[tuple[str, ...], list] = {}
    for off, sent in enumerate(sentences):
        toks = sent.tokens if hasattr(sent, "tokens") else tuple(sent)
        sid = base_index + off
        n = len(toks)
        for i in range(n):
            for j in range(i + 2, min(i + max_len, n) + 1):
                key = toks[i:j]
                a = acc.get(key)
                if a is None:
                    a = [0, set(), set(), set(), set()]
                    acc[key] = a
                a[_FREQ] += 1
                if i == 0:
                    a[_INIT].add(sid)
                else:
                    a[_PRED].add(toks[i - 1])
                if j == n:
                    a[_FINAL].add(sid)
                else:
                    a[_SUCC].add(toks[j])
    return acc


def merge_counts(shards) -> dict:
    """Associative merge of shard accumulators; order-insensitive."""
    merged: dict[tuple[str, ...], list] = {}
    for shard in shards:
        for key, a in shard.items():
            m = merged.get(key)
            if m is None:
                merged[key] = [a[_FREQ], set(a[_PRED]), set(a[_SUCC]), set(a[_INIT]), set(a[_FINAL])]
            else:
                m[_FREQ] += a[_FREQ]
                for slot in (_PRED, _SUCC, _INIT, _FINAL):
                    m[slot].update(a[slot])
    return merged


def accessor_counts(corpus: Corpus, max_len: int, workers: int = 1) -> dict[str, AccessorCounts]:
    """Frequency and left/right accessor variety for every substring of
    length 2..max_len, with overlapping occurrences counted."""
    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    sentences = [sent for sent, _ in corpus]
    if workers > 1 and len(sentences) > 1:
        size = (len(sentences) + workers - 1) // workers
        shards = [
            count_shard(sentences[k : k + size], max_len, base_index=k)
            for k in range(0, len(sentences), size)
        ]
        acc = merge_counts(shards)
    else:
        acc = count_shard(sentences, max_len)
    out = {}
    for key, a in acc.items():
        out["".join(key)] = AccessorCounts(
            frequency=a[_FREQ],
            l_av=len(a[_PRED]) + len(a[_INIT]),
            r_av=len(a[_SUCC]) + len(a[_FINAL]),
        )
    return out


@dataclass
class NgramVocab:
    """High-scoring n-grams: string -> (frequency, accessor variety)."""

    entries: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __contains__(self, s: str) -> bool:
        return s in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def max_token_len(self) -> int:
        return max((token_length(s) for s in self.entries), default=0)

    def save(self, path) -> None:
        rows = sorted(self.entries.items(), key=lambda kv: (token_length(kv[0]), kv[0]))
        with open(path, "w", encoding="utf-8") as f:
            for s, (freq, av) in rows:
                f.write(f"{s}\t{freq}\t{av}\n")

    @classmethod
    def load(cls, path) -> "NgramVocab":
        vocab = cls()
        with open(path, encoding="utf-8") as f:
            for ln, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    s, freq, av = line.split("\t")
                    vocab.entries[s] = (int(freq), int(av))
                except ValueError as exc:
                    raise ValueError(f"{path}:{ln}: bad vocabulary line {line!r}") from exc
        return vocab


def extract_ngrams(
    corpus: Corpus,
    max_len: int = 5,
    min_freq: int = 5,
    av_threshold: int = 2,
    workers: int = 1,
) -> NgramVocab:
    """Keep substrings with frequency >= min_freq and accessor variety
    min(left, right) >= av_threshold."""
    if min(max_len, min_freq, av_threshold) < 1:
        raise ValueError("thresholds must be at least 1")
    vocab = NgramVocab()
    if not len(corpus):
        return vocab
    for s, c in accessor_counts(corpus, max_len, workers=workers).items():
        av = min(c.l_av, c.r_av)
        if c.frequency >= min_freq and av >= av_threshold:
            vocab.entries[s] = (c.frequency, av)
    return vocab


def subsample_vocab(vocab: NgramVocab, fraction: float, seed: int) -> NgramVocab:
    """Uniform random subset of round(fraction * size) entries."""
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    keys = sorted(vocab.entries)
    k = round(fraction * len(keys))
    keep = keys if k >= len(keys) else random.Random(seed).sample(keys, k)
    return NgramVocab(entries={s: vocab.entries[s] for s in sorted(keep)})
