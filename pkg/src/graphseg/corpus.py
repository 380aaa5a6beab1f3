"""Corpus ingestion, text normalization and BMES label handling.

Corpus files are UTF-8, one sentence per line, words separated by single
ASCII spaces.  Digits, Latin letters and punctuation are rewritten to the
reserved tokens ``⟨NUM⟩`` / ``⟨LAT⟩`` / ``⟨PUNC⟩`` so that full-width and
half-width variants fall together; a digit or letter run collapses to one
token position, punctuation is replaced one codepoint at a time.
"""

from __future__ import annotations

import logging
import random
import unicodedata
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

NUM_TOKEN = "⟨NUM⟩"
LAT_TOKEN = "⟨LAT⟩"
PUNC_TOKEN = "⟨PUNC⟩"
RESERVED_TOKENS = (NUM_TOKEN, LAT_TOKEN, PUNC_TOKEN)

LABELS = "BMES"
B, M, E, S = 0, 1, 2, 3
# y -> set of labels allowed to follow y
LEGAL_NEXT = {"B": "ME", "M": "ME", "E": "BS", "S": "BS"}
LEGAL_FIRST = "BS"
LEGAL_LAST = "ES"

Span = tuple[int, int]


class CorpusError(ValueError):
    """Malformed corpus input."""


class NormalizationError(CorpusError):
    """Text that cannot be normalized; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


def _is_latin(ch: str) -> bool:
    if "a" <= ch <= "z" or "A" <= ch <= "Z":
        return True
    cp = ord(ch)
    if 0xFF21 <= cp <= 0xFF3A or 0xFF41 <= cp <= 0xFF5A:  # full-width A-Z a-z
        return True
    if 0x00C0 <= cp <= 0x024F:  # Latin-1 supplement / Latin Extended A+B
        return unicodedata.category(ch).startswith("L")
    return False


def _is_digit(ch: str) -> bool:
    return unicodedata.category(ch) == "Nd"


def _is_punct(ch: str) -> bool:
    # P*/S* plus separators and controls; covers the CJK punctuation block.
    return unicodedata.category(ch)[0] in "PSZC"


def scan(text: str) -> list[tuple[str, int, int]]:
    """Tokenize raw text into normalized tokens with codepoint spans.

    Returns (token, start, end) triples; ``end`` is exclusive.  Reserved
    tokens already present in the input are kept as single tokens, which
    makes normalization idempotent.
    """
    out = []
    i, n = 0, len(text)
    while i < n:
        matched = False
        for tok in RESERVED_TOKENS:
            if text.startswith(tok, i):
                out.append((tok, i, i + len(tok)))
                i += len(tok)
                matched = True
                break
        if matched:
            continue
        ch = text[i]
        if 0xD800 <= ord(ch) <= 0xDFFF:
            raise NormalizationError("invalid surrogate codepoint", i)
        if _is_digit(ch):
            j = i + 1
            while j < n and _is_digit(text[j]):
                j += 1
            out.append((NUM_TOKEN, i, j))
            i = j
        elif _is_latin(ch):
            j = i + 1
            while j < n and _is_latin(text[j]):
                j += 1
            out.append((LAT_TOKEN, i, j))
            i = j
        elif _is_punct(ch):
            out.append((PUNC_TOKEN, i, i + 1))
            i += 1
        else:
            out.append((ch, i, i + 1))
            i += 1
    return out


def normalize(text: str) -> str:
    """Normalize raw text; idempotent."""
    return "".join(tok for tok, _, _ in scan(text))


@dataclass(frozen=True)
class Sentence:
    """Normalized token sequence with alignment back to the original text."""

    tokens: tuple[str, ...]
    raw: str
    offsets: tuple[Span, ...]  # per-token codepoint span in raw
    line_no: int = -1

    @classmethod
    def from_raw(cls, raw: str, line_no: int = -1) -> "Sentence":
        parts = scan(raw)
        return cls(
            tokens=tuple(t for t, _, _ in parts),
            raw=raw,
            offsets=tuple((b, e) for _, b, e in parts),
            line_no=line_no,
        )

    @classmethod
    def from_tokens(cls, tokens, line_no: int = -1) -> "Sentence":
        """Build a sentence directly from already-normalized tokens."""
        tokens = tuple(tokens)
        offsets = []
        pos = 0
        for t in tokens:
            offsets.append((pos, pos + len(t)))
            pos += len(t)
        return cls(tokens=tokens, raw="".join(tokens), offsets=tuple(offsets), line_no=line_no)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return "".join(self.tokens)

    def span_raw(self, span: Span) -> str:
        """Original text covered by a token span."""
        b, e = span
        if b >= e:
            return ""
        return self.raw[self.offsets[b][0] : self.offsets[e - 1][1]]

    def span_text(self, span: Span) -> str:
        return "".join(self.tokens[span[0] : span[1]])


@dataclass
class Corpus:
    """Sentences paired with their gold word spans."""

    sentences: list[tuple[Sentence, list[Span]]] = field(default_factory=list)
    split: str = ""
    n_skipped: int = 0

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def gold_words(self):
        """Yield (sentence_index, span, word string) for every gold word."""
        for i, (sent, spans) in enumerate(self.sentences):
            for sp in spans:
                yield i, sp, sent.span_text(sp)


@dataclass
class Lexicon:
    """Word list with occurrence counts; membership is exact-match."""

    counts: dict[str, int] = field(default_factory=dict)

    def add(self, word: str, n: int = 1) -> None:
        if not word:
            raise CorpusError("empty word cannot enter the lexicon")
        if n < 1:
            raise CorpusError("lexicon counts must be positive")
        self.counts[word] = self.counts.get(word, 0) + n

    def __contains__(self, word: str) -> bool:
        return word in self.counts

    def __len__(self) -> int:
        return len(self.counts)

    def total(self) -> int:
        return sum(self.counts.values())

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for word in sorted(self.counts):
                f.write(f"{word}\t{self.counts[word]}\n")

    @classmethod
    def load(cls, path) -> "Lexicon":
        lex = cls()
        with open(path, encoding="utf-8") as f:
            for ln, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    word, count = line.split("\t")
                    lex.add(word, int(count))
                except ValueError as exc:
                    raise CorpusError(f"{path}:{ln}: bad lexicon line {line!r}") from exc
        return lex


def to_bmes(words) -> str:
    """BMES labels for a word sequence: 1-char word -> S, else B M* E."""
    words = list(words)
    if not words:
        raise CorpusError("cannot label an empty word sequence")
    labels = []
    for w in words:
        k = len(w) if not isinstance(w, int) else w
        if k < 1:
            raise CorpusError("empty word in sequence")
        if k == 1:
            labels.append("S")
        else:
            labels.append("B" + "M" * (k - 2) + "E")
    return "".join(labels)


def is_legal_labels(labels: str) -> bool:
    if not labels:
        return False
    if labels[0] not in LEGAL_FIRST or labels[-1] not in LEGAL_LAST:
        return False
    return all(b in LEGAL_NEXT[a] for a, b in zip(labels, labels[1:]))


def from_bmes(labels: str, length: int | None = None) -> tuple[list[Span], bool]:
    """Recover word spans from a BMES sequence.

    Illegal sequences are repaired greedily left to right: a word opens at
    B or S and closes at E, S or end of sentence; a dangling M or E after a
    closed word opens a new one.  Returns (spans, repaired_flag).
    """
    if length is not None and len(labels) != length:
        raise CorpusError(f"label length {len(labels)} does not match sentence length {length}")
    spans: list[Span] = []
    start: int | None = None
    for i, y in enumerate(labels):
        if y == "B":
            if start is not None:
                spans.append((start, i))
            start = i
        elif y == "S":
            if start is not None:
                spans.append((start, i))
            spans.append((i, i + 1))
            start = None
        elif y == "M":
            if start is None:
                start = i
        elif y == "E":
            if start is None:
                start = i
            spans.append((start, i + 1))
            start = None
        else:
            raise CorpusError(f"unknown label {y!r} at position {i}")
    if start is not None:
        spans.append((start, len(labels)))
    return spans, not is_legal_labels(labels)


def _word_pieces(words: list[str]):
    """Scan each word separately so runs never merge across word boundaries."""
    pieces = []
    base = 0
    for w in words:
        parts = scan(w)
        pieces.append([(t, base + b, base + e) for t, b, e in parts])
        base += len(w)
    return pieces


def _assemble(words: list[str], pieces, line_no: int) -> tuple[Sentence, list[Span]]:
    tokens: list[str] = []
    offsets: list[Span] = []
    spans: list[Span] = []
    for parts in pieces:
        b = len(tokens)
        for t, s, e in parts:
            tokens.append(t)
            offsets.append((s, e))
        spans.append((b, len(tokens)))
    sent = Sentence(tuple(tokens), "".join(words), tuple(offsets), line_no)
    return sent, spans


def _split_long(words, pieces, max_len):
    """Split an over-long sentence at punctuation words, else at word breaks."""
    chunks = []
    cur_words, cur_pieces, cur_len = [], [], 0
    last_punc = -1  # index into cur_words after which a punctuation cut is possible
    for w, parts in zip(words, pieces):
        if cur_len + len(parts) > max_len and cur_words:
            if last_punc >= 0:
                chunks.append((cur_words[: last_punc + 1], cur_pieces[: last_punc + 1]))
                cur_words = cur_words[last_punc + 1 :]
                cur_pieces = cur_pieces[last_punc + 1 :]
            else:
                chunks.append((cur_words, cur_pieces))
                cur_words, cur_pieces = [], []
            cur_len = sum(len(p) for p in cur_pieces)
            last_punc = -1
        cur_words.append(w)
        cur_pieces.append(parts)
        cur_len += len(parts)
        if len(parts) == 1 and parts[0][0] == PUNC_TOKEN:
            last_punc = len(cur_words) - 1
    if cur_words:
        chunks.append((cur_words, cur_pieces))
    return chunks


def load_segmented_corpus(path, split: str = "", max_len: int | None = None) -> Corpus:
    """Load a whitespace-segmented corpus file.

    Empty lines are skipped (counted in ``n_skipped``).  With ``max_len``
    set, sentences longer than that many tokens are split at punctuation
    word boundaries; each piece keeps the original line number.
    """
    corpus = Corpus(split=split)
    try:
        with open(path, "rb") as f:
            data = f.read()
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{path}: invalid UTF-8 at byte {exc.start}") from exc
    for line_no, line in enumerate(text.split("\n")):
        line = line.rstrip("\r")
        words = [w for w in line.split(" ") if w]
        if not words:
            if line_no < len(text.split("\n")) - 1 or line:
                corpus.n_skipped += 1
            continue
        for w in words:
            if any(c.isspace() for c in w):
                raise CorpusError(f"{path}:{line_no + 1}: word {w!r} contains embedded whitespace")
        pieces = _word_pieces(words)
        if max_len is not None and sum(len(p) for p in pieces) > max_len:
            groups = _split_long(words, pieces, max_len)
        else:
            groups = [(words, pieces)]
        for gw, gp in groups:
            sent, spans = _assemble(gw, gp, line_no)
            if len(sent) == 0:
                continue
            corpus.sentences.append((sent, spans))
    if corpus.n_skipped:
        log.warning("%s: skipped %d empty line(s)", path, corpus.n_skipped)
    if not corpus.sentences:
        log.warning("%s: empty corpus", path)
    return corpus


def split_train_dev(corpus: Corpus, ratio: float, seed: int) -> tuple[Corpus, Corpus]:
    """Deterministic random train/dev split; dev gets max(1, round(ratio*n))."""
    if not 0 < ratio < 1:
        raise CorpusError(f"ratio must lie in (0, 1), got {ratio}")
    n = len(corpus)
    if n < 2:
        raise CorpusError("need at least 2 sentences to split")
    k = max(1, round(ratio * n))
    idx = list(range(n))
    random.Random(seed).shuffle(idx)
    dev_idx = set(idx[:k])
    train = Corpus(split="train")
    dev = Corpus(split="dev")
    for i, item in enumerate(corpus.sentences):
        (dev if i in dev_idx else train).sentences.append(item)
    return train, dev


def build_lexicon(train: Corpus) -> Lexicon:
    """Collect every distinct gold word of the training corpus with counts."""
    if not len(train):
        raise CorpusError("cannot build a lexicon from an empty corpus")
    lex = Lexicon()
    for _, _, word in train.gold_words():
        lex.add(word)
    return lex


@dataclass
class OovReport:
    """Gold spans whose word is absent from a lexicon."""

    spans: set[tuple[int, int, int]]  # (sentence index, begin, end)
    n_gold: int

    @property
    def rate(self) -> float:
        return len(self.spans) / self.n_gold if self.n_gold else 0.0


def oov_words(test: Corpus, lexicon: Lexicon) -> OovReport:
    spans = set()
    n_gold = 0
    for i, (b, e), word in test.gold_words():
        n_gold += 1
        if word not in lexicon:
            spans.add((i, b, e))
    return OovReport(spans=spans, n_gold=n_gold)
