"""Word-level dependency parses and their projection to character pairs.

Parse files use the common 10-column tab-separated block format, one token
per line and a blank line between sentences; only the ID, FORM and HEAD
columns are consumed and ``#`` comment lines are ignored.  Head index 0
marks the root.  Only head/dependent direction is used; relation labels
are discarded.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .corpus import Sentence, scan

log = logging.getLogger(__name__)


class ParseError(ValueError):
    """Malformed parse file."""


@dataclass
class DepParse:
    """A word-level parse aligned to a normalized sentence."""

    tokens: list[str]  # parser word forms (original text)
    heads: list[int]  # per token, 1-based head id; 0 = root
    spans: list[tuple[int, int]]  # per token, covered sentence positions

    def n_roots(self) -> int:
        return sum(1 for h in self.heads if h == 0)


def read_conll_blocks(path) -> list[tuple[list[str], list[int]]]:
    """Read (tokens, heads) blocks; decimal and range IDs are skipped."""
    blocks = []
    tokens: list[str] = []
    heads: list[int] = []
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.rstrip("\n").rstrip("\r")
            if line.startswith("#"):
                continue
            if not line.strip():
                if tokens:
                    blocks.append((tokens, heads))
                    tokens, heads = [], []
                continue
            cols = line.split("\t")
            if len(cols) < 7:
                raise ParseError(f"{path}:{ln}: expected >= 7 tab-separated columns")
            if not cols[0].isdigit():
                continue
            try:
                heads.append(int(cols[6]))
            except ValueError as exc:
                raise ParseError(f"{path}:{ln}: non-integer head {cols[6]!r}") from exc
            tokens.append(cols[1])
    if tokens:
        blocks.append((tokens, heads))
    return blocks


def align_tokens(tokens: list[str], sentence: Sentence) -> list[tuple[int, int]] | None:
    """Greedy left-to-right alignment of parse tokens to sentence positions.

    Each parse token is normalized with the shared scanner; the
    concatenation must reproduce the sentence token sequence exactly,
    otherwise None is returned.
    """
    spans = []
    pos = 0
    for tok in tokens:
        norm = tuple(t for t, _, _ in scan(tok))
        end = pos + len(norm)
        if sentence.tokens[pos:end] != norm:
            return None
        spans.append((pos, end))
        pos = end
    if pos != len(sentence):
        return None
    return spans


def load_parses(path, sentences) -> tuple[dict[int, DepParse], int]:
    """Load parses keyed by ordinal sentence index.

    ``sentences`` maps that ordinal to a Sentence (a list or dict).  A parse
    whose token concatenation does not reproduce the sentence, or with a
    head index out of range, is dropped with a warning; the second return
    value counts the drops.  Multi-root parses are flagged but kept.
    """
    if isinstance(sentences, dict):
        lookup = sentences
    else:
        lookup = dict(enumerate(sentences))
    parses: dict[int, DepParse] = {}
    dropped = 0
    for idx, (tokens, heads) in enumerate(read_conll_blocks(path)):
        sent = lookup.get(idx)
        if sent is None:
            continue
        if any(h < 0 or h > len(tokens) for h in heads):
            log.warning("parse %d: head index out of range, dropped", idx)
            dropped += 1
            continue
        spans = align_tokens(tokens, sent)
        if spans is None:
            log.warning("parse %d: tokens do not match the sentence, dropped", idx)
            dropped += 1
            continue
        parse = DepParse(tokens=tokens, heads=heads, spans=spans)
        if parse.n_roots() != 1:
            log.warning("parse %d: %d roots", idx, parse.n_roots())
        parses[idx] = parse
    return parses, dropped


def char_syntax_edges(parse: DepParse) -> tuple[set, set]:
    """Project word dependencies onto character index pairs.

    For every dependency, each character of the head gets an outgoing edge
    to each character of the dependent; the incoming set is the exact
    reverse.  Root attachments contribute nothing.
    """
    outgoing: set[tuple[int, int]] = set()
    for d, h in enumerate(parse.heads):
        if h == 0:
            continue
        hb, he = parse.spans[h - 1]
        db, de = parse.spans[d]
        for i in range(hb, he):
            for j in range(db, de):
                outgoing.add((i, j))
    incoming = {(j, i) for i, j in outgoing}
    return outgoing, incoming
