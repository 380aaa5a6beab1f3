"""Per-sentence heterogeneous graph construction.

Nodes are the sentence characters followed by one node per matched
lexicon-word or n-gram occurrence.  Three edge relations are kept apart:

* ``OUT``  head-to-dependent character pairs from the dependency parse,
* ``IN``   the reverse, dependent-to-head character pairs,
* ``CWN``  candidate-word linkage: begin character -> word/n-gram node,
           word/n-gram node -> end character, plus the character chain
           connecting each character to the next.

Each relation's adjacency gets self-connections and symmetric degree
normalization; degrees count neighbors regardless of edge direction so the
scaling of an edge and its reverse agree, while the normalized matrix keeps
exactly the support of A + I.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .corpus import Lexicon, Sentence
from .ngrams import NgramVocab, token_length
from .parses import DepParse, char_syntax_edges

CHAR, WORD, NGRAM = "CHAR", "WORD", "NGRAM"
LEX_SOURCE, NGRAM_SOURCE = "LEX", "NGRAM"

RELATION_IN = "IN"
RELATION_OUT = "OUT"
RELATION_CWN = "CWN"
CWN_SPLIT = ("CWN_BEG", "CWN_END", "CWN_SEQ")


class GraphConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    """Which sub-graphs and candidate sources participate."""

    use_syntax: bool = True
    use_cwn: bool = True
    use_lexicon: bool = True
    use_ngrams: bool = True
    cwn_both_directions: bool = False
    split_cwn: bool = False

    def __post_init__(self):
        if not (self.use_syntax or self.use_cwn):
            raise GraphConfigError("at least one sub-graph must be enabled")

    def relations(self) -> tuple[str, ...]:
        rels: list[str] = []
        if self.use_syntax:
            rels += [RELATION_IN, RELATION_OUT]
        if self.use_cwn:
            rels += list(CWN_SPLIT) if self.split_cwn else [RELATION_CWN]
        return tuple(rels)

    def to_dict(self) -> dict:
        return {
            "use_syntax": self.use_syntax,
            "use_cwn": self.use_cwn,
            "use_lexicon": self.use_lexicon,
            "use_ngrams": self.use_ngrams,
            "cwn_both_directions": self.cwn_both_directions,
            "split_cwn": self.split_cwn,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GraphConfig":
        return cls(**d)


@dataclass(frozen=True)
class Node:
    kind: str  # CHAR / WORD / NGRAM
    surface: str
    span: tuple[int, int]


Match = tuple[tuple[int, int], str]  # (span, source)


def match_spans(
    sentence: Sentence,
    lexicon: Lexicon | None,
    vocab: NgramVocab | None,
    config: GraphConfig,
    max_span: int | None = None,
) -> list[Match]:
    """All spans of length >= 2 found in the lexicon or n-gram vocabulary.

    A string present in both sources yields a single LEX match.  Every
    occurrence position is a separate match.  ``max_span`` bounds the
    enumeration; by default it is derived from the sources.
    """
    use_lex = config.use_lexicon and lexicon is not None
    use_ng = config.use_ngrams and vocab is not None
    if not (use_lex or use_ng):
        return []
    if max_span is None:
        max_span = 0
        if use_lex:
            max_span = max((token_length(w) for w in lexicon.counts), default=0)
        if use_ng:
            max_span = max(max_span, vocab.max_token_len)
    toks = sentence.tokens
    matches: list[Match] = []
    for b in range(len(toks)):
        for e in range(b + 2, min(b + max_span, len(toks)) + 1):
            s = "".join(toks[b:e])
            if use_lex and s in lexicon:
                matches.append(((b, e), LEX_SOURCE))
            elif use_ng and s in vocab:
                matches.append(((b, e), NGRAM_SOURCE))
    matches.sort(key=lambda m: (m[0][0], m[0][1], m[1]))
    return matches


@dataclass
class HeteroGraph:
    """Typed nodes plus relation-typed adjacency and its normalization."""

    nodes: list[Node]
    n_chars: int
    relations: tuple[str, ...]
    edges: dict[str, list[tuple[int, int]]]
    adj: dict[str, sp.csr_matrix] = field(default_factory=dict)
    norm: dict[str, sp.csr_matrix] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.nodes)

    def edge_counts(self) -> dict[str, int]:
        return {rel: len(self.edges[rel]) for rel in self.relations}

    def kind_index(self, i: int) -> tuple[str, int]:
        """Within-kind index of node i, e.g. the 2nd WORD node."""
        kind = self.nodes[i].kind
        k = sum(1 for n in self.nodes[:i] if n.kind == kind)
        return kind, k


def edges_to_adjacency(edges, n: int) -> sp.csr_matrix:
    """0/1 CSR matrix from a directed edge list (storage-order independent)."""
    uniq = sorted(set(edges))
    if not uniq:
        return sp.csr_matrix((n, n), dtype=np.float64)
    rows, cols = zip(*uniq)
    data = np.ones(len(uniq), dtype=np.float64)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def normalize_adjacency(adj) -> sp.csr_matrix:
    """Degree-normalized adjacency with self-connections.

    Returns D^{-1/2} (A + I) D^{-1/2} where D counts each node's neighbors
    in the symmetrized support of A plus the self-connection, so isolated
    nodes keep a self-loop value of exactly 1 and the support of the result
    equals the support of A + I.
    """
    A = sp.csr_matrix(adj, dtype=np.float64)
    if A.shape[0] != A.shape[1]:
        raise ValueError("adjacency must be square")
    n = A.shape[0]
    sym = ((A + A.T) > 0).astype(np.float64)
    deg = 1.0 + np.asarray(sym.sum(axis=1)).ravel()
    dinv = 1.0 / np.sqrt(deg)
    scaled = sp.diags(dinv) @ (A + sp.identity(n, format="csr")) @ sp.diags(dinv)
    out = sp.csr_matrix(scaled)
    out.sort_indices()
    return out


def build_graph(
    sentence: Sentence,
    matches: list[Match],
    parse: DepParse | None = None,
    config: GraphConfig = GraphConfig(),
) -> HeteroGraph:
    """Assemble the sentence graph for the enabled sub-graphs."""
    T = len(sentence)
    nodes = [Node(CHAR, tok, (i, i + 1)) for i, tok in enumerate(sentence.tokens)]
    match_nodes = []
    if config.use_cwn:
        for (b, e), source in sorted(matches, key=lambda m: (m[0][0], m[0][1], m[1])):
            kind = WORD if source == LEX_SOURCE else NGRAM
            match_nodes.append(Node(kind, sentence.span_text((b, e)), (b, e)))
    nodes.extend(match_nodes)
    n = len(nodes)

    relations = config.relations()
    edges: dict[str, list[tuple[int, int]]] = {rel: [] for rel in relations}

    if config.use_syntax and parse is not None:
        outgoing, incoming = char_syntax_edges(parse)
        edges[RELATION_OUT] = sorted(outgoing)
        edges[RELATION_IN] = sorted(incoming)

    if config.use_cwn:
        beg, end, seq = [], [], []
        for k, node in enumerate(match_nodes):
            v = T + k
            b, e = node.span
            beg.append((b, v))
            end.append((v, e - 1))
            if config.cwn_both_directions:
                beg.append((v, b))
                end.append((e - 1, v))
        seq = [(i, i + 1) for i in range(T - 1)]
        if config.split_cwn:
            edges["CWN_BEG"], edges["CWN_END"], edges["CWN_SEQ"] = beg, end, seq
        else:
            edges[RELATION_CWN] = beg + end + seq

    graph = HeteroGraph(nodes=nodes, n_chars=T, relations=relations, edges=edges)
    for rel in relations:
        A = edges_to_adjacency(edges[rel], n)
        graph.adj[rel] = A
        graph.norm[rel] = normalize_adjacency(A)
    return graph


def dump_graph(graph: HeteroGraph) -> str:
    """Debug dump: a node table followed by one edge per line."""
    lines = []
    for i, node in enumerate(graph.nodes):
        kind, k = graph.kind_index(i)
        lines.append(f"node\t{kind}:{k}\t{node.surface}\t{node.span[0]}\t{node.span[1]}")
    for rel in graph.relations:
        for src, dst in sorted(graph.edges[rel]):
            sk, si = graph.kind_index(src)
            dk, di = graph.kind_index(dst)
            lines.append(f"{rel}\t{sk}:{si}\t{dk}:{di}")
    return "\n".join(lines) + "\n"
