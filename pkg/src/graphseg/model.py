"""End-to-end model assembly: parameters, per-sentence instances and the
forward/backward composition of encoder, graph convolution and CRF."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import crf as crf_mod
from . import hgnn
from .corpus import Lexicon, Sentence, to_bmes
from .encoder import CharVocab, EncoderParams, init_encoder
from .graph import NGRAM_SOURCE, GraphConfig, HeteroGraph, build_graph, match_spans
from .ngrams import NgramVocab, token_length
from .parses import DepParse


@dataclass(frozen=True)
class ModelMeta:
    dim: int
    n_layers: int
    activation: str
    graph_config: GraphConfig
    ext_dim: int | None = None

    @property
    def relations(self) -> tuple[str, ...]:
        return self.graph_config.relations()


class GraphBuilder:
    """Builds per-sentence instances; shared read-only across a run."""

    def __init__(self, lexicon: Lexicon | None, vocab: NgramVocab | None, config: GraphConfig):
        self.lexicon = lexicon
        self.vocab = vocab
        self.config = config
        self.word_keys = sorted(
            w for w in (lexicon.counts if lexicon else ()) if token_length(w) >= 2
        )
        self.ngram_keys = sorted(vocab.entries) if vocab else []
        self.word_row = {w: i for i, w in enumerate(self.word_keys)}
        self.ngram_row = {s: i for i, s in enumerate(self.ngram_keys)}
        max_span = max((token_length(w) for w in self.word_keys), default=0)
        if vocab:
            max_span = max(max_span, vocab.max_token_len)
        self.max_span = max_span

    def build(
        self,
        char_vocab: CharVocab,
        sentence: Sentence,
        spans=None,
        parse: DepParse | None = None,
        ext: np.ndarray | None = None,
    ) -> "Instance":
        cfg = self.config
        matches = []
        if cfg.use_cwn:
            matches = match_spans(sentence, self.lexicon, self.vocab, cfg, max_span=self.max_span)
        graph = build_graph(sentence, matches, parse=parse, config=cfg)
        word_pos, word_rows, ngram_pos, ngram_rows = [], [], [], []
        for k, ((b, e), source) in enumerate(matches):
            text = sentence.span_text((b, e))
            if source == NGRAM_SOURCE:
                ngram_pos.append(graph.n_chars + k)
                ngram_rows.append(self.ngram_row[text])
            else:
                word_pos.append(graph.n_chars + k)
                word_rows.append(self.word_row[text])
        gold = None
        if spans is not None:
            gold = crf_mod.labels_to_ids(to_bmes([e - b for b, e in spans]))
        return Instance(
            sentence=sentence,
            ids=char_vocab.encode_tokens(sentence.tokens),
            graph=graph,
            word_pos=np.array(word_pos, dtype=np.int64),
            word_rows=np.array(word_rows, dtype=np.int64),
            ngram_pos=np.array(ngram_pos, dtype=np.int64),
            ngram_rows=np.array(ngram_rows, dtype=np.int64),
            gold=gold,
            ext=ext,
        )


@dataclass
class Instance:
    sentence: Sentence
    ids: np.ndarray
    graph: HeteroGraph
    word_pos: np.ndarray  # node indices of WORD nodes
    word_rows: np.ndarray  # their rows in the word embedding table
    ngram_pos: np.ndarray
    ngram_rows: np.ndarray
    gold: np.ndarray | None = None
    ext: np.ndarray | None = None


@dataclass
class ModelParams:
    meta: ModelMeta
    encoder: EncoderParams
    word_keys: list[str]
    word_emb: np.ndarray
    ngram_keys: list[str]
    ngram_emb: np.ndarray
    gcn: hgnn.HgnnParams
    crf: crf_mod.CrfParams

    def named_tensors(self):
        """(name, array) pairs in a stable canonical order; arrays are the
        live parameter storage, not copies."""
        out = [("encoder.emb", self.encoder.table)]
        if self.encoder.ext_proj is not None:
            out.append(("encoder.ext_proj", self.encoder.ext_proj))
        out.append(("nodes.word", self.word_emb))
        out.append(("nodes.ngram", self.ngram_emb))
        for l, layer in enumerate(self.gcn.layers):
            for rel in self.meta.relations:
                rw = layer[rel]
                out.append((f"hgnn.{l}.{rel}.w", rw.w))
                out.append((f"hgnn.{l}.{rel}.gate_w", rw.gate_w))
                out.append((f"hgnn.{l}.{rel}.gate_b", rw.gate_b))
        out += [("crf.w", self.crf.w), ("crf.b", self.crf.b), ("crf.trans", self.crf.trans)]
        return out

    def check_finite(self):
        for name, arr in self.named_tensors():
            if not np.all(np.isfinite(arr)):
                raise FloatingPointError(f"non-finite values in parameter {name}")


def init_model(
    char_vocab: CharVocab,
    builder: GraphBuilder,
    dim: int,
    n_layers: int,
    activation: str,
    seed: int,
    ext_dim: int | None = None,
) -> ModelParams:
    meta = ModelMeta(
        dim=dim,
        n_layers=n_layers,
        activation=activation,
        graph_config=builder.config,
        ext_dim=ext_dim,
    )
    rng = np.random.default_rng(seed)
    enc = init_encoder(char_vocab, dim, rng, ext_dim=ext_dim)
    word_emb = rng.uniform(-0.1, 0.1, size=(len(builder.word_keys), dim))
    ngram_emb = rng.uniform(-0.1, 0.1, size=(len(builder.ngram_keys), dim))
    gcn = hgnn.init_hgnn(meta.relations, dim, n_layers, rng)
    crf_params = crf_mod.init_crf(2 * dim, rng)
    return ModelParams(
        meta=meta,
        encoder=enc,
        word_keys=list(builder.word_keys),
        word_emb=word_emb,
        ngram_keys=list(builder.ngram_keys),
        ngram_emb=ngram_emb,
        gcn=gcn,
        crf=crf_params,
    )


def zero_grads(params: ModelParams) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in params.named_tensors()}


def restrict_ngrams(params: ModelParams, vocab_sub: NgramVocab) -> ModelParams:
    """Model view that only matches a subset of the n-gram vocabulary.

    Embedding rows are reindexed to the subset so a matching GraphBuilder
    built from ``vocab_sub`` addresses them consistently; every subset
    entry must exist in the full model.
    """
    from dataclasses import replace

    keys = sorted(vocab_sub.entries)
    row = {k: i for i, k in enumerate(params.ngram_keys)}
    rows = [row[k] for k in keys]
    return replace(params, ngram_keys=keys, ngram_emb=params.ngram_emb[rows].copy())


def _encode_rows(params: ModelParams, inst: Instance) -> np.ndarray:
    E = params.encoder.table[inst.ids].copy()
    if inst.ext is not None and params.encoder.ext_proj is not None:
        E += inst.ext @ params.encoder.ext_proj
    return E


def _node_states(params: ModelParams, inst: Instance, E: np.ndarray) -> np.ndarray:
    n = len(inst.graph)
    H0 = np.zeros((n, params.meta.dim))
    H0[: inst.graph.n_chars] = E
    if len(inst.word_pos):
        H0[inst.word_pos] = params.word_emb[inst.word_rows]
    if len(inst.ngram_pos):
        H0[inst.ngram_pos] = params.ngram_emb[inst.ngram_rows]
    return H0


def emission_scores(params: ModelParams, inst: Instance):
    """Forward to the CRF inputs; returns (scores, cache)."""
    act = params.meta.activation
    E = _encode_rows(params, inst)
    H0 = _node_states(params, inst, E)
    chars, caches = hgnn.forward(inst.graph, H0, params.gcn, act)
    A = np.hstack([chars, E])
    s = A @ params.crf.w + params.crf.b
    return s, (E, A, caches)


def forward_loss(params: ModelParams, inst: Instance) -> float:
    s, _ = emission_scores(params, inst)
    return crf_mod.neg_log_likelihood(s, params.crf.trans, inst.gold)


def loss_and_grads(params: ModelParams, inst: Instance):
    """NLL and its gradients for a single instance."""
    act = params.meta.activation
    d = params.meta.dim
    s, (E, A, caches) = emission_scores(params, inst)
    nll, ds, dtrans = crf_mod.nll_and_grads(s, params.crf.trans, inst.gold)

    grads = zero_grads(params)
    grads["crf.w"][...] = A.T @ ds
    grads["crf.b"][...] = ds.sum(axis=0)
    grads["crf.trans"][...] = dtrans
    dA = ds @ params.crf.w.T
    dChars = dA[:, :d]
    dE = dA[:, d:].copy()

    dH0, layer_grads = hgnn.backward(dChars, caches, inst.graph, params.gcn, act)
    for l, per_rel in enumerate(layer_grads):
        for rel, rw in per_rel.items():
            grads[f"hgnn.{l}.{rel}.w"][...] = rw.w
            grads[f"hgnn.{l}.{rel}.gate_w"][...] = rw.gate_w
            grads[f"hgnn.{l}.{rel}.gate_b"][...] = rw.gate_b

    dE += dH0[: inst.graph.n_chars]
    if len(inst.word_pos):
        np.add.at(grads["nodes.word"], inst.word_rows, dH0[inst.word_pos])
    if len(inst.ngram_pos):
        np.add.at(grads["nodes.ngram"], inst.ngram_rows, dH0[inst.ngram_pos])
    np.add.at(grads["encoder.emb"], inst.ids, dE)
    if inst.ext is not None and params.encoder.ext_proj is not None:
        grads["encoder.ext_proj"][...] = inst.ext.T @ dE
    return nll, grads


def loss_batch(params: ModelParams, instances) -> float:
    """Mean NLL over a batch of prebuilt instances."""
    if not instances:
        raise ValueError("empty batch")
    return sum(forward_loss(params, inst) for inst in instances) / len(instances)


def loss_and_grads_batch(params: ModelParams, instances):
    """Mean NLL and mean gradients, accumulated in dataset order."""
    if not instances:
        raise ValueError("empty batch")
    total = 0.0
    acc = zero_grads(params)
    for inst in instances:
        nll, grads = loss_and_grads(params, inst)
        total += nll
        for name in acc:
            acc[name] += grads[name]
    scale = 1.0 / len(instances)
    for name in acc:
        acc[name] *= scale
    return total * scale, acc


def decode(params: ModelParams, inst: Instance, constrain_legal: bool = True) -> np.ndarray:
    s, _ = emission_scores(params, inst)
    return crf_mod.viterbi(s, params.crf.trans, constrain_legal=constrain_legal)
