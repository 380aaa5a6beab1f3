"""Experiment drivers: sub-graph/lexicon ablation grids and the n-gram
vocabulary-size sweep.  Each driver returns plain row dicts and can write
a tab-separated table plus a rendered figure next to it."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import evaluation, plotting, trainer
from .corpus import Corpus, Lexicon
from .graph import GraphConfig
from .model import GraphBuilder, restrict_ngrams
from .ngrams import NgramVocab, subsample_vocab

log = logging.getLogger(__name__)

DEFAULT_GRID = {
    "full": {},
    "no_syntax": {"use_syntax": False},
    "no_cwn": {"use_cwn": False},
}
LEXICON_GRID = {
    "full": {},
    "no_ngrams": {"use_ngrams": False},
    "no_lexicon": {"use_lexicon": False},
}


def grid_from_names(names, base: GraphConfig) -> dict[str, GraphConfig]:
    known = {**DEFAULT_GRID, **LEXICON_GRID}
    grid = {}
    for name in names:
        if name not in known:
            raise ValueError(f"unknown grid cell {name!r} (choose from {sorted(known)})")
        grid[name] = replace(base, **known[name])
    return grid


def _train_and_score(config, train_corpus, dev_corpus, test_corpus, lexicon, vocab,
                     parses, dev_parses, test_parses, out_dir):
    result = trainer.train(config, train_corpus, dev_corpus, lexicon, vocab, out_dir,
                           parses=parses, dev_parses=dev_parses)
    params, builder, _, _ = trainer.load_checkpoint(result.best_path)
    metrics = evaluation.evaluate_model(params, builder, test_corpus, lexicon,
                                        parses=test_parses)
    edges = _test_edge_counts(params, builder, test_corpus, test_parses)
    return metrics, edges


def _test_edge_counts(params, builder, corpus: Corpus, parses) -> dict[str, int]:
    counts: dict[str, int] = {"IN": 0, "OUT": 0, "CWN": 0}
    for sent, _ in corpus:
        parse = parses.get(sent.line_no) if parses else None
        inst = builder.build(params.encoder.vocab, sent, parse=parse)
        for rel, c in inst.graph.edge_counts().items():
            key = rel if rel in counts else ("CWN" if rel.startswith("CWN") else rel)
            counts[key] = counts.get(key, 0) + c
    return counts


def run_ablation(
    grid: dict[str, GraphConfig],
    seeds,
    base_config: trainer.TrainConfig,
    train_corpus: Corpus,
    dev_corpus: Corpus | None,
    test_corpus: Corpus,
    lexicon: Lexicon,
    vocab: NgramVocab | None,
    out_dir,
    parses=None,
    dev_parses=None,
    test_parses=None,
) -> list[dict]:
    """Retrain per grid cell and seed; report per-cell means over seeds."""
    out_dir = Path(out_dir)
    rows = []
    for name, gcfg in grid.items():
        f1s, oovs = [], []
        edges = None
        for seed in seeds:
            cfg = replace(base_config, graph=gcfg, seed=seed)
            metrics, edge_counts = _train_and_score(
                cfg, train_corpus, dev_corpus, test_corpus, lexicon, vocab,
                parses, dev_parses, test_parses, out_dir / name / f"seed{seed}")
            f1s.append(metrics.f1)
            oovs.append(metrics.oov_recall)
            edges = edge_counts
            log.info("ablation %s seed %d: f1 %.4f oov %.4f", name, seed,
                     metrics.f1, metrics.oov_recall)
        rows.append({
            "model": name,
            "seeds": list(seeds),
            "f1_mean": float(np.mean(f1s)),
            "oov_recall_mean": float(np.mean(oovs)),
            "f1_values": f1s,
            "oov_recall_values": oovs,
            "edges_in": edges["IN"],
            "edges_out": edges["OUT"],
            "edges_cwn": edges["CWN"],
        })
    return rows


def write_ablation_report(rows: list[dict], out_dir) -> tuple[Path, Path]:
    """TSV table plus a bar-chart figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv = out_dir / "ablation.tsv"
    fig = out_dir / "ablation.png"
    cols = ["model", "f1_mean", "oov_recall_mean", "f1_values",
            "oov_recall_values", "edges_in", "edges_out", "edges_cwn"]
    with open(tsv, "w", encoding="utf-8") as f:
        f.write("\t".join(cols) + "\n")
        for row in rows:
            f.write("\t".join(_cell(row[c]) for c in cols) + "\n")
    plotting.ablation_figure(rows, fig)
    return tsv, fig


def vocab_sweep(
    fractions,
    seeds,
    base_config: trainer.TrainConfig,
    train_corpus: Corpus,
    dev_corpus: Corpus | None,
    test_corpus: Corpus,
    lexicon: Lexicon,
    vocab: NgramVocab,
    out_dir,
    parses=None,
    dev_parses=None,
    test_parses=None,
    retrain: bool = False,
) -> list[dict]:
    """OOV recall as a function of the n-gram vocabulary size.

    By default one model per seed is trained with the full vocabulary and
    re-decoded with each subsampled vocabulary; with ``retrain`` each
    (fraction, seed) cell trains its own model.
    """
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError(f"fraction {f} outside (0, 1]")
    out_dir = Path(out_dir)
    base_models = {}
    if not retrain:
        for seed in seeds:
            cfg = replace(base_config, seed=seed)
            result = trainer.train(cfg, train_corpus, dev_corpus, lexicon, vocab,
                                   out_dir / f"base-seed{seed}",
                                   parses=parses, dev_parses=dev_parses)
            base_models[seed] = trainer.load_checkpoint(result.best_path)

    rows = []
    for f in fractions:
        f1s, oovs, sizes = [], [], []
        for seed in seeds:
            sub = subsample_vocab(vocab, f, seed) if f < 1 else vocab
            sizes.append(len(sub))
            if retrain:
                cfg = replace(base_config, seed=seed)
                result = trainer.train(cfg, train_corpus, dev_corpus, lexicon, sub,
                                       out_dir / f"frac{f}-seed{seed}",
                                       parses=parses, dev_parses=dev_parses)
                params, builder, _, _ = trainer.load_checkpoint(result.best_path)
            else:
                full_params, _, _, _ = base_models[seed]
                params = restrict_ngrams(full_params, sub)
                builder = GraphBuilder(
                    lexicon if base_config.graph.use_lexicon else None,
                    sub, base_config.graph)
            metrics = evaluation.evaluate_model(params, builder, test_corpus, lexicon,
                                                parses=test_parses)
            f1s.append(metrics.f1)
            oovs.append(metrics.oov_recall)
            log.info("sweep f=%.2f seed %d: f1 %.4f oov %.4f", f, seed,
                     metrics.f1, metrics.oov_recall)
        rows.append({
            "fraction": f,
            "vocab_size_mean": float(np.mean(sizes)),
            "f1_mean": float(np.mean(f1s)),
            "oov_recall_mean": float(np.mean(oovs)),
            "f1_values": f1s,
            "oov_recall_values": oovs,
        })
    return rows


def write_sweep_report(rows: list[dict], out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tsv = out_dir / "sweep.tsv"
    fig = out_dir / "sweep.png"
    cols = ["fraction", "vocab_size_mean", "f1_mean", "oov_recall_mean",
            "f1_values", "oov_recall_values"]
    with open(tsv, "w", encoding="utf-8") as f:
        f.write("\t".join(cols) + "\n")
        for row in rows:
            f.write("\t".join(_cell(row[c]) for c in cols) + "\n")
    plotting.sweep_figure(rows, fig)
    return tsv, fig


def _cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    if isinstance(value, list):
        return ",".join(_cell(v) for v in value)
    return str(value)
