"""Command-line entry point.

stdout carries data, stderr carries logs and the effective-config record.
Exit codes: 0 success, 1 data error (one JSON line on stderr), 2 usage
error.  Option values resolve as defaults < config file < explicit flags;
the config file holds ``key = value`` lines keyed by the long option name
with dashes replaced by underscores.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .corpus import (Corpus, CorpusError, Lexicon, Sentence, build_lexicon,
                     load_segmented_corpus, split_train_dev)
from .encoder import load_external_embeddings
from .graph import GraphConfig, GraphConfigError, dump_graph
from .ngrams import NgramVocab, extract_ngrams
from .parses import ParseError, load_parses

log = logging.getLogger("graphseg")

_DATA_ERRORS = (CorpusError, ParseError, GraphConfigError, ValueError, OSError, KeyError)


# ---------------------------------------------------------------------------
# option plumbing: argparse defaults stay None so the config file can fill
# them, real defaults live beside the parser

def _add(sp, *names, default=None, type=str, action=None, help="", choices=None, required=False):
    kw = {"help": help, "default": None}
    if action == "store_true":
        kw["action"] = "store_true"
        kw["default"] = None
    else:
        kw["type"] = type
        if choices:
            kw["choices"] = choices
        kw["required"] = required
    act = sp.add_argument(*names, **kw)
    sp._real_defaults[act.dest] = default
    sp._value_types[act.dest] = bool if action == "store_true" else type
    return act


def _new_sub(subparsers, name, help):
    sp = subparsers.add_parser(name, help=help)
    sp._real_defaults = {}
    sp._value_types = {}
    _add(sp, "--config", default=None, help="key=value config file")
    _add(sp, "--verbose", "-v", action="store_true", default=False, help="info logging")
    return sp


def _bool_from_str(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def read_config_file(path) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as f:
        for ln, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected key=value")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _resolve(ns: argparse.Namespace, sp) -> dict:
    file_cfg = read_config_file(ns.config) if ns.config else {}
    effective = {}
    for dest, default in sp._real_defaults.items():
        val = getattr(ns, dest, None)
        if val is None and dest in file_cfg:
            conv = sp._value_types[dest]
            raw = file_cfg[dest]
            val = _bool_from_str(raw) if conv is bool else conv(raw)
        if val is None:
            val = default
        setattr(ns, dest, val)
        effective[dest] = val
    return effective


def _emit_run_record(command: str, effective: dict, argv, sidecar=None) -> None:
    record = {"command": command, "argv": list(argv), "config": {
        k: (str(v) if isinstance(v, Path) else v) for k, v in effective.items()}}
    line = json.dumps(record, sort_keys=True, ensure_ascii=False)
    print(line, file=sys.stderr)
    if sidecar is not None:
        Path(sidecar).parent.mkdir(parents=True, exist_ok=True)
        with open(sidecar, "w", encoding="utf-8") as f:
            f.write(line + "\n")


# ---------------------------------------------------------------------------
# shared option groups

def _graph_flags(sp):
    _add(sp, "--no-syntax", action="store_true", default=False, help="drop the dependency sub-graph")
    _add(sp, "--no-cwn", action="store_true", default=False, help="drop the word/n-gram sub-graph")
    _add(sp, "--no-lexicon", action="store_true", default=False, help="no word candidates from the lexicon")
    _add(sp, "--no-ngrams", action="store_true", default=False, help="no n-gram candidates")
    _add(sp, "--cwn-both-directions", action="store_true", default=False,
         help="mirror begin/end candidate edges")
    _add(sp, "--split-cwn", action="store_true", default=False,
         help="separate weights for begin/end/chain candidate edges")


def _graph_config(ns) -> GraphConfig:
    return GraphConfig(
        use_syntax=not ns.no_syntax,
        use_cwn=not ns.no_cwn,
        use_lexicon=not ns.no_lexicon,
        use_ngrams=not ns.no_ngrams,
        cwn_both_directions=ns.cwn_both_directions,
        split_cwn=ns.split_cwn,
    )


def _train_flags(sp):
    _add(sp, "--dim", default=64, type=int, help="model width")
    _add(sp, "--layers", default=2, type=int, help="graph convolution layers")
    _add(sp, "--activation", default="relu", choices=["relu", "tanh"], help="hidden activation")
    _add(sp, "--lr", default=0.05, type=float, help="learning rate")
    _add(sp, "--lr-decay", default=0.0, type=float, help="lr/(1+decay*epoch)")
    _add(sp, "--batch-size", default=8, type=int)
    _add(sp, "--epochs", default=50, type=int)
    _add(sp, "--clip", default=5.0, type=float, help="gradient norm clip")
    _add(sp, "--patience", default=10, type=int, help="early-stop patience on dev F1")
    _add(sp, "--optimizer", default="sgd", choices=["sgd", "adam"])
    _add(sp, "--max-len", default=256, type=int, help="training sentence length cap")
    _add(sp, "--seed", default=0, type=int)


def _train_config(ns):
    from .trainer import TrainConfig

    return TrainConfig(
        dim=ns.dim, layers=ns.layers, activation=ns.activation, lr=ns.lr,
        lr_decay=ns.lr_decay, batch_size=ns.batch_size, epochs=ns.epochs,
        clip=ns.clip, seed=ns.seed, patience=ns.patience, optimizer=ns.optimizer,
        max_len=ns.max_len, graph=_graph_config(ns),
    )


def _load_parse_map(path, corpus: Corpus):
    if path is None:
        return None
    by_line = {}
    for sent, _ in corpus:
        by_line.setdefault(sent.line_no, sent)
    parses, dropped = load_parses(path, by_line)
    if dropped:
        log.warning("%s: dropped %d misaligned parse(s)", path, dropped)
    return parses


def _load_ext(path, corpus: Corpus):
    if path is None:
        return None
    lengths = {}
    for sent, _ in corpus:
        lengths.setdefault(sent.line_no, len(sent))
    return load_external_embeddings(path, lengths=lengths)


def _ints(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x]


# ---------------------------------------------------------------------------
# subcommands

def cmd_build_lexicon(ns, effective, argv) -> int:
    corpus = load_segmented_corpus(ns.corpus, split="train")
    lex = build_lexicon(corpus)
    lex.save(ns.out)
    _emit_run_record("build-lexicon", effective, argv, sidecar=str(ns.out) + ".run.json")
    print(ns.out)
    return 0


def cmd_extract_ngrams(ns, effective, argv) -> int:
    corpus = load_segmented_corpus(ns.corpus)
    vocab = extract_ngrams(corpus, max_len=ns.max_len, min_freq=ns.min_freq,
                           av_threshold=ns.av_threshold, workers=ns.workers)
    vocab.save(ns.out)
    _emit_run_record("extract-ngrams", effective, argv, sidecar=str(ns.out) + ".run.json")
    print(ns.out)
    return 0


def cmd_train(ns, effective, argv) -> int:
    from . import plotting, trainer

    config = _train_config(ns)
    full = load_segmented_corpus(ns.train, split="train", max_len=ns.max_len)
    if ns.dev:
        train_corpus = full
        dev_corpus = load_segmented_corpus(ns.dev, split="dev", max_len=ns.max_len)
    else:
        train_corpus, dev_corpus = split_train_dev(full, ns.dev_ratio, ns.seed)
    lexicon = Lexicon.load(ns.lexicon) if ns.lexicon else build_lexicon(train_corpus)
    vocab = NgramVocab.load(ns.ngrams) if ns.ngrams else None
    parses = _load_parse_map(ns.parses, full)
    dev_parses = parses if (parses is not None and not ns.dev) else None
    if ns.dev and ns.dev_parses:
        dev_parses = _load_parse_map(ns.dev_parses, dev_corpus)
    ext = _load_ext(ns.ext_emb, full)
    ext_dim = next(iter(ext.values())).shape[1] if ext else None

    _emit_run_record("train", effective, argv, sidecar=str(Path(ns.out_dir) / "run.json"))
    result = trainer.train(config, train_corpus, dev_corpus, lexicon, vocab,
                           ns.out_dir, parses=parses, dev_parses=dev_parses,
                           ext=ext, ext_dim=ext_dim, resume=ns.resume)
    plotting.training_curves(result.records, Path(ns.out_dir) / "training.png")
    print(result.best_path)
    return 0


def cmd_segment(ns, effective, argv) -> int:
    from . import trainer

    params, builder, _, _ = trainer.load_checkpoint(ns.model)
    if ns.input == "-":
        lines = [line.rstrip("\n") for line in sys.stdin]
    else:
        with open(ns.input, encoding="utf-8") as f:
            lines = [line.rstrip("\n") for line in f]
    parses = None
    if ns.parses:
        by_line = {i: Sentence.from_raw(line, line_no=i) for i, line in enumerate(lines) if line}
        parses, dropped = load_parses(ns.parses, by_line)
        if dropped:
            log.warning("%s: dropped %d misaligned parse(s)", ns.parses, dropped)
    ext = load_external_embeddings(ns.ext_emb) if ns.ext_emb else None
    _emit_run_record("segment", effective, argv)
    for out in trainer.segment_lines(params, builder, lines, parses=parses, ext=ext):
        print(out)
    return 0


def cmd_evaluate(ns, effective, argv) -> int:
    from . import evaluation, trainer

    params, builder, header, _ = trainer.load_checkpoint(ns.model)
    corpus = load_segmented_corpus(ns.test, split="test")
    lexicon = Lexicon.load(ns.lexicon) if ns.lexicon else \
        Lexicon(counts={w: int(c) for w, c in header["lexicon"].items()})
    parses = _load_parse_map(ns.parses, corpus)
    metrics = evaluation.evaluate_model(params, builder, corpus, lexicon, parses=parses)
    d = metrics.as_dict()
    cols = list(d)
    table = "\t".join(cols) + "\n" + "\t".join(str(d[c]) for c in cols) + "\n"
    sidecar = None
    if ns.out:
        Path(ns.out).write_text(table, encoding="utf-8")
        sidecar = str(ns.out) + ".run.json"
    else:
        sys.stdout.write(table)
    _emit_run_record("evaluate", effective, argv, sidecar=sidecar)
    print(json.dumps(d, sort_keys=True), file=sys.stderr)
    return 0


def _experiment_data(ns):
    full = load_segmented_corpus(ns.train, split="train", max_len=ns.max_len)
    if ns.dev:
        train_corpus = full
        dev_corpus = load_segmented_corpus(ns.dev, split="dev", max_len=ns.max_len)
    else:
        train_corpus, dev_corpus = split_train_dev(full, ns.dev_ratio, ns.seed)
    test_corpus = load_segmented_corpus(ns.test, split="test")
    lexicon = Lexicon.load(ns.lexicon) if ns.lexicon else build_lexicon(train_corpus)
    vocab = NgramVocab.load(ns.ngrams) if ns.ngrams else None
    parses = _load_parse_map(ns.parses, full)
    test_parses = _load_parse_map(ns.test_parses, test_corpus)
    return train_corpus, dev_corpus, test_corpus, lexicon, vocab, parses, test_parses


def cmd_ablate(ns, effective, argv) -> int:
    from . import experiments

    base = _train_config(ns)
    data = _experiment_data(ns)
    train_c, dev_c, test_c, lexicon, vocab, parses, test_parses = data
    grid = experiments.grid_from_names(ns.grid.split(","), base.graph)
    _emit_run_record("ablate", effective, argv, sidecar=str(Path(ns.out_dir) / "run.json"))
    rows = experiments.run_ablation(grid, _ints(ns.seeds), base, train_c, dev_c, test_c,
                                    lexicon, vocab, ns.out_dir, parses=parses,
                                    dev_parses=parses if not ns.dev else None,
                                    test_parses=test_parses)
    tsv, fig = experiments.write_ablation_report(rows, ns.out_dir)
    print(tsv)
    print(fig)
    return 0


def cmd_sweep(ns, effective, argv) -> int:
    from . import experiments

    base = _train_config(ns)
    data = _experiment_data(ns)
    train_c, dev_c, test_c, lexicon, vocab, parses, test_parses = data
    if vocab is None:
        raise CorpusError("sweep requires --ngrams")
    _emit_run_record("sweep", effective, argv, sidecar=str(Path(ns.out_dir) / "run.json"))
    rows = experiments.vocab_sweep(_floats(ns.fractions), _ints(ns.seeds), base,
                                   train_c, dev_c, test_c, lexicon, vocab, ns.out_dir,
                                   parses=parses, dev_parses=parses if not ns.dev else None,
                                   test_parses=test_parses, retrain=ns.retrain)
    tsv, fig = experiments.write_sweep_report(rows, ns.out_dir)
    print(tsv)
    print(fig)
    return 0


def cmd_inspect_graph(ns, effective, argv) -> int:
    from .model import GraphBuilder

    lexicon = Lexicon.load(ns.lexicon) if ns.lexicon else None
    vocab = NgramVocab.load(ns.ngrams) if ns.ngrams else None
    config = _graph_config(ns)
    sent = Sentence.from_raw(ns.text, line_no=0)
    parse = None
    if ns.parses:
        parses, _ = load_parses(ns.parses, {0: sent})
        parse = parses.get(0)
    builder = GraphBuilder(lexicon, vocab, config)
    from .graph import build_graph, match_spans

    matches = match_spans(sent, lexicon, vocab, config, max_span=builder.max_span or None)
    graph = build_graph(sent, matches, parse=parse, config=config)
    _emit_run_record("inspect-graph", effective, argv)
    sys.stdout.write(dump_graph(graph))
    return 0


def cmd_grad_check(ns, effective, argv) -> int:
    from .trainer import grad_check, random_check_setup

    worst = 0.0
    for seed in range(ns.seed, ns.seed + ns.checks):
        params, inst = random_check_setup(seed, dim=ns.dim, layers=ns.layers,
                                          config=_graph_config(ns), activation="tanh",
                                          with_ext=bool(seed % 2))
        err = grad_check(params, inst, eps=ns.eps)
        worst = max(worst, err)
        log.info("grad-check seed %d: max rel error %.3e", seed, err)
    passed = worst < ns.threshold
    _emit_run_record("grad-check", effective, argv)
    print(json.dumps({"max_rel_error": worst, "threshold": ns.threshold, "passed": passed}))
    return 0 if passed else 1


# ---------------------------------------------------------------------------

def make_parser():
    parser = argparse.ArgumentParser(prog="graphseg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"graphseg {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    subs = {}

    sp = subs["build-lexicon"] = _new_sub(subparsers, "build-lexicon",
                                          "collect gold words of a training corpus")
    sp.add_argument("corpus")
    _add(sp, "--out", required=True, help="output lexicon TSV")

    sp = subs["extract-ngrams"] = _new_sub(subparsers, "extract-ngrams",
                                           "accessor-variety n-gram vocabulary")
    sp.add_argument("corpus")
    _add(sp, "--out", required=True, help="output vocabulary TSV")
    _add(sp, "--max-len", default=5, type=int)
    _add(sp, "--min-freq", default=5, type=int)
    _add(sp, "--av-threshold", default=2, type=int)
    _add(sp, "--workers", default=1, type=int)

    sp = subs["train"] = _new_sub(subparsers, "train", "fit a segmentation model")
    _add(sp, "--train", required=True, help="training corpus")
    _add(sp, "--dev", default=None, help="dev corpus (default: split from train)")
    _add(sp, "--dev-ratio", default=0.1, type=float)
    _add(sp, "--lexicon", default=None, help="lexicon TSV (default: built from train)")
    _add(sp, "--ngrams", default=None, help="n-gram vocabulary TSV")
    _add(sp, "--parses", default=None, help="dependency parses for the training file")
    _add(sp, "--dev-parses", default=None)
    _add(sp, "--ext-emb", default=None, help="external embedding file")
    _add(sp, "--out-dir", required=True)
    _add(sp, "--resume", default=None, help="continue from a last.ckpt")
    _train_flags(sp)
    _graph_flags(sp)

    sp = subs["segment"] = _new_sub(subparsers, "segment", "segment raw text")
    sp.add_argument("input", help="raw text file, one sentence per line, or -")
    _add(sp, "--model", required=True)
    _add(sp, "--parses", default=None)
    _add(sp, "--ext-emb", default=None)

    sp = subs["evaluate"] = _new_sub(subparsers, "evaluate", "score a model on a gold corpus")
    _add(sp, "--model", required=True)
    _add(sp, "--test", required=True)
    _add(sp, "--parses", default=None)
    _add(sp, "--lexicon", default=None, help="OOV reference (default: checkpoint lexicon)")
    _add(sp, "--out", default=None, help="metrics TSV path (default: stdout)")

    sp = subs["ablate"] = _new_sub(subparsers, "ablate", "sub-graph/lexicon ablation grid")
    _add(sp, "--train", required=True)
    _add(sp, "--test", required=True)
    _add(sp, "--dev", default=None)
    _add(sp, "--dev-ratio", default=0.1, type=float)
    _add(sp, "--lexicon", default=None)
    _add(sp, "--ngrams", default=None)
    _add(sp, "--parses", default=None)
    _add(sp, "--test-parses", default=None)
    _add(sp, "--out-dir", required=True)
    _add(sp, "--seeds", default="0,1,2", help="comma-separated seeds")
    _add(sp, "--grid", default="full,no_syntax,no_cwn", help="comma-separated cells")
    _train_flags(sp)
    _graph_flags(sp)

    sp = subs["sweep"] = _new_sub(subparsers, "sweep", "n-gram vocabulary size sweep")
    _add(sp, "--train", required=True)
    _add(sp, "--test", required=True)
    _add(sp, "--dev", default=None)
    _add(sp, "--dev-ratio", default=0.1, type=float)
    _add(sp, "--lexicon", default=None)
    _add(sp, "--ngrams", required=True)
    _add(sp, "--parses", default=None)
    _add(sp, "--test-parses", default=None)
    _add(sp, "--out-dir", required=True)
    _add(sp, "--seeds", default="0,1,2")
    _add(sp, "--fractions", default="0.2,0.4,0.6,0.8,1.0")
    _add(sp, "--retrain", action="store_true", default=False,
         help="retrain per fraction instead of re-decoding")
    _train_flags(sp)
    _graph_flags(sp)

    sp = subs["inspect-graph"] = _new_sub(subparsers, "inspect-graph",
                                          "dump the graph built for one sentence")
    _add(sp, "--text", required=True, help="raw sentence")
    _add(sp, "--lexicon", default=None)
    _add(sp, "--ngrams", default=None)
    _add(sp, "--parses", default=None, help="parse file; the first block is used")
    _graph_flags(sp)

    sp = subs["grad-check"] = _new_sub(subparsers, "grad-check",
                                       "finite-difference gradient verification")
    _add(sp, "--seed", default=0, type=int)
    _add(sp, "--checks", default=5, type=int, help="number of random instances")
    _add(sp, "--dim", default=8, type=int)
    _add(sp, "--layers", default=2, type=int)
    _add(sp, "--eps", default=1e-4, type=float)
    _add(sp, "--threshold", default=1e-4, type=float)
    _graph_flags(sp)

    return parser, subs


_HANDLERS = {
    "build-lexicon": cmd_build_lexicon,
    "extract-ngrams": cmd_extract_ngrams,
    "train": cmd_train,
    "segment": cmd_segment,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "inspect-graph": cmd_inspect_graph,
    "grad-check": cmd_grad_check,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, subs = make_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        effective = _resolve(ns, subs[ns.command])
    except _DATA_ERRORS as exc:
        print(json.dumps({"error": str(exc), "command": ns.command}), file=sys.stderr)
        return 1
    logging.basicConfig(stream=sys.stderr,
                        level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _HANDLERS[ns.command](ns, effective, argv)
    except _DATA_ERRORS as exc:
        print(json.dumps({"error": str(exc), "command": ns.command}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
