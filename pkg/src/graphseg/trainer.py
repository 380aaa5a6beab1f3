"""Parameter estimation: SGD/Adam over the mean sentence NLL, early
stopping on dev F1, binary checkpoints that round-trip bit-identically,
raw-text segmentation and a finite-difference gradient checker.

Runs are deterministic for a fixed seed in single-worker mode: epoch
shuffling derives from (seed, epoch) only and log records carry no wall
time.
"""

from __future__ import annotations

import json
import logging
import random
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import crf as crf_mod
from . import evaluation, model as model_mod
from .corpus import Corpus, Lexicon, Sentence, from_bmes
from .encoder import CharVocab
from .graph import GraphConfig
from .model import GraphBuilder, Instance, ModelParams, init_model
from .ngrams import NgramVocab
from .parses import DepParse

log = logging.getLogger(__name__)

CKPT_MAGIC = b"GSCK"
CKPT_VERSION = 1


class TrainingDiverged(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 64
    layers: int = 2
    activation: str = "relu"
    lr: float = 0.05
    lr_decay: float = 0.0
    batch_size: int = 8
    epochs: int = 50
    clip: float = 5.0
    seed: int = 0
    patience: int = 10
    optimizer: str = "sgd"
    max_len: int = 256
    graph: GraphConfig = field(default_factory=GraphConfig)

    def __post_init__(self):
        for name in ("dim", "layers", "lr", "batch_size", "epochs", "clip", "patience", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "dim", "layers", "activation", "lr", "lr_decay", "batch_size",
            "epochs", "clip", "seed", "patience", "optimizer", "max_len")}
        d["graph"] = self.graph.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["graph"] = GraphConfig.from_dict(d["graph"])
        return cls(**d)


class Sgd:
    kind = "sgd"

    def step(self, params: ModelParams, grads: dict, lr: float) -> None:
        for name, arr in params.named_tensors():
            arr -= lr * grads[name]

    def state(self) -> tuple[dict, dict]:
        return {}, {}

    def load_state(self, info: dict, tensors: dict) -> None:
        pass


class Adam:
    kind = "adam"

    def __init__(self, params: ModelParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(a) for name, a in params.named_tensors()}
        self.v = {name: np.zeros_like(a) for name, a in params.named_tensors()}

    def step(self, params: ModelParams, grads: dict, lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, arr in params.named_tensors():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            arr -= lr * (self.m[name] / b1c) / (np.sqrt(self.v[name] / b2c) + self.eps)

    def state(self) -> tuple[dict, dict]:
        tensors = {}
        for name, m in self.m.items():
            tensors[f"opt.m.{name}"] = m
            tensors[f"opt.v.{name}"] = self.v[name]
        return {"t": self.t}, tensors

    def load_state(self, info: dict, tensors: dict) -> None:
        self.t = int(info["t"])
        for name in self.m:
            self.m[name] = tensors[f"opt.m.{name}"]
            self.v[name] = tensors[f"opt.v.{name}"]


def make_optimizer(kind: str, params: ModelParams):
    return Adam(params) if kind == "adam" else Sgd()


def clip_grads(grads: dict, max_norm: float) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def build_instances(
    char_vocab: CharVocab,
    builder: GraphBuilder,
    corpus: Corpus,
    parses: dict | None = None,
    ext: dict | None = None,
    with_gold: bool = True,
) -> list[Instance]:
    out = []
    for sent, spans in corpus:
        parse = parses.get(sent.line_no) if parses else None
        rows = ext.get(sent.line_no) if ext else None
        if rows is not None and rows.shape[0] != len(sent):
            rows = None
        out.append(builder.build(char_vocab, sent, spans=spans if with_gold else None,
                                 parse=parse, ext=rows))
    return out


# ---------------------------------------------------------------------------
# checkpoints

def _header_json(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")


def save_checkpoint(path, params: ModelParams, info: dict, opt=None) -> None:
    """Binary container: magic, version, JSON header, named f64 tensors."""
    header = {
        "model": {
            "dim": params.meta.dim,
            "layers": params.meta.n_layers,
            "activation": params.meta.activation,
            "graph_config": params.meta.graph_config.to_dict(),
            "ext_dim": params.meta.ext_dim,
        },
        "char_vocab": list(params.encoder.vocab.symbols),
        "lexicon": info.get("lexicon", {}),
        "ngrams": info.get("ngrams", {}),
        "labels": "BMES",
        "seed": info.get("seed", 0),
        "epoch": info.get("epoch", -1),
        "best_f1": info.get("best_f1", -1.0),
        "best_epoch": info.get("best_epoch", -1),
        "train_config": info.get("train_config", {}),
        "optimizer": {},
    }
    tensors = list(params.named_tensors())
    if opt is not None:
        opt_info, opt_tensors = opt.state()
        header["optimizer"] = {"kind": opt.kind, **opt_info}
        tensors += sorted(opt_tensors.items())
    blob = _header_json(header)
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<IQ", CKPT_VERSION, len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors:
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Returns (params, builder, header dict, optimizer tensors)."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CKPT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint (magic {magic!r})")
        version, hlen = struct.unpack("<IQ", f.read(12))
        if version != CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(f.read(hlen).decode("utf-8"))
        (count,) = struct.unpack("<I", f.read(4))
        tensors = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<I", f.read(4))
            name = f.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", f.read(4))
            shape = struct.unpack(f"<{ndim}Q", f.read(8 * ndim))
            n = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(f.read(8 * n), dtype="<f8").copy()
            tensors[name] = data.reshape(shape)

    char_vocab = CharVocab(symbols=tuple(header["char_vocab"]))
    lexicon = Lexicon(counts={w: int(c) for w, c in header["lexicon"].items()})
    vocab = NgramVocab(entries={s: (int(f_), int(a)) for s, (f_, a) in header["ngrams"].items()})
    mcfg = header["model"]
    config = GraphConfig.from_dict(mcfg["graph_config"])
    # rebuild the builder exactly as train() did, or table shapes drift
    builder = GraphBuilder(lexicon if (config.use_lexicon and lexicon.counts) else None,
                           vocab if (config.use_ngrams and vocab.entries) else None, config)
    params = init_model(char_vocab, builder, mcfg["dim"], mcfg["layers"],
                        mcfg["activation"], seed=0, ext_dim=mcfg["ext_dim"])
    opt_tensors = {}
    for name, arr in params.named_tensors():
        if name not in tensors:
            raise ValueError(f"{path}: missing tensor {name}")
        if tensors[name].shape != arr.shape:
            raise ValueError(f"{path}: tensor {name} has shape {tensors[name].shape}, expected {arr.shape}")
        arr[...] = tensors[name]
    for name, arr in tensors.items():
        if name.startswith("opt."):
            opt_tensors[name] = arr
    return params, builder, header, opt_tensors


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    best_path: Path
    last_path: Path
    log_path: Path
    records: list[dict]
    best_f1: float
    best_epoch: int


def _epoch_order(n: int, seed: int, epoch: int) -> list[int]:
    order = list(range(n))
    random.Random(seed * 1_000_003 + epoch).shuffle(order)
    return order


def train(
    config: TrainConfig,
    train_corpus: Corpus,
    dev_corpus: Corpus | None,
    lexicon: Lexicon,
    vocab: NgramVocab | None,
    out_dir,
    parses: dict | None = None,
    dev_parses: dict | None = None,
    ext: dict | None = None,
    ext_dim: int | None = None,
    resume=None,
) -> TrainResult:
    """Fit the model; keeps the best-dev and the last checkpoint."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_path = out_dir / "best.ckpt"
    last_path = out_dir / "last.ckpt"
    log_path = out_dir / "train_log.jsonl"

    char_vocab = CharVocab.build(train_corpus)
    builder = GraphBuilder(lexicon if config.graph.use_lexicon else None,
                           vocab if config.graph.use_ngrams else None,
                           config.graph)
    opt = None
    start_epoch = 0
    best_f1, best_epoch = -1.0, -1
    records: list[dict] = []
    if resume is not None:
        params, builder, header, opt_tensors = load_checkpoint(resume)
        char_vocab = params.encoder.vocab
        opt = make_optimizer(header["optimizer"].get("kind", config.optimizer), params)
        if header["optimizer"]:
            opt.load_state(header["optimizer"], opt_tensors)
        start_epoch = int(header["epoch"]) + 1
        best_f1 = float(header["best_f1"])
        best_epoch = int(header["best_epoch"])
    else:
        params = init_model(char_vocab, builder, config.dim, config.layers,
                            config.activation, seed=config.seed, ext_dim=ext_dim)
        opt = make_optimizer(config.optimizer, params)

    instances = build_instances(char_vocab, builder, train_corpus, parses=parses, ext=ext)
    dev_items = None
    if dev_corpus is not None and len(dev_corpus):
        dev_items = dev_corpus

    def info_at(epoch: int) -> dict:
        return {
            "lexicon": lexicon.counts,
            "ngrams": {s: list(v) for s, v in (vocab.entries.items() if vocab else ())},
            "seed": config.seed,
            "epoch": epoch,
            "best_f1": best_f1,
            "best_epoch": best_epoch,
            "train_config": config.to_dict(),
        }

    mode = "a" if resume is not None else "w"
    with open(log_path, mode, encoding="utf-8") as logf:
        for epoch in range(start_epoch, config.epochs):
            lr = config.lr / (1.0 + config.lr_decay * epoch)
            order = _epoch_order(len(instances), config.seed, epoch)
            losses = []
            for k in range(0, len(order), config.batch_size):
                batch = [instances[i] for i in order[k : k + config.batch_size]]
                loss, grads = model_mod.loss_and_grads_batch(params, batch)
                if not np.isfinite(loss):
                    raise TrainingDiverged(f"non-finite loss at epoch {epoch} step {k // config.batch_size}")
                clip_grads(grads, config.clip)
                opt.step(params, grads, lr)
                params.check_finite()
                losses.append(loss)
            record = {
                "epoch": epoch,
                "steps": len(losses),
                "lr": lr,
                "train_loss": float(np.mean(losses)),
            }
            if dev_items is not None:
                m = evaluation.evaluate_model(params, builder, dev_items, lexicon,
                                              parses=dev_parses, ext=ext)
                record.update(
                    dev_precision=m.precision,
                    dev_recall=m.recall,
                    dev_f1=m.f1,
                    dev_oov_recall=m.oov_recall,
                )
                improved = m.f1 > best_f1
            else:
                improved = True
            if improved:
                best_f1 = record.get("dev_f1", record["train_loss"] * -1.0)
                best_epoch = epoch
                save_checkpoint(best_path, params, info_at(epoch), opt=None)
            record["best_f1"] = best_f1
            record["best_epoch"] = best_epoch
            records.append(record)
            logf.write(json.dumps(record, sort_keys=True) + "\n")
            logf.flush()
            log.info("epoch %d: loss %.4f dev_f1 %s", epoch, record["train_loss"],
                     record.get("dev_f1"))
            save_checkpoint(last_path, params, info_at(epoch), opt=opt)
            if dev_items is not None and epoch - best_epoch >= config.patience:
                log.info("early stop at epoch %d (best %d)", epoch, best_epoch)
                break
    return TrainResult(best_path, last_path, log_path, records, best_f1, best_epoch)


# ---------------------------------------------------------------------------
# segmentation

def segment_sentence(params: ModelParams, builder: GraphBuilder, raw: str,
                     parse=None, ext=None, constrain_legal: bool = True) -> str:
    """Segment one raw line; original characters are restored from offsets."""
    sent = Sentence.from_raw(raw)
    if len(sent) == 0:
        return ""
    inst = builder.build(params.encoder.vocab, sent, parse=parse, ext=ext)
    ids = model_mod.decode(params, inst, constrain_legal=constrain_legal)
    spans, _ = from_bmes(crf_mod.ids_to_labels(ids), len(sent))
    return " ".join(sent.span_raw(sp) for sp in spans)


def segment_lines(params: ModelParams, builder: GraphBuilder, lines,
                  parses: dict | None = None, ext: dict | None = None) -> list[str]:
    out = []
    for i, line in enumerate(lines):
        line = line.rstrip("\n")
        parse = parses.get(i) if parses else None
        rows = ext.get(i) if ext else None
        out.append(segment_sentence(params, builder, line, parse=parse, ext=rows))
    return out


# ---------------------------------------------------------------------------
# gradient checking

def grad_check(
    params: ModelParams,
    inst: Instance,
    eps: float = 1e-4,
    max_coords_per_tensor: int | None = None,
    rng: np.random.Generator | None = None,
    mutate_grads=None,
) -> float:
    """Worst relative error between analytic and central-difference
    gradients over every parameter tensor.

    Large tensors can be spot-checked by sampling ``max_coords_per_tensor``
    coordinates.  ``mutate_grads`` (test hook) may tamper with the analytic
    gradients before comparison.
    """
    _, grads = model_mod.loss_and_grads(params, inst)
    if mutate_grads is not None:
        mutate_grads(grads)
    worst = 0.0
    for name, arr in params.named_tensors():
        size = arr.size
        if size == 0:
            continue
        if max_coords_per_tensor is not None and size > max_coords_per_tensor:
            gen = rng if rng is not None else np.random.default_rng(0)
            coords = gen.choice(size, size=max_coords_per_tensor, replace=False)
        else:
            coords = range(size)
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        for k in coords:
            orig = flat[k]
            flat[k] = orig + eps
            f_plus = model_mod.forward_loss(params, inst)
            flat[k] = orig - eps
            f_minus = model_mod.forward_loss(params, inst)
            flat[k] = orig
            fd = (f_plus - f_minus) / (2.0 * eps)
            rel = abs(fd - gflat[k]) / max(1e-6, abs(fd), abs(gflat[k]))
            worst = max(worst, rel)
    return worst


_CHECK_CHARS = "甲乙丙丁戊己庚辛壬癸"


def random_check_setup(
    seed: int,
    dim: int = 8,
    layers: int = 2,
    config: GraphConfig | None = None,
    activation: str = "tanh",
    with_ext: bool = False,
    max_nodes: int = 8,
):
    """Small random model + instance for gradient checking.

    The sentence, lexicon, n-gram vocabulary, parse and gold labels are all
    drawn from ``seed``; the resulting graph has at most ``max_nodes``
    nodes.
    """
    pyrng = random.Random(seed)
    rng = np.random.default_rng(seed)
    config = config or GraphConfig()
    T = pyrng.randint(2, 4)
    # distinct tokens keep every candidate span unique, bounding node count
    toks = pyrng.sample(_CHECK_CHARS, T)
    sent = Sentence.from_tokens(toks)

    lexicon = Lexicon()
    for t in toks:
        lexicon.add(t)
    vocab = NgramVocab()
    budget = max_nodes - T
    spans = [(b, e) for b in range(T) for e in range(b + 2, T + 1)]
    pyrng.shuffle(spans)
    for b, e in spans[: max(0, budget)]:
        s = "".join(toks[b:e])
        if pyrng.random() < 0.5:
            lexicon.add(s)
        else:
            vocab.entries[s] = (1, 1)

    parse = None
    if config.use_syntax and T >= 2:
        cut = pyrng.randint(1, T - 1)
        words = ["".join(toks[:cut]), "".join(toks[cut:])]
        heads = [2, 0] if pyrng.random() < 0.5 else [0, 1]
        parse = DepParse(tokens=words, heads=heads, spans=[(0, cut), (cut, T)])

    cuts = sorted(pyrng.sample(range(1, T), pyrng.randint(0, T - 1))) if T > 1 else []
    bounds = [0] + cuts + [T]
    gold_spans = list(zip(bounds[:-1], bounds[1:]))

    char_vocab = CharVocab.build(Corpus(sentences=[(sent, gold_spans)]))
    builder = GraphBuilder(lexicon, vocab, config)
    ext_dim = 3 if with_ext else None
    params = init_model(char_vocab, builder, dim, layers, activation, seed=seed, ext_dim=ext_dim)
    # nudge parameters off their near-zero init so gates and activations
    # operate away from symmetric points
    for _, arr in params.named_tensors():
        arr += rng.normal(scale=0.3, size=arr.shape)
    ext = rng.normal(size=(T, 3)) if with_ext else None
    inst = builder.build(char_vocab, sent, spans=gold_spans, parse=parse, ext=ext)
    return params, inst
