"""Word-level scoring: precision/recall/F1 on exact span matches and
recall over out-of-vocabulary gold words.

Corpus scores are micro-averaged: counts are summed over sentences before
the ratios are taken.  A sentence set with no OOV gold words reports an
OOV recall of 1.0 together with a degenerate flag instead of dividing by
zero.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import model as model_mod
from .corpus import Corpus, Lexicon, Span, from_bmes
from .crf import ids_to_labels


class EvalError(ValueError):
    pass


@dataclass
class Metrics:
    n_gold: int = 0
    n_pred: int = 0
    n_correct: int = 0
    n_oov_gold: int = 0
    n_oov_correct: int = 0

    def __add__(self, other: "Metrics") -> "Metrics":
        return Metrics(
            self.n_gold + other.n_gold,
            self.n_pred + other.n_pred,
            self.n_correct + other.n_correct,
            self.n_oov_gold + other.n_oov_gold,
            self.n_oov_correct + other.n_oov_correct,
        )

    @property
    def precision(self) -> float:
        return self.n_correct / self.n_pred if self.n_pred else 0.0

    @property
    def recall(self) -> float:
        return self.n_correct / self.n_gold if self.n_gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    @property
    def oov_degenerate(self) -> bool:
        return self.n_oov_gold == 0

    @property
    def oov_recall(self) -> float:
        return 1.0 if self.oov_degenerate else self.n_oov_correct / self.n_oov_gold

    def as_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "oov_recall": self.oov_recall,
            "oov_degenerate": self.oov_degenerate,
            "n_gold": self.n_gold,
            "n_pred": self.n_pred,
            "n_correct": self.n_correct,
            "n_oov_gold": self.n_oov_gold,
            "n_oov_correct": self.n_oov_correct,
        }


def check_partition(spans: list[Span]) -> int:
    """Validate that spans tile [0, T) without gaps or overlap; returns T."""
    pos = 0
    for b, e in spans:
        if b != pos or e <= b:
            raise EvalError(f"spans do not form a partition at ({b}, {e})")
        pos = e
    return pos


def score(gold: list[Span], pred: list[Span]) -> Metrics:
    """Exact-match word counts for one sentence (no OOV accounting)."""
    if check_partition(gold) != check_partition(pred):
        raise EvalError("gold and predicted partitions cover different lengths")
    correct = len(set(gold) & set(pred))
    return Metrics(n_gold=len(gold), n_pred=len(pred), n_correct=correct)


def sentence_metrics(sentence, gold: list[Span], pred: list[Span], lexicon: Lexicon | None) -> Metrics:
    m = score(gold, pred)
    if lexicon is not None:
        pred_set = set(pred)
        for sp in gold:
            if sentence.span_text(sp) not in lexicon:
                m.n_oov_gold += 1
                if sp in pred_set:
                    m.n_oov_correct += 1
    return m


def oov_recall(sentence, gold: list[Span], pred: list[Span], lexicon: Lexicon) -> tuple[float, bool]:
    """Fraction of OOV gold words recovered exactly; (value, degenerate)."""
    m = sentence_metrics(sentence, gold, pred, lexicon)
    return m.oov_recall, m.oov_degenerate


def predict_spans(params, inst, constrain_legal: bool = True) -> list[Span]:
    ids = model_mod.decode(params, inst, constrain_legal=constrain_legal)
    spans, _ = from_bmes(ids_to_labels(ids), len(inst.sentence))
    return spans


def evaluate_model(
    params,
    builder,
    corpus: Corpus,
    lexicon: Lexicon | None = None,
    parses: dict | None = None,
    ext: dict | None = None,
    constrain_legal: bool = True,
) -> Metrics:
    """Decode every sentence and micro-average the span counts."""
    total = Metrics()
    char_vocab = params.encoder.vocab
    for sent, gold in corpus:
        parse = parses.get(sent.line_no) if parses else None
        rows = ext.get(sent.line_no) if ext else None
        inst = builder.build(char_vocab, sent, parse=parse, ext=rows)
        pred = predict_spans(params, inst, constrain_legal=constrain_legal)
        total = total + sentence_metrics(sent, gold, pred, lexicon)
    return total
