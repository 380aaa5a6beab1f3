"""Character encoder: trainable embedding table plus an optional seam for
precomputed per-character vectors (e.g. exported from a pretrained model).

External vectors live in a small binary container keyed by sentence
ordinal; when attached they are linearly projected and summed onto the
embedding rows.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .corpus import LAT_TOKEN, NUM_TOKEN, PUNC_TOKEN, Corpus, Sentence

log = logging.getLogger(__name__)

PAD_TOKEN = "⟨PAD⟩"
UNK_TOKEN = "⟨UNK⟩"
SPECIALS = (PAD_TOKEN, UNK_TOKEN, NUM_TOKEN, LAT_TOKEN, PUNC_TOKEN)

EXT_MAGIC = b"GSXE"
EXT_VERSION = 1


@dataclass(frozen=True)
class CharVocab:
    symbols: tuple[str, ...]

    @classmethod
    def build(cls, train: Corpus) -> "CharVocab":
        seen = set()
        for sent, _ in train:
            seen.update(sent.tokens)
        extra = sorted(seen - set(SPECIALS))
        return cls(symbols=tuple(SPECIALS) + tuple(extra))

    def __post_init__(self):
        object.__setattr__(self, "_lookup", {s: i for i, s in enumerate(self.symbols)})

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, token: str) -> int:
        return self._lookup.get(token, self._lookup[UNK_TOKEN])

    def encode_tokens(self, tokens) -> np.ndarray:
        return np.array([self.index(t) for t in tokens], dtype=np.int64)


@dataclass
class EncoderParams:
    vocab: CharVocab
    table: np.ndarray  # |vocab| x d
    ext_proj: np.ndarray | None = None  # d_ext x d

    @property
    def dim(self) -> int:
        return self.table.shape[1]


def init_encoder(vocab: CharVocab, dim: int, rng: np.random.Generator, ext_dim: int | None = None) -> EncoderParams:
    table = rng.uniform(-0.1, 0.1, size=(len(vocab), dim))
    proj = rng.uniform(-0.1, 0.1, size=(ext_dim, dim)) if ext_dim else None
    return EncoderParams(vocab=vocab, table=table, ext_proj=proj)


def encode(sentence: Sentence, params: EncoderParams, ext: np.ndarray | None = None) -> np.ndarray:
    """Per-character representation rows; external rows are projected and
    added when present."""
    if len(sentence) == 0:
        raise ValueError("cannot encode an empty sentence")
    ids = params.vocab.encode_tokens(sentence.tokens)
    out = params.table[ids].copy()
    if ext is not None:
        if params.ext_proj is None:
            raise ValueError("external rows supplied but no projection is configured")
        if ext.shape[0] != len(sentence):
            raise ValueError("external row count does not match the sentence")
        out += ext @ params.ext_proj
    return out


def save_external_embeddings(path, matrices: dict[int, np.ndarray]) -> None:
    """Write the binary external-embedding container.

    Layout: magic 'GSXE', u32 version, u32 d_ext, u32 sentence count, then
    per sentence u32 ordinal, u32 row count and row-major f32 data.
    """
    if not matrices:
        raise ValueError("nothing to save")
    d_ext = next(iter(matrices.values())).shape[1]
    with open(path, "wb") as f:
        f.write(EXT_MAGIC)
        f.write(struct.pack("<III", EXT_VERSION, d_ext, len(matrices)))
        for sid in sorted(matrices):
            mat = np.asarray(matrices[sid], dtype=np.float32)
            if mat.ndim != 2 or mat.shape[1] != d_ext:
                raise ValueError(f"sentence {sid}: expected shape (*, {d_ext})")
            f.write(struct.pack("<II", sid, mat.shape[0]))
            f.write(mat.tobytes(order="C"))


def load_external_embeddings(path, lengths=None) -> dict[int, np.ndarray]:
    """Read the container; with ``lengths`` given (dict or sequence of
    sentence lengths) mismatching sentences are rejected individually."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != EXT_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, d_ext, count = struct.unpack("<III", f.read(12))
        if version != EXT_VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        out: dict[int, np.ndarray] = {}
        for _ in range(count):
            sid, rows = struct.unpack("<II", f.read(8))
            data = np.frombuffer(f.read(rows * d_ext * 4), dtype="<f4")
            out[sid] = data.reshape(rows, d_ext).astype(np.float64)
    if lengths is not None:
        expect = lengths if isinstance(lengths, dict) else dict(enumerate(lengths))
        kept = {}
        for sid, mat in out.items():
            want = expect.get(sid)
            if want is not None and mat.shape[0] != want:
                log.warning("external embeddings for sentence %d: %d rows, expected %d; rejected",
                            sid, mat.shape[0], want)
                continue
            kept[sid] = mat
        out = kept
    return out
