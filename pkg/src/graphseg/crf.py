"""Linear-chain CRF over the four boundary labels B, M, E, S.

The score of a label sequence y for emissions s and transition matrix b is

    score(y) = sum_i s[i, y_i] + sum_{i>=2} b[y_{i-1}, y_i]

with no separate start/stop parameters: position 1 carries its emission
only.  The partition function is computed by the forward algorithm in log
space (max-subtracted log-sum-exp, 64-bit), gradients by forward-backward,
and decoding by Viterbi with ties broken toward the smallest label index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import LABELS

N_LABELS = 4
_B, _M, _E, _S = range(4)

# allowed[y', y]: may label y follow label y'
ALLOWED = np.zeros((4, 4), dtype=bool)
ALLOWED[_B, [_M, _E]] = True
ALLOWED[_M, [_M, _E]] = True
ALLOWED[_E, [_B, _S]] = True
ALLOWED[_S, [_B, _S]] = True
ALLOWED_FIRST = np.array([True, False, False, True])
ALLOWED_LAST = np.array([False, False, True, True])

_NEG = -1e12  # finite stand-in for -inf so masked arithmetic stays NaN-free


class CrfError(ValueError):
    pass


@dataclass
class CrfParams:
    w: np.ndarray  # d_a x 4 emission projection
    b: np.ndarray  # 4 emission bias
    trans: np.ndarray  # 4 x 4, trans[y', y]


def init_crf(d_a: int, rng: np.random.Generator) -> CrfParams:
    scale = np.sqrt(6.0 / (d_a + N_LABELS))
    return CrfParams(
        w=rng.uniform(-scale, scale, size=(d_a, N_LABELS)),
        b=np.zeros(N_LABELS),
        trans=np.zeros((N_LABELS, N_LABELS)),
    )


def labels_to_ids(labels: str) -> np.ndarray:
    return np.array([LABELS.index(y) for y in labels], dtype=np.int64)


def ids_to_labels(ids) -> str:
    return "".join(LABELS[int(i)] for i in ids)


def emissions(h: np.ndarray, e: np.ndarray, params: CrfParams) -> np.ndarray:
    """Per-position label scores from concatenated graph and encoder rows."""
    if h.shape[0] != e.shape[0]:
        raise CrfError(f"row mismatch: {h.shape[0]} vs {e.shape[0]}")
    return np.hstack([h, e]) @ params.w + params.b


def _logsumexp(x: np.ndarray, axis=None):
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis) if axis is not None else float(out)


def log_partition(s: np.ndarray, trans: np.ndarray) -> float:
    """Log of the sum over all label sequences, by the forward algorithm."""
    T = s.shape[0]
    if T < 1:
        raise CrfError("need at least one position")
    alpha = s[0].astype(np.float64)
    for i in range(1, T):
        alpha = s[i] + _logsumexp(alpha[:, None] + trans, axis=0)
    return float(_logsumexp(alpha))


def score_sequence(s: np.ndarray, trans: np.ndarray, y: np.ndarray) -> float:
    total = float(s[np.arange(len(y)), y].sum())
    if len(y) > 1:
        total += float(trans[y[:-1], y[1:]].sum())
    return total


def neg_log_likelihood(s: np.ndarray, trans: np.ndarray, y: np.ndarray) -> float:
    if s.shape[0] != len(y):
        raise CrfError("gold length does not match emissions")
    return log_partition(s, trans) - score_sequence(s, trans, y)


def nll_and_grads(s: np.ndarray, trans: np.ndarray, y: np.ndarray):
    """NLL plus gradients w.r.t. emissions and transitions.

    Uses forward-backward: the gradient of the log-partition w.r.t. an
    emission is the label marginal, w.r.t. a transition entry the summed
    pairwise marginal; subtracting the gold indicator counts gives the
    NLL gradient.
    """
    T = s.shape[0]
    if T != len(y):
        raise CrfError("gold length does not match emissions")
    alphas = np.empty((T, N_LABELS))
    alphas[0] = s[0]
    for i in range(1, T):
        alphas[i] = s[i] + _logsumexp(alphas[i - 1][:, None] + trans, axis=0)
    logZ = _logsumexp(alphas[T - 1])

    betas = np.empty((T, N_LABELS))
    betas[T - 1] = 0.0
    for i in range(T - 2, -1, -1):
        betas[i] = _logsumexp(trans + (s[i + 1] + betas[i + 1])[None, :], axis=1)

    ds = np.exp(alphas + betas - logZ)
    dtrans = np.zeros((N_LABELS, N_LABELS))
    for i in range(1, T):
        pair = alphas[i - 1][:, None] + trans + (s[i] + betas[i])[None, :] - logZ
        dtrans += np.exp(pair)

    ds[np.arange(T), y] -= 1.0
    if T > 1:
        np.add.at(dtrans, (y[:-1], y[1:]), -1.0)
    nll = logZ - score_sequence(s, trans, y)
    return nll, ds, dtrans


def viterbi(s: np.ndarray, trans: np.ndarray, constrain_legal: bool = True) -> np.ndarray:
    """Highest-scoring label sequence.

    With ``constrain_legal`` the BMES grammar is enforced: the first label
    must be B or S, the last E or S, and only legal successor pairs may be
    used.  np.argmax resolves ties toward the smaller label index.
    """
    T = s.shape[0]
    if T < 1:
        raise CrfError("need at least one position")
    tr = trans.astype(np.float64).copy()
    first = s[0].astype(np.float64).copy()
    last_mask = np.zeros(N_LABELS)
    if constrain_legal:
        tr[~ALLOWED] = _NEG
        first[~ALLOWED_FIRST] = _NEG
        last_mask[~ALLOWED_LAST] = _NEG

    trellis = first
    back = np.zeros((T, N_LABELS), dtype=np.int64)
    for i in range(1, T):
        cand = trellis[:, None] + tr
        back[i] = np.argmax(cand, axis=0)
        trellis = s[i] + np.max(cand, axis=0)
    trellis = trellis + last_mask

    path = np.empty(T, dtype=np.int64)
    path[T - 1] = int(np.argmax(trellis))
    for i in range(T - 1, 0, -1):
        path[i - 1] = back[i, path[i]]
    return path
