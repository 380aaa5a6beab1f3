"""Relation-typed graph convolution with edge-wise gating.

One layer computes, over the enabled relations of the sentence graph,

    H_next = act( sum_rel  A_rel @ (g_rel * (H @ W_rel)) )

where ``A_rel`` is the degree-normalized adjacency with self-connections,
``W_rel`` a relation-specific transformation and ``g_rel`` a per-node
sigmoid gate computed from the node states; every message is scaled by its
source node's gate before aggregation, which lets the model down-weight
unreliable parse edges and wrong candidate words.

Forward and backward passes are hand written on top of sparse matrix
products so gradients can be validated against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")


def _act(x: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    if kind == "identity":
        return x
    raise ValueError(f"unknown activation {kind!r}")


def _act_grad(pre: np.ndarray, out: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (pre > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - out * out
    if kind == "identity":
        return np.ones_like(pre)
    raise ValueError(f"unknown activation {kind!r}")


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class RelationWeights:
    w: np.ndarray  # d x d
    gate_w: np.ndarray  # d
    gate_b: np.ndarray  # scalar, stored as shape (1,)


@dataclass
class HgnnParams:
    layers: list[dict[str, RelationWeights]] = field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return len(self.layers)


def init_hgnn(relations, dim: int, n_layers: int, rng: np.random.Generator) -> HgnnParams:
    if n_layers < 1:
        raise ValueError("need at least one layer")
    scale = np.sqrt(6.0 / (2 * dim))
    layers = []
    for _ in range(n_layers):
        per_rel = {}
        for rel in relations:
            per_rel[rel] = RelationWeights(
                w=rng.uniform(-scale, scale, size=(dim, dim)),
                gate_w=rng.uniform(-0.1, 0.1, size=dim),
                gate_b=np.zeros(1),
            )
        layers.append(per_rel)
    return HgnnParams(layers=layers)


def gate(H: np.ndarray, gate_w: np.ndarray, gate_b: np.ndarray) -> np.ndarray:
    """Per-node scalar gate in (0, 1)."""
    return sigmoid(H @ gate_w + float(gate_b))


def layer_forward(H, graph, weights, activation="relu"):
    """One convolution layer; returns (H_next, cache for backward)."""
    pre = np.zeros_like(H)
    rel_cache = {}
    for rel in graph.relations:
        rw = weights[rel]
        if rw.w.shape[0] != H.shape[1]:
            raise ValueError(f"relation {rel}: weight dim {rw.w.shape} vs states {H.shape}")
        g = gate(H, rw.gate_w, rw.gate_b)
        U = H @ rw.w
        V = g[:, None] * U
        pre += graph.norm[rel] @ V
        rel_cache[rel] = (g, U)
    out = _act(pre, activation)
    return out, (H, pre, out, rel_cache)


def layer_backward(dOut, cache, graph, weights, activation="relu"):
    """Backward through one layer; returns (dH, per-relation grads)."""
    H, pre, out, rel_cache = cache
    dPre = dOut * _act_grad(pre, out, activation)
    dH = np.zeros_like(H)
    grads = {}
    for rel in graph.relations:
        rw = weights[rel]
        g, U = rel_cache[rel]
        dV = graph.norm[rel].T @ dPre
        dU = g[:, None] * dV
        dg = np.sum(dV * U, axis=1)
        dz = dg * g * (1.0 - g)
        grads[rel] = RelationWeights(
            w=H.T @ dU,
            gate_w=H.T @ dz,
            gate_b=np.array([dz.sum()]),
        )
        dH += dU @ rw.w.T
        dH += dz[:, None] * rw.gate_w[None, :]
    return dH, grads


def forward(graph, H0: np.ndarray, params: HgnnParams, activation="relu"):
    """Run all layers; returns (char-node rows, caches)."""
    H = H0
    caches = []
    for weights in params.layers:
        H, cache = layer_forward(H, graph, weights, activation)
        caches.append(cache)
    return H[: graph.n_chars], caches


def backward(dChars: np.ndarray, caches, graph, params: HgnnParams, activation="relu"):
    """Backward through all layers from gradients on the char-node rows.

    Returns (dH0, per-layer list of per-relation gradient structs).
    """
    n = len(graph)
    dH = np.zeros((n, dChars.shape[1]))
    dH[: graph.n_chars] = dChars
    layer_grads: list[dict[str, RelationWeights]] = [None] * params.n_layers
    for l in range(params.n_layers - 1, -1, -1):
        dH, grads = layer_backward(dH, caches[l], graph, params.layers[l], activation)
        layer_grads[l] = grads
    return dH, layer_grads
