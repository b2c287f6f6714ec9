"""Weighted cross-modal attention.

Each head projects the query modality to ``Q_h`` and the key modality to
``K_h`` and ``V_h`` (all ``D x D/H``). The raw logits ``Q_h K_h^T`` are
multiplied elementwise by the cosine-similarity matrix of the *raw* input
embeddings, which replaces the usual ``1/sqrt(d)`` factor. Head outputs are
concatenated, projected by ``W^o`` (``D x D``, no bias) and a sinusoidal
positional encoding is added.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .numerics import DimensionError, Graph, Tensor

# incremented on every similarity-matrix evaluation; lets tests confirm that
# the unscaled variant never builds S
SIMILARITY_CALLS = 0


@dataclass
class WcaParams:
    """Plain-array parameters of one attention block."""

    w_q: list[np.ndarray]
    w_k: list[np.ndarray]
    w_v: list[np.ndarray]
    w_o: np.ndarray

    @property
    def heads(self):
        return len(self.w_q)

    @property
    def dim(self):
        return self.w_o.shape[0]


def param_shapes(prefix, dim, heads):
    """Ordered ``name -> shape`` map for one attention block."""
    if dim % heads:
        raise DimensionError(f"embedding size {dim} is not divisible by {heads} heads")
    d_head = dim // heads
    shapes = {}
    for kind in ("q", "k", "v"):
        for h in range(heads):
            shapes[f"{prefix}.{kind}{h}"] = (dim, d_head)
    shapes[f"{prefix}.out"] = (dim, dim)
    return shapes


def to_tensors(graph: Graph, params: WcaParams, prefix="wca", trainable=True):
    make = (lambda n, a: graph.param(n, a)) if trainable else (lambda n, a: graph.constant(a))
    return {
        "q": [make(f"{prefix}.q{h}", w) for h, w in enumerate(params.w_q)],
        "k": [make(f"{prefix}.k{h}", w) for h, w in enumerate(params.w_k)],
        "v": [make(f"{prefix}.v{h}", w) for h, w in enumerate(params.w_v)],
        "out": make(f"{prefix}.out", params.w_o),
    }


def collect(tensors, prefix, heads):
    """Pick one block's tensors out of a flat name -> Tensor map."""
    return {
        "q": [tensors[f"{prefix}.q{h}"] for h in range(heads)],
        "k": [tensors[f"{prefix}.k{h}"] for h in range(heads)],
        "v": [tensors[f"{prefix}.v{h}"] for h in range(heads)],
        "out": tensors[f"{prefix}.out"],
    }


def cosine_similarity(queries_raw: Tensor, keys_raw: Tensor) -> Tensor:
    """``N x M`` cosine matrix of raw rows; zero rows give zero entries."""
    global SIMILARITY_CALLS
    if queries_raw.shape[1] != keys_raw.shape[1]:
        raise DimensionError(
            f"cosine_similarity: sizes {queries_raw.shape} and {keys_raw.shape} differ in D"
        )
    SIMILARITY_CALLS += 1
    xn = nx.l2_normalize_rows(queries_raw)
    yn = nx.l2_normalize_rows(keys_raw)
    return nx.matmul(xn, nx.transpose(yn))


def sinusoidal_pe(n_positions, dim) -> np.ndarray:
    """Interleaved sine/cosine encoding: even columns sin, odd columns cos."""
    if dim % 2:
        raise ValueError(f"positional encoding needs an even size, got {dim}")
    pos = np.arange(n_positions, dtype=np.float64)[:, None]
    freq = np.exp(-np.log(10000.0) * np.arange(0, dim, 2, dtype=np.float64) / dim)
    pe = np.zeros((n_positions, dim))
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq)
    return pe


def attention(queries, keys, blk, similarity=None, scale=None):
    """Multi-head attention core shared by the cross and self attention blocks.

    Exactly one of ``similarity`` (elementwise logit weighting) or ``scale``
    (fixed multiplier) is normally given; with neither the logits are used raw.
    """
    heads = []
    for wq, wk, wv in zip(blk["q"], blk["k"], blk["v"]):
        q = nx.matmul(queries, wq)
        k = nx.matmul(keys, wk)
        v = nx.matmul(keys, wv)
        logits = nx.matmul(q, nx.transpose(k))
        if similarity is not None:
            logits = nx.elementwise_mul(logits, similarity)
        if scale is not None:
            logits = nx.scale(logits, scale)
        heads.append(nx.matmul(nx.softmax_rows(logits), v))
    return nx.matmul(nx.concat_cols(*heads), blk["out"])


def wca_forward(blk, queries_raw: Tensor, keys_raw: Tensor, pe, use_similarity=True):
    """Cross-modal attention output (``N x D``) for one block.

    ``blk`` holds the block tensors (see :func:`to_tensors`). With
    ``use_similarity=False`` the cosine weighting is replaced by the standard
    ``1/sqrt(D/H)`` divisor.
    """
    n, d = queries_raw.shape
    if keys_raw.shape[1] != d:
        raise DimensionError(f"wca_forward: queries {queries_raw.shape} vs keys {keys_raw.shape}")
    if blk["q"][0].shape[0] != d:
        raise DimensionError(f"wca_forward: block expects D={blk['q'][0].shape[0]}, inputs have {d}")
    if not isinstance(pe, Tensor):
        pe = queries_raw.graph.constant(pe)
    if pe.shape != (n, d):
        raise DimensionError(f"wca_forward: positional encoding {pe.shape} != {(n, d)}")
    if use_similarity:
        z = attention(queries_raw, keys_raw, blk, similarity=cosine_similarity(queries_raw, keys_raw))
    else:
        d_head = blk["q"][0].shape[1]
        z = attention(queries_raw, keys_raw, blk, scale=1.0 / np.sqrt(d_head))
    return nx.add(z, pe)


def apply(params: WcaParams, queries_raw, keys_raw, pe=None, use_similarity=True, dtype=np.float64):
    """Evaluate one block on plain arrays; ``pe`` defaults to the sinusoidal encoding."""
    g = Graph(dtype)
    q, k = g.constant(queries_raw), g.constant(keys_raw)
    if pe is None:
        pe = sinusoidal_pe(q.shape[0], q.shape[1])
    blk = to_tensors(g, params, trainable=False)
    return wca_forward(blk, q, k, pe, use_similarity).numpy()
