"""Turning frame scores into summaries.

Two selectors: top-fraction frames, and an exact 0/1 knapsack over
fragments whose values are mean frame scores and weights are frame counts.
"""
from __future__ import annotations

import math

import numpy as np

DEFAULT_FRACTION = 0.15


def summary_capacity(n_frames, fraction=DEFAULT_FRACTION):
    """``floor(fraction * n_frames)``, at least 1."""
    if n_frames < 1:
        raise ValueError("n_frames must be >= 1")
    # the epsilon guards products such as 0.15 * 60 landing just below an integer
    return max(1, math.floor(fraction * n_frames + 1e-9))


def top_fraction_select(scores, fraction=DEFAULT_FRACTION):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size == 0:
        raise ValueError("cannot select from empty scores")
    if not 0 < fraction <= 1:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    k = summary_capacity(scores.size, fraction)
    # stable sort on -score keeps the lower index first among ties
    order = np.argsort(-scores, kind="stable")
    mask = np.zeros(scores.size, dtype=np.int8)
    mask[order[:k]] = 1
    return mask


def fragment_scores(scores, fragments):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    return np.array([scores[a:b + 1].mean() for a, b in fragments])


def knapsack_indices(values, weights, capacity):
    """Indices of an optimal 0/1 knapsack selection.

    Standard table DP; the backtrack excludes item ``i`` whenever doing so
    keeps the optimum, so ties favour dropping higher-index items.
    """
    values = [float(v) for v in values]
    weights = [int(w) for w in weights]
    if any(w <= 0 for w in weights):
        raise ValueError("knapsack weights must be positive integers")
    if capacity < 0:
        raise ValueError("capacity must be >= 0")
    n = len(values)
    table = np.zeros((n + 1, capacity + 1))
    for i in range(1, n + 1):
        w, v = weights[i - 1], values[i - 1]
        row = table[i - 1].copy()
        if w <= capacity:
            take = table[i - 1, : capacity + 1 - w] + v
            row[w:] = np.maximum(row[w:], take)
        table[i] = row
    chosen = []
    c = capacity
    for i in range(n, 0, -1):
        if table[i, c] != table[i - 1, c]:
            chosen.append(i - 1)
            c -= weights[i - 1]
    return sorted(chosen)


def knapsack_select(values, weights, capacity, fragments=None):
    """Frame mask of the knapsack optimum.

    ``fragments`` defaults to consecutive runs of ``weights`` frames. If
    capacity is positive but no fragment fits, the best of the shortest
    fragments is taken instead.
    """
    weights = [int(w) for w in weights]
    if fragments is None:
        ends = np.cumsum(weights)
        fragments = [(int(e - w), int(e - 1)) for e, w in zip(ends, weights)]
    n_frames = fragments[-1][1] + 1 if fragments else 0
    mask = np.zeros(n_frames, dtype=np.int8)
    if capacity <= 0 or not weights:
        return mask
    if min(weights) > capacity:
        shortest = min(weights)
        cands = [i for i, w in enumerate(weights) if w == shortest]
        chosen = [max(cands, key=lambda i: (values[i], -i))]
    else:
        chosen = knapsack_indices(values, weights, capacity)
    for i in chosen:
        a, b = fragments[i]
        mask[a:b + 1] = 1
    return mask


def knapsack_summary(scores, fragments, fraction=DEFAULT_FRACTION):
    """Knapsack-protocol summary of one video at ``fraction`` of its length."""
    values = fragment_scores(scores, fragments)
    weights = [b - a + 1 for a, b in fragments]
    capacity = summary_capacity(len(np.ravel(scores)), fraction)
    return knapsack_select(values, weights, capacity, fragments)
