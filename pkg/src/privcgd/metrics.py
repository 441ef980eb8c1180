"""Skeleton-level structure recovery metrics.

Edges are compared as unordered pairs. A directed estimate (for example
the thresholded support of a weight matrix) is scored on its skeleton.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .graph import EdgeList, GraphError

SCORING = "skeleton (undirected pairs)"


class MetricError(GraphError):
    pass


def _aligned_pairs(estimated: EdgeList, truth: EdgeList):
    if sorted(estimated.names) != sorted(truth.names):
        missing = sorted(set(truth.names) ^ set(estimated.names))
        raise MetricError(f"node names differ between estimate and truth: {missing}")
    # map estimated indices onto the truth's name order
    index = {name: k for k, name in enumerate(truth.names)}
    est = {frozenset((index[estimated.names[a]], index[estimated.names[b]])) for a, b in estimated.pairs}
    ref = {frozenset(p) for p in truth.pairs}
    return est, ref


def f1_score(estimated: EdgeList, truth: EdgeList) -> Tuple[float, float, float]:
    """Precision, recall and F1 of the estimated skeleton.

    An empty estimate has precision 0. Empty estimate against empty truth
    scores (1, 1, 1).
    """
    est, ref = _aligned_pairs(estimated, truth)
    if not est and not ref:
        return 1.0, 1.0, 1.0
    hit = len(est & ref)
    precision = hit / len(est) if est else 0.0
    recall = hit / len(ref) if ref else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def edges_from_weights(W: np.ndarray, names) -> EdgeList:
    """Directed support of ``W`` (``i -> j`` when ``W[i, j] != 0``)."""
    rows, cols = np.nonzero(np.asarray(W))
    return EdgeList(list(names), [(int(i), int(j)) for i, j in zip(rows, cols) if i != j])
