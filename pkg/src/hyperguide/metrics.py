"""Region metrics: separation (IoU) and border closeness (adjacency).

A "region" is operationalized as the top-quantile mask of a noun group's
mean attention map; nothing in the losses depends on these metrics, they
only quantify what a guidance run did.
"""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .hypergraph import SemanticHypergraph
from .maps import AttentionMap, SmoothingKernel, cosine_similarity, smooth


def _as_values(m) -> np.ndarray:
    return m.values if isinstance(m, AttentionMap) else np.asarray(m, dtype=np.float64)


def vertex_map(
    graph: SemanticHypergraph, maps: Mapping[int, "AttentionMap | np.ndarray"], vertex_id: str
) -> AttentionMap:
    """Arithmetic mean of the group's member token maps."""
    v = graph.vertex(vertex_id)
    stack = [_as_values(maps[t]) for t in v.token_indices]
    return AttentionMap(np.mean(stack, axis=0))


def binarize(amap: "AttentionMap | np.ndarray", quantile: float) -> np.ndarray:
    """Boolean mask of cells at or above the nearest-rank quantile.

    The quantile is taken over the strictly positive cells only, so a
    lone peak in a sea of zeros binarizes to just the peak and the mask
    is never empty.
    """
    if not (0.0 < quantile < 1.0):
        raise ValueError(f"quantile must be in (0, 1), got {quantile}")
    values = _as_values(amap)
    positive = np.sort(values[values > 0].ravel())
    if positive.size == 0:
        raise ValueError("map has no positive cells to rank")
    rank = math.ceil(quantile * positive.size)
    threshold = positive[rank - 1]
    return values >= threshold


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two boolean masks; 0 when both empty."""
    if a.shape != b.shape:
        raise ValueError(f"mask shape mismatch: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 0.0
    return float(np.logical_and(a, b).sum() / union)


def vertex_iou(
    graph: SemanticHypergraph,
    maps: Mapping[int, "AttentionMap | np.ndarray"],
    u: str,
    v: str,
    quantile: float = 0.8,
) -> float:
    """IoU of two noun groups' binarized regions."""
    return iou(
        binarize(vertex_map(graph, maps, u), quantile),
        binarize(vertex_map(graph, maps, v), quantile),
    )


def adjacency_score(
    graph: SemanticHypergraph,
    maps: Mapping[int, "AttentionMap | np.ndarray"],
    u: str,
    v: str,
    big_kernel: SmoothingKernel,
) -> float:
    """Cosine similarity of the big-kernel-smoothed group maps.

    Smoothing bleeds each region over its border, so two regions that
    abut score high even when their unsmoothed supports are disjoint,
    while far-apart regions stay near zero.
    """
    if u == v:
        raise ValueError("adjacency needs two distinct vertices")
    mu = smooth(vertex_map(graph, maps, u), big_kernel)
    mv = smooth(vertex_map(graph, maps, v), big_kernel)
    return cosine_similarity(mu, mv)
