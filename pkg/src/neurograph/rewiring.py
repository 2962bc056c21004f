"""Sparsification of fully connected band graphs.

Each band graph starts out complete (every area pair has a coherence
value).  Rewiring keeps a structural backbone (mutual k-nearest-centroid
pairs), a functional backbone (pairs above a high coherence quantile),
and a self-loop per node.  The union typically retains a few percent of
the 3486 possible edges on 84 nodes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError
from .graphs import (
    DEFAULT_MODEL_BANDS,
    BandLayer,
    BrodmannArea,
    ConnectivityMatrix,
    FrequencyBand,
    MultiLayerGraph,
    build_multilayer,
)

SELF_LOOP_WEIGHT = 1.0


@dataclass(frozen=True)
class RewireConfig:
    k: int = 3
    quantile: float = 0.99
    bands_kept: tuple[FrequencyBand, ...] = DEFAULT_MODEL_BANDS

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if not 0.0 <= self.quantile <= 1.0:
            raise ValueError("quantile must be in [0, 1]")
        if not self.bands_kept:
            raise ValueError("bands_kept must be nonempty")


def structural_edges(areas: Sequence[BrodmannArea], k: int) -> set[tuple[int, int]]:
    """Mutual-union k-nearest-neighbor edges on area centroids.

    An undirected pair (u, v) is kept when u is among the k closest
    nodes to v or vice versa (Euclidean distance; ties at the k-th
    distance broken toward the lower area index).
    """
    n = len(areas)
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the node count {n}")
    if k == 0:
        return set()
    coords = np.array([a.centroid for a in areas])
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    edges: set[tuple[int, int]] = set()
    for v in range(n):
        order = sorted((u for u in range(n) if u != v), key=lambda u: (dist[v, u], u))
        for u in order[:k]:
            edges.add((min(u, v), max(u, v)))
    return edges


def interp_quantile(values: np.ndarray, q: float) -> float:
    """Empirical quantile with linear interpolation between order statistics."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("quantile of empty set")
    pos = q * (v.size - 1)
    lo = int(np.floor(pos))
    gamma = pos - lo
    if gamma == 0.0 or lo + 1 >= v.size:
        return float(v[lo])
    return float(v[lo] + gamma * (v[lo + 1] - v[lo]))


def functional_edges(matrix: ConnectivityMatrix, quantile: float) -> set[tuple[int, int]]:
    """Edges whose coherence is at or above the empirical quantile threshold."""
    threshold = interp_quantile(matrix.upper_triangle_values(), quantile)
    iu, iv = np.triu_indices(matrix.n_nodes, k=1)
    keep = matrix.weights[iu, iv] >= threshold
    return {(int(u), int(v)) for u, v in zip(iu[keep], iv[keep])}


def rewire_layer(
    matrix: ConnectivityMatrix,
    areas: Sequence[BrodmannArea],
    config: RewireConfig = RewireConfig(),
) -> BandLayer:
    """Sparsify one band: structural union functional edges plus self-loops.

    Every retained pair keeps its coherence weight from the complete
    matrix (structural-only edges included); self-loops get weight 1.0.
    """
    if len(areas) != matrix.n_nodes:
        raise DataError(
            f"{len(areas)} areas for a {matrix.n_nodes}-node matrix"
        )
    pairs = structural_edges(areas, config.k) | functional_edges(matrix, config.quantile)
    edges = {(u, v): float(matrix.weights[u, v]) for (u, v) in pairs}
    for v in range(matrix.n_nodes):
        edges[(v, v)] = SELF_LOOP_WEIGHT
    return BandLayer(matrix.band, matrix.n_nodes, edges)


def retention_fraction(layer: BandLayer) -> float:
    """Retained non-self-loop edges as a fraction of all possible pairs."""
    n = layer.n_nodes
    kept = sum(1 for (u, v) in layer.edges if u != v)
    return kept / (n * (n - 1) / 2)


def rewire_patient(record, areas: Sequence[BrodmannArea],
                   config: RewireConfig = RewireConfig()) -> MultiLayerGraph:
    """Rewire each kept band independently and stack into a multi-layer graph."""
    layers = []
    for band in config.bands_kept:
        if band not in record.matrices:
            raise DataError(f"patient {record.patient_id}: band {band.name} missing")
        layers.append(rewire_layer(record.matrices[band], areas, config))
    return build_multilayer(layers, labels=[a.label for a in areas])
