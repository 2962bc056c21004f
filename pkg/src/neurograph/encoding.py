"""Node feature synthesis for featureless brain graphs.

Rewired nodes carry no signal of their own, so each node gets a
positional fingerprint: eigenvectors of the symmetric normalized
Laplacian (structure), return probabilities of a weighted random walk
(local topology), and a one-hot of the layer's frequency band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graphs import BandLayer, FrequencyBand, MultiLayerGraph

EIG_ZERO_TOL = 1e-8


@dataclass(frozen=True)
class EncodingConfig:
    lap_dim: int = 8
    rw_steps: int = 8

    def __post_init__(self):
        if self.lap_dim < 1 or self.rw_steps < 1:
            raise ValueError("lap_dim and rw_steps must be >= 1")

    @property
    def feature_dim(self) -> int:
        return self.lap_dim + self.rw_steps + len(FrequencyBand)


def normalized_laplacian(layer: BandLayer) -> np.ndarray:
    """Symmetric normalized Laplacian, self-loops excluded.

    Rows and columns of zero-degree nodes are all zero (the normalization
    is undefined there), matching the common sparse-graph convention.
    """
    a = layer.adjacency(include_self_loops=False)
    deg = a.sum(axis=1)
    pos = deg > 0
    inv_sqrt = np.zeros_like(deg)
    inv_sqrt[pos] = 1.0 / np.sqrt(deg[pos])
    lap = -inv_sqrt[:, None] * a * inv_sqrt[None, :]
    lap[pos, pos] += 1.0
    return lap


def laplacian_eigens(layer: BandLayer) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and eigenvectors of the normalized Laplacian.

    Computed on the positive-degree subgraph and embedded back, so
    isolated nodes contribute zero rows rather than spurious eigenpairs.
    """
    a = layer.adjacency(include_self_loops=False)
    deg = a.sum(axis=1)
    pos = np.flatnonzero(deg > 0)
    n = layer.n_nodes
    if pos.size == 0:
        return np.zeros(0), np.zeros((n, 0))
    sub = a[np.ix_(pos, pos)]
    inv_sqrt = 1.0 / np.sqrt(deg[pos])
    lap = np.eye(pos.size) - inv_sqrt[:, None] * sub * inv_sqrt[None, :]
    vals, vecs = np.linalg.eigh(lap)
    full = np.zeros((n, pos.size))
    full[pos, :] = vecs
    return vals, full


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    for x in vec:
        if abs(x) > 1e-12:
            return vec if x > 0 else -vec
    return vec


def laplacian_pe(layer: BandLayer, dim: int) -> np.ndarray:
    """Per-node encoding from the ``dim`` smallest nonzero Laplacian eigenvalues.

    Each eigenvector is sign-fixed so its first nonzero component is
    positive; missing columns (graph too small or too disconnected) are
    zero-padded.  Zero-degree nodes get all-zero rows.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    vals, vecs = laplacian_eigens(layer)
    nonzero = np.flatnonzero(vals > EIG_ZERO_TOL)[:dim]
    out = np.zeros((layer.n_nodes, dim))
    for col, idx in enumerate(nonzero):
        out[:, col] = _fix_sign(vecs[:, idx])
    return out


def transition_matrix(layer: BandLayer) -> np.ndarray:
    """Row-stochastic weighted transition matrix, self-loops included."""
    a = layer.adjacency(include_self_loops=True)
    deg = a.sum(axis=1)
    if np.any(deg <= 0):
        node = int(np.flatnonzero(deg <= 0)[0])
        raise DataError(f"node {node} has zero weighted degree; walk undefined")
    return a / deg[:, None]


def rw_pe(layer: BandLayer, steps: int) -> np.ndarray:
    """Return probabilities (T^s)_vv for s = 1..steps of the weighted walk."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    t = transition_matrix(layer)
    out = np.empty((layer.n_nodes, steps))
    power = t
    for s in range(steps):
        if s > 0:
            power = power @ t
        out[:, s] = np.diag(power)
    return out


def band_one_hot(band: FrequencyBand) -> np.ndarray:
    vec = np.zeros(len(FrequencyBand))
    vec[band.position] = 1.0
    return vec


def assemble_features(graph: MultiLayerGraph, config: EncodingConfig = EncodingConfig()) -> MultiLayerGraph:
    """Attach per-node features: [laplacian PE | random-walk PE | band one-hot].

    Encodings are computed per layer independently, then placed at the
    layer-major global node positions.
    """
    n = graph.n_labels
    feats = np.zeros((graph.n_nodes, config.feature_dim))
    for li, layer in enumerate(graph.layers):
        lap = laplacian_pe(layer, config.lap_dim)
        walk = rw_pe(layer, config.rw_steps)
        one_hot = band_one_hot(layer.band)
        block = np.hstack([lap, walk, np.tile(one_hot, (n, 1))])
        feats[li * n : (li + 1) * n, :] = block
    return graph.with_features(feats)
