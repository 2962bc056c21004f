"""Attention-based explanation next to classical small-world baselines.

A trained model's final attention layer is projected back onto the 84
Brodmann areas: one directed attention graph per band (edge u -> v
weighted by the coefficient the target v assigns to source u), plus a
band-max combined graph.  Classical per-node and per-edge metrics
(weighted clustering on the coherence layers, edge betweenness) sit
alongside for comparison.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import DataError, NumericError, StructuralError
from .graphs import EDGE_CROSS, EDGE_INTRA, EDGE_SELF, BandLayer, FrequencyBand, MultiLayerGraph
from .model import EDGE_TYPE_INDEX, CompiledGraph, GatModel


@dataclass(frozen=True)
class AttentionGraph:
    """Directed attention weights over Brodmann nodes for one band.

    ``edges[(u, v)]`` is the head-averaged coefficient that target v
    assigned to source u; self-loops are kept out (reported separately
    by :class:`AttentionReport`).
    """

    band: FrequencyBand | None
    n_nodes: int
    labels: tuple[str, ...]
    edges: dict[tuple[int, int], float]

    def matrix(self) -> np.ndarray:
        out = np.zeros((self.n_nodes, self.n_nodes))
        for (u, v), w in self.edges.items():
            out[u, v] = w
        return out


@dataclass(frozen=True)
class AttentionReport:
    """Per-band attention graphs plus the cross-layer and self-loop shares."""

    bands: dict[FrequencyBand, AttentionGraph]
    cross_edges: dict[tuple[int, int], float]  # directed, global node ids
    self_loops: dict[int, float]               # global node id -> coefficient
    layer_index: int
    n_heads: int


def extract_attention(model: GatModel, compiled: CompiledGraph,
                      graph: MultiLayerGraph, layer: int = -1) -> AttentionReport:
    """Project one graph's attention coefficients back onto Brodmann pairs.

    Coefficients come from the requested attention layer (default: the
    final one, closest to the prediction), averaged over heads.
    """
    if compiled.n_graphs != 1:
        raise StructuralError("attention extraction expects a single graph, not a batch")
    for name, t in model.params.items():
        if not np.all(np.isfinite(t.data)):
            raise NumericError(f"parameter {name} is not finite; model unusable")
    _, records = model.forward(compiled)
    record = records[layer]
    mean_alpha = record.head_mean()
    n = graph.n_labels
    band_edges: dict[FrequencyBand, dict[tuple[int, int], float]] = {
        lyr.band: {} for lyr in graph.layers
    }
    cross: dict[tuple[int, int], float] = {}
    self_loops: dict[int, float] = {}
    intra, cross_code, self_code = (
        EDGE_TYPE_INDEX[EDGE_INTRA], EDGE_TYPE_INDEX[EDGE_CROSS], EDGE_TYPE_INDEX[EDGE_SELF],
    )
    for src, dst, code, value in zip(record.src, record.dst, record.edge_type, mean_alpha):
        if code == self_code:
            self_loops[int(src)] = float(value)
        elif code == cross_code:
            cross[(int(src), int(dst))] = float(value)
        else:
            layer_idx = int(dst) // n
            band = graph.layers[layer_idx].band
            band_edges[band][(int(src) % n, int(dst) % n)] = float(value)
    bands = {
        band: AttentionGraph(band, n, graph.labels, edges)
        for band, edges in band_edges.items()
    }
    return AttentionReport(bands, cross, self_loops, layer, record.alpha.shape[1])


def combine_bands(graphs: Sequence[AttentionGraph]) -> AttentionGraph:
    """Per directed pair, the maximum coefficient across bands.

    Pairs absent from every band stay absent; no zeros are manufactured.
    """
    if not graphs:
        raise ValueError("need at least one attention graph")
    first = graphs[0]
    for g in graphs[1:]:
        if g.n_nodes != first.n_nodes or g.labels != first.labels:
            raise StructuralError("attention graphs disagree on the node set")
    combined: dict[tuple[int, int], float] = {}
    for g in graphs:
        for pair, value in g.edges.items():
            if pair not in combined or value > combined[pair]:
                combined[pair] = value
    return AttentionGraph(None, first.n_nodes, first.labels, combined)


def weighted_in_degree(att: AttentionGraph) -> np.ndarray:
    """Sum of incoming attention per node, self-loops excluded."""
    out = np.zeros(att.n_nodes)
    for (u, v), w in att.edges.items():
        if u != v:
            out[v] += w
    return out


def weighted_clustering(layer: BandLayer) -> np.ndarray:
    """Weighted clustering coefficient per node (geometric-mean form).

    Weights are normalized by the graph maximum; each node's triangle
    intensity sum (cube roots of the three normalized weights) is divided
    by k(k-1).  Nodes with fewer than two neighbors get 0.
    """
    a = layer.adjacency(include_self_loops=False)
    top = a.max()
    if top <= 0:
        return np.zeros(layer.n_nodes)
    cuberoot = np.cbrt(a / top)
    paths = np.diag(cuberoot @ cuberoot @ cuberoot)
    k = (a > 0).sum(axis=1)
    out = np.zeros(layer.n_nodes)
    mask = k >= 2
    out[mask] = paths[mask] / (k[mask] * (k[mask] - 1.0))
    return out


# ---------------------------------------------------------------------------
# Edge betweenness (single-source accumulation over all sources)
# ---------------------------------------------------------------------------

def _neighbors(layer: BandLayer) -> dict[int, list[tuple[int, float]]]:
    adj: dict[int, list[tuple[int, float]]] = {v: [] for v in range(layer.n_nodes)}
    for (u, v), w in sorted(layer.edges.items()):
        if u != v:
            adj[u].append((v, w))
            adj[v].append((u, w))
    return adj


def _sssp_unweighted(adj, source, n):
    dist = [-1] * n
    sigma = [0] * n
    preds: list[list[int]] = [[] for _ in range(n)]
    dist[source] = 0
    sigma[source] = 1
    order = [source]
    head = 0
    while head < len(order):
        v = order[head]
        head += 1
        for (u, _w) in adj[v]:
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                order.append(u)
            if dist[u] == dist[v] + 1:
                sigma[u] += sigma[v]
                preds[u].append(v)
    return sigma, preds, order


def _sssp_dijkstra(adj, source, n, tol=1e-12):
    dist = [np.inf] * n
    sigma = [0] * n
    preds: list[list[int]] = [[] for _ in range(n)]
    dist[source] = 0.0
    sigma[source] = 1
    done = [False] * n
    order = []
    heap = [(0.0, source)]
    while heap:
        d, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        order.append(v)
        for (u, w) in adj[v]:
            length = 1.0 / w
            nd = d + length
            if nd < dist[u] - tol:
                dist[u] = nd
                sigma[u] = sigma[v]
                preds[u] = [v]
                heapq.heappush(heap, (nd, u))
            elif not done[u] and abs(nd - dist[u]) <= tol:
                sigma[u] += sigma[v]
                preds[u].append(v)
    return sigma, preds, order


def edge_betweenness(layer: BandLayer, weighted: bool = False) -> dict[tuple[int, int], float]:
    """Shortest-path betweenness per undirected edge, ties split fractionally.

    Counts are over unordered node pairs; node pairs in different
    components contribute nothing.  Weighted mode uses length = 1/weight
    (stronger coherence = shorter path).  Self-loops never lie on a
    shortest path and are excluded.  The unweighted path accumulates in
    exact rational arithmetic, so results match path-counting oracles
    exactly.
    """
    adj = _neighbors(layer)
    if weighted:
        for (u, v), w in layer.edges.items():
            if u != v and w <= 0:
                raise DataError(f"edge ({u}, {v}) has non-positive weight {w}")
    n = layer.n_nodes
    zero = Fraction(0) if not weighted else 0.0
    totals = {
        (u, v): zero for (u, v) in layer.edges if u != v
    }
    for source in range(n):
        if weighted:
            sigma, preds, order = _sssp_dijkstra(adj, source, n)
            delta = [0.0] * n
        else:
            sigma, preds, order = _sssp_unweighted(adj, source, n)
            delta = [Fraction(0)] * n
        for w_node in reversed(order):
            for v in preds[w_node]:
                if weighted:
                    credit = sigma[v] / sigma[w_node] * (1.0 + delta[w_node])
                else:
                    credit = Fraction(sigma[v], sigma[w_node]) * (1 + delta[w_node])
                key = (v, w_node) if v <= w_node else (w_node, v)
                totals[key] += credit
                delta[v] += credit
    return {key: float(value / 2) for key, value in totals.items()}


# ---------------------------------------------------------------------------
# Per-band centrality tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandCentrality:
    band_name: str
    labels: tuple[str, ...]
    attention_in_degree: np.ndarray
    coherence_clustering: np.ndarray | None
    edge_attention: dict[tuple[int, int], float]
    edge_betweenness: dict[tuple[int, int], float] | None


def centrality_report(report: AttentionReport, graph: MultiLayerGraph,
                      weighted_paths: bool = True) -> list[BandCentrality]:
    """Attention centralities per band plus coherence-layer baselines,
    ending with the band-max combined graph."""
    out = []
    for lyr in graph.layers:
        att = report.bands[lyr.band]
        out.append(
            BandCentrality(
                band_name=lyr.band.name,
                labels=graph.labels,
                attention_in_degree=weighted_in_degree(att),
                coherence_clustering=weighted_clustering(lyr),
                edge_attention=dict(att.edges),
                edge_betweenness=edge_betweenness(lyr, weighted=weighted_paths),
            )
        )
    combined = combine_bands([report.bands[lyr.band] for lyr in graph.layers])
    out.append(
        BandCentrality(
            band_name="combined",
            labels=graph.labels,
            attention_in_degree=weighted_in_degree(combined),
            coherence_clustering=None,
            edge_attention=dict(combined.edges),
            edge_betweenness=None,
        )
    )
    return out
