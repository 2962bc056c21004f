"""Core graph types for Brodmann-area brain networks.

A patient's EEG connectivity is represented as one weighted graph per
frequency band over 84 Brodmann areas.  Selected band graphs are stacked
into a multi-layer graph whose layers are joined by cross-layer edges
between nodes carrying the same Brodmann label.  All types here are
immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

from .errors import DataError, StructuralError

N_AREAS = 84

SYMMETRY_TOL = 1e-9

# Edge roles inside a multi-layer graph.
EDGE_INTRA = "intra"
EDGE_CROSS = "cross"
EDGE_SELF = "self"


class FrequencyBand(Enum):
    """EEG frequency bands, in canonical order (used for one-hot encodings)."""

    delta = (2.0, 4.0)
    theta = (4.0, 8.0)
    alpha1 = (8.0, 10.5)
    alpha2 = (10.5, 13.0)
    beta1 = (13.0, 20.0)

    @property
    def range_hz(self) -> tuple[float, float]:
        return self.value

    @property
    def position(self) -> int:
        """Index of this band in canonical order (delta=0 .. beta1=4)."""
        return _BAND_ORDER[self]


_BAND_ORDER = {band: i for i, band in enumerate(FrequencyBand)}

DEFAULT_MODEL_BANDS = (FrequencyBand.alpha1, FrequencyBand.alpha2, FrequencyBand.beta1)


@dataclass(frozen=True)
class BrodmannArea:
    """A cortical parcel: contiguous index, label like ``BA17-L``, centroid in mm."""

    index: int
    label: str
    centroid: tuple[float, float, float]


def validate_areas(areas: Sequence[BrodmannArea]) -> None:
    """Check that area indices are unique, contiguous from 0, labels unique."""
    indices = [a.index for a in areas]
    if sorted(indices) != list(range(len(areas))):
        raise StructuralError("area indices must be unique and contiguous from 0")
    labels = {a.label for a in areas}
    if len(labels) != len(areas):
        raise StructuralError("area labels must be unique")
    for a in areas:
        if not all(np.isfinite(c) for c in a.centroid):
            raise DataError(f"non-finite centroid for area {a.label}")


class ConnectivityMatrix:
    """Symmetric nonnegative coherence weights for one patient and one band.

    The matrix is validated on construction: square, finite, entries in
    [0, 1], symmetric within ``SYMMETRY_TOL``.  The diagonal is zeroed on
    ingest and the array is frozen (not writeable).
    """

    __slots__ = ("band", "weights")

    def __init__(self, band: FrequencyBand, weights: np.ndarray):
        w = np.array(weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise DataError(f"connectivity matrix must be square, got shape {w.shape}")
        if not np.all(np.isfinite(w)):
            bad = np.argwhere(~np.isfinite(w))[0]
            raise DataError(f"non-finite weight at cell ({bad[0]}, {bad[1]})")
        if np.any(w < 0):
            bad = np.argwhere(w < 0)[0]
            raise DataError(f"negative weight at cell ({bad[0]}, {bad[1]})")
        if np.any(w > 1):
            bad = np.argwhere(w > 1)[0]
            raise DataError(f"weight above 1 at cell ({bad[0]}, {bad[1]})")
        if np.max(np.abs(w - w.T), initial=0.0) > SYMMETRY_TOL:
            raise DataError(f"matrix asymmetric beyond {SYMMETRY_TOL}")
        np.fill_diagonal(w, 0.0)
        w.setflags(write=False)
        self.band = band
        self.weights = w

    @property
    def n_nodes(self) -> int:
        return self.weights.shape[0]

    def upper_triangle_values(self) -> np.ndarray:
        """Off-diagonal upper-triangle entries, the population quantiles act on."""
        iu = np.triu_indices(self.n_nodes, k=1)
        return self.weights[iu]


class BandLayer:
    """One band's graph over local node ids ``0..n-1``.

    ``edges`` maps undirected pairs ``(u, v)`` with ``u <= v`` to weights;
    a pair with ``u == v`` is a self-loop.  Immutable after construction.
    """

    __slots__ = ("band", "n_nodes", "edges")

    def __init__(self, band: FrequencyBand, n_nodes: int, edges: dict[tuple[int, int], float]):
        if n_nodes < 1:
            raise ValueError("layer needs at least one node")
        canon: dict[tuple[int, int], float] = {}
        for (u, v), w in edges.items():
            u, v = int(u), int(v)
            if not (0 <= u < n_nodes and 0 <= v < n_nodes):
                raise StructuralError(f"edge ({u}, {v}) outside node range 0..{n_nodes - 1}")
            key = (u, v) if u <= v else (v, u)
            if key in canon and canon[key] != w:
                raise StructuralError(f"conflicting weights for edge {key}")
            canon[key] = float(w)
        self.band = band
        self.n_nodes = n_nodes
        self.edges = canon

    def edge_list(self) -> list[tuple[int, int, float]]:
        """Edges sorted by (u, v); deterministic regardless of insert order."""
        return [(u, v, self.edges[(u, v)]) for (u, v) in sorted(self.edges)]

    def has_all_self_loops(self) -> bool:
        return all((v, v) in self.edges for v in range(self.n_nodes))

    def adjacency(self, include_self_loops: bool = False) -> np.ndarray:
        """Dense symmetric weight matrix for this layer."""
        a = np.zeros((self.n_nodes, self.n_nodes))
        for (u, v), w in self.edges.items():
            if u == v:
                if include_self_loops:
                    a[u, u] = w
            else:
                a[u, v] = w
                a[v, u] = w
        return a

    def degrees(self) -> np.ndarray:
        """Number of distinct neighbors per node, self-loops excluded."""
        d = np.zeros(self.n_nodes, dtype=int)
        for (u, v) in self.edges:
            if u != v:
                d[u] += 1
                d[v] += 1
        return d


def default_areas() -> list[BrodmannArea]:
    """Load the packaged Brodmann centroid table (84 areas, both hemispheres).

    The table is an explicit, versioned input: any consistent centroid
    table with the same schema may be swapped in by callers that load
    their own areas.
    """
    from importlib import resources

    text = resources.files("neurograph.data").joinpath("brodmann_centroids.csv").read_text()
    areas = []
    for line in text.splitlines():
        if not line or line.startswith("#") or line.startswith("index,"):
            continue
        idx, label, x, y, z = line.split(",")
        areas.append(BrodmannArea(int(idx), label, (float(x), float(y), float(z))))
    validate_areas(areas)
    if len(areas) != N_AREAS:
        raise DataError(f"centroid table has {len(areas)} rows, expected {N_AREAS}")
    return areas


def global_id(label_index: int, layer_index: int, n_labels: int = N_AREAS) -> int:
    """Map (area label index, layer index) to a layer-major global node id."""
    if not 0 <= label_index < n_labels:
        raise ValueError(f"label index {label_index} outside 0..{n_labels - 1}")
    if layer_index < 0:
        raise ValueError(f"layer index {layer_index} negative")
    return layer_index * n_labels + label_index


@dataclass(frozen=True)
class MultiLayerGraph:
    """Band layers stacked with same-label cross-layer edges.

    Global node ids are layer-major: node ``i`` of layer ``l`` gets id
    ``l * n_labels + i``.  ``cross_edges`` holds one undirected pair per
    label per unordered layer pair, all with implicit weight 1.0.
    ``node_features`` stays ``None`` until encodings are assembled.
    """

    layers: tuple[BandLayer, ...]
    labels: tuple[str, ...]
    cross_edges: frozenset[tuple[int, int]]
    node_features: np.ndarray | None = None

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def n_nodes(self) -> int:
        return self.n_labels * self.n_layers

    def node_band(self, node: int) -> FrequencyBand:
        return self.layers[node // self.n_labels].band

    def iter_edges(self) -> Iterator[tuple[int, int, float, str]]:
        """Yield (u, v, weight, type) over all undirected edges, u <= v, sorted.

        Intra-layer edges keep their coherence weights, self-loops and
        cross-layer edges carry weight 1.0.
        """
        n = self.n_labels
        out: list[tuple[int, int, float, str]] = []
        for li, layer in enumerate(self.layers):
            for (u, v, w) in layer.edge_list():
                kind = EDGE_SELF if u == v else EDGE_INTRA
                out.append((li * n + u, li * n + v, w, kind))
        for (u, v) in self.cross_edges:
            out.append((u, v, 1.0, EDGE_CROSS))
        out.sort(key=lambda e: (e[0], e[1], e[3]))
        return iter(out)

    def with_features(self, features: np.ndarray) -> "MultiLayerGraph":
        feats = np.array(features, dtype=float)
        if feats.shape[0] != self.n_nodes:
            raise StructuralError(
                f"feature rows {feats.shape[0]} != node count {self.n_nodes}"
            )
        feats.setflags(write=False)
        return MultiLayerGraph(self.layers, self.labels, self.cross_edges, feats)

    def to_json_dict(self) -> dict:
        """Serializable form: nodes ascending by id, deterministic key order."""
        nodes = []
        for node in range(self.n_nodes):
            layer = node // self.n_labels
            entry = {
                "id": node,
                "label": self.labels[node % self.n_labels],
                "layer": layer,
                "band": self.layers[layer].band.name,
            }
            if self.node_features is not None:
                entry["features"] = [float(x) for x in self.node_features[node]]
            nodes.append(entry)
        edges = [
            {"u": u, "v": v, "weight": w, "type": kind}
            for (u, v, w, kind) in self.iter_edges()
        ]
        return {"nodes": nodes, "edges": edges}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=1)

    @staticmethod
    def from_json_dict(obj: dict) -> "MultiLayerGraph":
        nodes = obj["nodes"]
        if not nodes:
            raise StructuralError("graph JSON has no nodes")
        n_layers = max(nd["layer"] for nd in nodes) + 1
        n_labels = len(nodes) // n_layers
        if n_labels * n_layers != len(nodes):
            raise StructuralError("node count is not a multiple of the layer count")
        labels = tuple(nd["label"] for nd in nodes[:n_labels])
        bands = [None] * n_layers
        feats = [] if "features" in nodes[0] else None
        for pos, nd in enumerate(nodes):
            if nd["id"] != pos:
                raise StructuralError("graph JSON node ids must be ascending from 0")
            bands[nd["layer"]] = FrequencyBand[nd["band"]]
            if feats is not None:
                feats.append(nd["features"])
        layer_edges: list[dict[tuple[int, int], float]] = [{} for _ in range(n_layers)]
        cross = set()
        for e in obj["edges"]:
            u, v, w, kind = e["u"], e["v"], e["weight"], e["type"]
            if kind == EDGE_CROSS:
                cross.add((min(u, v), max(u, v)))
            else:
                li = u // n_labels
                if v // n_labels != li:
                    raise StructuralError(f"{kind} edge ({u}, {v}) spans layers")
                layer_edges[li][(u - li * n_labels, v - li * n_labels)] = w
        layers = tuple(
            BandLayer(bands[li], n_labels, layer_edges[li]) for li in range(n_layers)
        )
        graph = MultiLayerGraph(layers, labels, frozenset(cross))
        if feats is not None:
            graph = graph.with_features(np.array(feats))
        return graph

    @staticmethod
    def from_json(text: str) -> "MultiLayerGraph":
        return MultiLayerGraph.from_json_dict(json.loads(text))


def build_multilayer(
    layers: Sequence[BandLayer], labels: Sequence[str] | None = None
) -> MultiLayerGraph:
    """Stack band layers into a multi-layer graph with same-label cross edges.

    Every unordered pair of layers contributes one cross edge per label,
    so the result has ``n * L`` nodes and ``n * L * (L - 1) / 2`` cross
    edges.  Intra-layer edges are preserved verbatim.

    Parameters
    ----------
    layers : band layers sharing one node/label set, in model order.
    labels : per-node label strings; defaults to ``n0..n{n-1}``.
    """
    if not layers:
        raise ValueError("need at least one layer")
    n = layers[0].n_nodes
    for layer in layers[1:]:
        if layer.n_nodes != n:
            raise StructuralError(
                f"layers disagree on node count: {layer.n_nodes} != {n}"
            )
    if labels is None:
        labels = tuple(f"n{i}" for i in range(n))
    else:
        labels = tuple(labels)
        if len(labels) != n:
            raise StructuralError(f"{len(labels)} labels for {n} nodes per layer")
    cross = set()
    for li in range(len(layers)):
        for lj in range(li + 1, len(layers)):
            for i in range(n):
                cross.add((global_id(i, li, n), global_id(i, lj, n)))
    return MultiLayerGraph(tuple(layers), labels, frozenset(cross))
