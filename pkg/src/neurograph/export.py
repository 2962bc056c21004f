"""Graph serialization to JSON, GraphML, and DOT with deterministic bytes.

Every writer emits attributes in a fixed order and formats floats with
``repr`` (shortest round-trip form), so identical inputs give identical
files.  DOT output carries pen-width and gray-level hints proportional
to edge weight for quick rendering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .explain import AttentionGraph, BandCentrality
from .graphs import MultiLayerGraph

FORMATS = ("json", "graphml", "dot")


@dataclass(frozen=True)
class ExportGraph:
    """Format-neutral graph: nodes and edges with flat scalar attributes."""

    directed: bool
    nodes: list[tuple[int, dict]]
    edges: list[tuple[int, int, dict]] = field(default_factory=list)
    name: str = "G"


def from_multilayer(graph: MultiLayerGraph) -> ExportGraph:
    nodes = []
    for node in range(graph.n_nodes):
        layer = node // graph.n_labels
        nodes.append((node, {
            "label": graph.labels[node % graph.n_labels],
            "layer": layer,
            "band": graph.layers[layer].band.name,
        }))
    edges = [
        (u, v, {"weight": w, "type": kind}) for (u, v, w, kind) in graph.iter_edges()
    ]
    return ExportGraph(directed=False, nodes=nodes, edges=edges, name="multilayer")


def from_attention(att: AttentionGraph,
                   in_degree: np.ndarray | None = None,
                   clustering: np.ndarray | None = None,
                   betweenness: dict | None = None) -> ExportGraph:
    """Attention graph with optional node/edge metric annotations."""
    nodes = []
    for node in range(att.n_nodes):
        attrs: dict = {"label": att.labels[node]}
        if in_degree is not None:
            attrs["in_degree"] = float(in_degree[node])
        if clustering is not None:
            attrs["clustering"] = float(clustering[node])
        nodes.append((node, attrs))
    edges = []
    for (u, v) in sorted(att.edges):
        attrs = {"weight": att.edges[(u, v)], "type": "attention"}
        if betweenness is not None:
            key = (min(u, v), max(u, v))
            if key in betweenness:
                attrs["betweenness"] = float(betweenness[key])
        edges.append((u, v, attrs))
    name = att.band.name if att.band is not None else "combined"
    return ExportGraph(directed=True, nodes=nodes, edges=edges, name=name)


def from_band_centrality(bc: BandCentrality) -> ExportGraph:
    att = AttentionGraph(None, len(bc.labels), bc.labels, bc.edge_attention)
    graph = from_attention(att, bc.attention_in_degree, bc.coherence_clustering,
                           bc.edge_betweenness)
    return ExportGraph(graph.directed, graph.nodes, graph.edges, name=bc.band_name)


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def to_json_str(graph: ExportGraph) -> str:
    obj = {
        "directed": graph.directed,
        "name": graph.name,
        "nodes": [{"id": nid, **attrs} for nid, attrs in graph.nodes],
        "edges": [{"u": u, "v": v, **attrs} for (u, v, attrs) in graph.edges],
    }
    return json.dumps(obj, indent=1) + "\n"


def from_json_str(text: str) -> ExportGraph:
    obj = json.loads(text)
    nodes = [(nd.pop("id"), nd) for nd in obj["nodes"]]
    edges = [(e.pop("u"), e.pop("v"), e) for e in obj["edges"]]
    return ExportGraph(obj["directed"], nodes, edges, obj.get("name", "G"))


_GRAPHML_TYPES = {bool: "boolean", int: "long", float: "double", str: "string"}


def _graphml_type(value) -> str:
    for py_type, name in _GRAPHML_TYPES.items():
        if isinstance(value, py_type):
            return name
    if isinstance(value, (np.integer,)):
        return "long"
    if isinstance(value, (np.floating,)):
        return "double"
    return "string"


def to_graphml_str(graph: ExportGraph) -> str:
    node_attrs: dict[str, str] = {}
    for _, attrs in graph.nodes:
        for k, v in attrs.items():
            node_attrs.setdefault(k, _graphml_type(v))
    edge_attrs: dict[str, str] = {}
    for _, _, attrs in graph.edges:
        for k, v in attrs.items():
            edge_attrs.setdefault(k, _graphml_type(v))

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<graphml xmlns="http://graphml.graphdrawing.org/xmlns"'
        ' xmlns:xsi="http://www.w3.org/2001/XMLSchema-instance"'
        ' xsi:schemaLocation="http://graphml.graphdrawing.org/xmlns'
        ' http://graphml.graphdrawing.org/xmlns/1.0/graphml.xsd">',
    ]
    keys: dict[tuple[str, str], str] = {}
    for domain, attrs in (("node", node_attrs), ("edge", edge_attrs)):
        for attr in sorted(attrs):
            key_id = f"k{len(keys)}"
            keys[(domain, attr)] = key_id
            lines.append(
                f'  <key id="{key_id}" for="{domain}" attr.name="{escape(attr)}"'
                f' attr.type="{attrs[attr]}"/>'
            )
    default = "directed" if graph.directed else "undirected"
    lines.append(f'  <graph id="{escape(graph.name)}" edgedefault="{default}">')
    for nid, attrs in graph.nodes:
        if attrs:
            lines.append(f'    <node id="n{nid}">')
            for attr in sorted(attrs):
                key = keys[("node", attr)]
                lines.append(f'      <data key="{key}">{escape(_fmt(attrs[attr]))}</data>')
            lines.append("    </node>")
        else:
            lines.append(f'    <node id="n{nid}"/>')
    for ei, (u, v, attrs) in enumerate(graph.edges):
        if attrs:
            lines.append(f'    <edge id="e{ei}" source="n{u}" target="n{v}">')
            for attr in sorted(attrs):
                key = keys[("edge", attr)]
                lines.append(f'      <data key="{key}">{escape(_fmt(attrs[attr]))}</data>')
            lines.append("    </edge>")
        else:
            lines.append(f'    <edge id="e{ei}" source="n{u}" target="n{v}"/>')
    lines.append("  </graph>")
    lines.append("</graphml>")
    return "\n".join(lines) + "\n"


def to_dot_str(graph: ExportGraph) -> str:
    kind = "digraph" if graph.directed else "graph"
    link = "->" if graph.directed else "--"
    weights = [attrs.get("weight", 1.0) for (_, _, attrs) in graph.edges]
    top = max(weights) if weights else 1.0
    top = top if top > 0 else 1.0
    lines = [f'{kind} "{graph.name}" {{', "  node [shape=circle];"]
    for nid, attrs in graph.nodes:
        label = attrs.get("label", str(nid))
        lines.append(f'  n{nid} [label="{label}"];')
    for (u, v, attrs) in graph.edges:
        w = float(attrs.get("weight", 1.0))
        rel = max(0.0, w / top)
        penwidth = 0.5 + 3.5 * rel
        gray = int(round(80 - 60 * rel))
        lines.append(
            f'  n{u} {link} n{v} [weight={_fmt(w)}, penwidth={penwidth:.3f}, color="gray{gray}"];'
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_atomic(path: str | Path, text: str) -> Path:
    """Write via a temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
    return path


def export_graph(obj, fmt: str, path: str | Path) -> Path:
    """Serialize a graph-like object (multi-layer, attention, or export form)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    if isinstance(obj, MultiLayerGraph):
        graph = from_multilayer(obj)
    elif isinstance(obj, AttentionGraph):
        graph = from_attention(obj)
    elif isinstance(obj, BandCentrality):
        graph = from_band_centrality(obj)
    elif isinstance(obj, ExportGraph):
        graph = obj
    else:
        raise TypeError(f"cannot export object of type {type(obj).__name__}")
    writer = {"json": to_json_str, "graphml": to_graphml_str, "dot": to_dot_str}[fmt]
    return write_atomic(path, writer(graph))
