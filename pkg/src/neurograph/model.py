"""Multi-head graph attention regressor over compiled multi-layer graphs.

Two attention layers (dynamic scoring by default, the classic static
variant behind a flag) with 8 heads concatenated to 64 channels, group
normalization and ELU after each layer, then per-band mean pooling and a
small MLP head producing one severity score per graph.

Graphs are compiled to flat edge arrays once and reused across epochs;
a batch is the disjoint union of compiled graphs.  Messages flow along
directed edges (u -> v); each undirected edge contributes both
directions and every node carries a self-loop, so attention softmaxes
are always well defined.  Edge features (a type one-hot intra / cross /
self plus the coherence weight) are appended to source features inside
message computation, so the model can treat band-internal, cross-band,
and self messages differently and see functional edge strength.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NumericError, StructuralError
from .graphs import EDGE_CROSS, EDGE_INTRA, EDGE_SELF, MultiLayerGraph

EDGE_TYPE_INDEX = {EDGE_INTRA: 0, EDGE_CROSS: 1, EDGE_SELF: 2}
N_EDGE_TYPES = 3

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    in_dim: int = 21
    hidden: int = 64
    heads: int = 8
    norm_groups: int = 8
    leaky_slope: float = 0.2
    dropout: float = 0.5
    mlp_hidden: int = 64
    n_pools: int = 3
    scoring: str = "gatv2"

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by heads {self.heads}")
        if self.hidden % self.norm_groups != 0:
            raise ValueError(f"hidden {self.hidden} not divisible into {self.norm_groups} groups")
        if self.scoring not in ("gatv2", "gat"):
            raise ValueError(f"unknown scoring variant {self.scoring!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


@dataclass(frozen=True)
class CompiledGraph:
    """Edge-array form of one graph or a disjoint-union batch."""

    features: np.ndarray   # (N, in_dim)
    src: np.ndarray        # (E,) message sources
    dst: np.ndarray        # (E,) message targets; softmax groups by dst
    edge_feats: np.ndarray  # (E, 4): type one-hot (intra/cross/self) + weight
    pool_segment: np.ndarray  # (N,) -> graph_index * n_pools + band layer
    n_nodes: int
    n_graphs: int
    n_pools: int

    @property
    def n_edges(self) -> int:
        return self.src.shape[0]

    def edge_type_codes(self) -> np.ndarray:
        return np.argmax(self.edge_feats[:, :N_EDGE_TYPES], axis=1)


def compile_graph(graph: MultiLayerGraph) -> CompiledGraph:
    """Flatten a featured multi-layer graph into directed edge arrays.

    Undirected edges become two directed edges; self-loops one.  Every
    node must carry a self-loop, otherwise its attention neighborhood
    could be empty.
    """
    if graph.node_features is None:
        raise StructuralError("graph has no node features; assemble encodings first")
    src, dst, kinds, weights = [], [], [], []
    has_loop = np.zeros(graph.n_nodes, dtype=bool)
    for (u, v, w, kind) in graph.iter_edges():
        if u == v:
            src.append(u)
            dst.append(v)
            kinds.append(EDGE_TYPE_INDEX[kind])
            weights.append(w)
            has_loop[u] = True
        else:
            src.extend((u, v))
            dst.extend((v, u))
            kinds.extend((EDGE_TYPE_INDEX[kind],) * 2)
            weights.extend((w, w))
    if not has_loop.all():
        missing = int(np.flatnonzero(~has_loop)[0])
        raise StructuralError(f"node {missing} has no self-loop; attention undefined")
    order = np.lexsort((np.array(src), np.array(dst)))
    src = np.array(src, dtype=int)[order]
    dst = np.array(dst, dtype=int)[order]
    feats = np.zeros((len(order), N_EDGE_TYPES + 1))
    feats[np.arange(len(order)), np.array(kinds, dtype=int)[order]] = 1.0
    feats[:, N_EDGE_TYPES] = np.array(weights, dtype=float)[order]
    pool = np.repeat(np.arange(graph.n_layers), graph.n_labels)
    return CompiledGraph(
        features=np.asarray(graph.node_features, dtype=float),
        src=src,
        dst=dst,
        edge_feats=feats,
        pool_segment=pool,
        n_nodes=graph.n_nodes,
        n_graphs=1,
        n_pools=graph.n_layers,
    )


def batch_graphs(graphs: list[CompiledGraph]) -> CompiledGraph:
    """Disjoint union with per-graph pooling segments preserved."""
    if not graphs:
        raise ValueError("empty batch")
    pools = {g.n_pools for g in graphs}
    if len(pools) != 1:
        raise StructuralError(f"graphs disagree on layer count: {sorted(pools)}")
    n_pools = pools.pop()
    feats, srcs, dsts, hots, segs = [], [], [], [], []
    node_off = 0
    for gi, g in enumerate(graphs):
        feats.append(g.features)
        srcs.append(g.src + node_off)
        dsts.append(g.dst + node_off)
        hots.append(g.edge_feats)
        segs.append(g.pool_segment + gi * n_pools)
        node_off += g.n_nodes
    return CompiledGraph(
        features=np.concatenate(feats),
        src=np.concatenate(srcs),
        dst=np.concatenate(dsts),
        edge_feats=np.concatenate(hots),
        pool_segment=np.concatenate(segs),
        n_nodes=node_off,
        n_graphs=len(graphs),
        n_pools=n_pools,
    )


@dataclass
class AttentionRecord:
    """Normalized (pre-dropout) attention coefficients of one layer."""

    layer_index: int
    src: np.ndarray
    dst: np.ndarray
    edge_type: np.ndarray  # codes into EDGE_TYPE_INDEX
    alpha: np.ndarray      # (E, heads)

    def per_target_sums(self, n_nodes: int) -> np.ndarray:
        sums = np.zeros((n_nodes, self.alpha.shape[1]))
        np.add.at(sums, self.dst, self.alpha)
        return sums

    def head_mean(self) -> np.ndarray:
        return self.alpha.mean(axis=1)


def gatv2_score(x_v, x_u, w, a, slope: float = 0.2) -> float:
    """Dynamic score a . leaky(W [x_v || x_u]) for a single head and pair."""
    z = np.asarray(w) @ np.concatenate([np.asarray(x_v, float), np.asarray(x_u, float)])
    return float(np.asarray(a) @ np.where(z >= 0, z, slope * z))


def gat_static_score(x_v, x_u, w, a, slope: float = 0.2) -> float:
    """Classic static score leaky(a . [W x_v || W x_u])."""
    w = np.asarray(w)
    z = np.concatenate([w @ np.asarray(x_v, float), w @ np.asarray(x_u, float)])
    s = float(np.asarray(a) @ z)
    return s if s >= 0 else slope * s


def attention_normalize(scores: dict) -> dict:
    """Softmax a neighbor -> score map; raises on an empty neighborhood."""
    if not scores:
        raise StructuralError("cannot normalize over an empty neighborhood")
    keys = list(scores)
    vals = np.array([scores[k] for k in keys], dtype=float)
    vals = np.exp(vals - vals.max())
    vals /= vals.sum()
    return {k: float(v) for k, v in zip(keys, vals)}


def _glorot(rng: np.random.Generator, shape, fan_in, fan_out) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class GatModel:
    """Parameter store plus forward pass; single-writer during training.

    ``target_shift``/``target_scale`` standardize the regression target
    during training; :meth:`predict` maps network outputs back to the
    clinical scale.  ``feature_shift``/``feature_scale`` standardize node
    feature columns (positional encodings vary on very different scales);
    both transforms are fitted on the training split and persisted with
    the checkpoint so later predictions see identical inputs.
    """

    def __init__(self, config: ModelConfig, params: dict[str, Tensor],
                 target_shift: float = 0.0, target_scale: float = 1.0,
                 feature_shift: np.ndarray | None = None,
                 feature_scale: np.ndarray | None = None):
        self.config = config
        self.params = params
        self.target_shift = float(target_shift)
        self.target_scale = float(target_scale)
        self.feature_shift = (np.zeros(config.in_dim) if feature_shift is None
                              else np.asarray(feature_shift, dtype=float))
        self.feature_scale = (np.ones(config.in_dim) if feature_scale is None
                              else np.asarray(feature_scale, dtype=float))

    def fit_feature_transform(self, feature_rows: np.ndarray) -> None:
        """Column-wise standardization statistics from training-split nodes."""
        self.feature_shift = feature_rows.mean(axis=0)
        scale = feature_rows.std(axis=0)
        self.feature_scale = np.where(scale > 1e-9, scale, 1.0)

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "GatModel":
        rng = np.random.default_rng(seed)
        h, hd, heads = config.hidden, config.head_dim, config.heads
        params: dict[str, Tensor] = {}
        for li, d_in in ((1, config.in_dim), (2, config.hidden)):
            d_aug = d_in + N_EDGE_TYPES + 1
            params[f"gat{li}.w_left"] = Tensor(_glorot(rng, (d_in, h), d_in, h), requires_grad=True)
            # right projection of [x_u || edge features], split into a
            # node block and a 4-row edge block (same map, cheaper to apply)
            params[f"gat{li}.w_right"] = Tensor(_glorot(rng, (d_in, h), d_aug, h), requires_grad=True)
            params[f"gat{li}.w_edge"] = Tensor(_glorot(rng, (N_EDGE_TYPES + 1, h), d_aug, h), requires_grad=True)
            if config.scoring == "gatv2":
                params[f"gat{li}.att"] = Tensor(_glorot(rng, (heads, hd), hd, 1), requires_grad=True)
            else:
                params[f"gat{li}.att_left"] = Tensor(_glorot(rng, (heads, hd), hd, 1), requires_grad=True)
                params[f"gat{li}.att_right"] = Tensor(_glorot(rng, (heads, hd), hd, 1), requires_grad=True)
            params[f"norm{li}.gamma"] = Tensor(np.ones(h), requires_grad=True)
            params[f"norm{li}.beta"] = Tensor(np.zeros(h), requires_grad=True)
        mlp_in = config.n_pools * h
        params["mlp.w1"] = Tensor(_glorot(rng, (mlp_in, config.mlp_hidden), mlp_in, config.mlp_hidden), requires_grad=True)
        params["mlp.b1"] = Tensor(np.zeros(config.mlp_hidden), requires_grad=True)
        params["mlp.w2"] = Tensor(_glorot(rng, (config.mlp_hidden, 1), config.mlp_hidden, 1), requires_grad=True)
        params["mlp.b2"] = Tensor(np.zeros(1), requires_grad=True)
        return cls(config, params)

    @property
    def param_count(self) -> int:
        return sum(int(t.data.size) for t in self.params.values())

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def clone_param_data(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def load_param_data(self, data: dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            t.data = data[k].copy()

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        """Versioned checkpoint, written atomically (temp file + rename)."""
        from pathlib import Path

        meta = {
            "version": CHECKPOINT_VERSION,
            "config": self.config.__dict__,
            "target_shift": self.target_shift,
            "target_scale": self.target_scale,
        }
        arrays = {k.replace(".", "__"): t.data for k, t in self.params.items()}
        arrays["__feature_shift__"] = self.feature_shift
        arrays["__feature_scale__"] = self.feature_scale
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp.npz")
        np.savez(tmp, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)
        tmp.replace(path)

    @classmethod
    def load(cls, path) -> "GatModel":
        with np.load(path) as blob:
            meta = json.loads(bytes(blob["__meta__"]).decode())
            if meta["version"] != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta['version']}")
            config = ModelConfig(**meta["config"])
            special = {"__meta__", "__feature_shift__", "__feature_scale__"}
            params = {
                k.replace("__", "."): Tensor(blob[k].copy(), requires_grad=True)
                for k in blob.files
                if k not in special
            }
            feature_shift = blob["__feature_shift__"].copy()
            feature_scale = blob["__feature_scale__"].copy()
        return cls(config, params, meta["target_shift"], meta["target_scale"],
                   feature_shift, feature_scale)

    # -- forward ------------------------------------------------------------

    def _attention_layer(self, li: int, x: Tensor, batch: CompiledGraph,
                         train: bool, rng) -> tuple[Tensor, AttentionRecord]:
        cfg = self.config
        e, heads, hd = batch.n_edges, cfg.heads, cfg.head_dim

        # project per node, then gather per edge: the message for edge
        # (u -> v) is W_right [x_u || onehot(type)], computed as a node
        # term plus an edge-type term
        proj_left = ad.matmul(x, self.params[f"gat{li}.w_left"])    # (N, hidden)
        proj_right = ad.matmul(x, self.params[f"gat{li}.w_right"])  # (N, hidden)
        tgt = ad.gather_rows(proj_left, batch.dst)                  # (E, hidden)
        type_term = ad.matmul(Tensor(batch.edge_feats), self.params[f"gat{li}.w_edge"])
        msg = ad.add(ad.gather_rows(proj_right, batch.src), type_term)

        if cfg.scoring == "gatv2":
            att = ad.reshape(self.params[f"gat{li}.att"], (1, heads, hd))
            z = ad.reshape(ad.leaky_relu(ad.add(tgt, msg), cfg.leaky_slope), (e, heads, hd))
            scores = ad.sum_(ad.mul(z, att), axis=2)           # (E, heads)
        else:
            a_l = ad.reshape(self.params[f"gat{li}.att_left"], (1, heads, hd))
            a_r = ad.reshape(self.params[f"gat{li}.att_right"], (1, heads, hd))
            raw = ad.add(
                ad.sum_(ad.mul(ad.reshape(tgt, (e, heads, hd)), a_l), axis=2),
                ad.sum_(ad.mul(ad.reshape(msg, (e, heads, hd)), a_r), axis=2),
            )
            scores = ad.leaky_relu(raw, cfg.leaky_slope)

        alpha = ad.segment_softmax(scores, batch.dst, batch.n_nodes)
        record = AttentionRecord(
            layer_index=li,
            src=batch.src,
            dst=batch.dst,
            edge_type=batch.edge_type_codes(),
            alpha=alpha.data.copy(),
        )
        if train and cfg.dropout > 0:
            alpha = ad.dropout(alpha, cfg.dropout, rng)
        weighted = ad.mul(ad.reshape(msg, (e, heads, hd)), ad.reshape(alpha, (e, heads, 1)))
        agg = ad.segment_sum(weighted, batch.dst, batch.n_nodes)
        h = ad.reshape(agg, (batch.n_nodes, cfg.hidden))
        h = ad.group_norm(h, self.params[f"norm{li}.gamma"], self.params[f"norm{li}.beta"], cfg.norm_groups)
        h = ad.elu(h)
        if train and cfg.dropout > 0:
            h = ad.dropout(h, cfg.dropout, rng)
        return h, record

    def forward(self, batch: CompiledGraph, train: bool = False,
                rng: np.random.Generator | None = None) -> tuple[Tensor, list[AttentionRecord]]:
        """Predictions (one per graph in the batch) plus attention records."""
        cfg = self.config
        if batch.n_pools != cfg.n_pools:
            raise StructuralError(
                f"batch has {batch.n_pools} band layers, model expects {cfg.n_pools}"
            )
        if batch.features.shape[1] != cfg.in_dim:
            raise StructuralError(
                f"feature dim {batch.features.shape[1]} != model in_dim {cfg.in_dim}"
            )
        if train and rng is None:
            raise ValueError("training forward needs an rng for dropout")
        x = Tensor((batch.features - self.feature_shift) / self.feature_scale)
        records = []
        for li in (1, 2):
            x, rec = self._attention_layer(li, x, batch, train, rng)
            records.append(rec)
        pooled = ad.segment_mean(x, batch.pool_segment, batch.n_graphs * cfg.n_pools)
        stacked = ad.reshape(pooled, (batch.n_graphs, cfg.n_pools * cfg.hidden))
        hidden = ad.elu(ad.add(ad.matmul(stacked, self.params["mlp.w1"]), self.params["mlp.b1"]))
        out = ad.add(ad.matmul(hidden, self.params["mlp.w2"]), self.params["mlp.b2"])
        return ad.reshape(out, (batch.n_graphs,)), records

    def predict(self, graphs: list[CompiledGraph]) -> np.ndarray:
        """Eval-mode predictions on the clinical scale; pure function of
        (parameters, graphs)."""
        pred, _ = self.forward(batch_graphs(graphs))
        return pred.data * self.target_scale + self.target_shift


def mse_loss(pred: Tensor, targets: np.ndarray) -> Tensor:
    diff = ad.sub(pred, np.asarray(targets, dtype=float))
    return ad.mean_(ad.mul(diff, diff))


def check_finite_params(model: GatModel) -> None:
    for name, t in model.params.items():
        if not np.all(np.isfinite(t.data)):
            raise NumericError(f"parameter {name} contains non-finite values")
