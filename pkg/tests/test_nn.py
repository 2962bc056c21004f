import numpy as np
import pytest

from neurograph import autodiff as ad
from neurograph.dataset import synth_cohort
from neurograph.encoding import assemble_features
from neurograph.errors import StructuralError
from neurograph.graphs import BandLayer, FrequencyBand, build_multilayer
from neurograph.model import (
    GatModel,
    ModelConfig,
    attention_normalize,
    batch_graphs,
    compile_graph,
    gat_static_score,
    gatv2_score,
    mse_loss,
)
from neurograph.rewiring import rewire_patient

TINY = ModelConfig(in_dim=6, hidden=8, heads=2, norm_groups=2, mlp_hidden=4, n_pools=2)


def tiny_graph(seed=0, n=5, n_layers=2):
    rng = np.random.default_rng(seed)
    layers = []
    for li in range(n_layers):
        edges = {(v, v): 1.0 for v in range(n)}
        for v in range(1, n):
            u = int(rng.integers(0, v))
            edges[(u, v)] = float(rng.uniform(0.2, 1.0))
        layers.append(BandLayer(list(FrequencyBand)[li], n, edges))
    graph = build_multilayer(layers)
    return compile_graph(graph.with_features(rng.random((n * n_layers, TINY.in_dim))))


@pytest.fixture(scope="module")
def synth_compiled(areas84):
    cohort = synth_cohort(2, 42)
    return [
        compile_graph(assemble_features(rewire_patient(p, list(areas84))))
        for p in cohort.patients
    ]


class TestScores:
    def test_gatv2_zero_attention_vector(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            x_v, x_u = rng.random(3), rng.random(3)
            w = rng.random((4, 6))
            assert gatv2_score(x_v, x_u, w, np.zeros(4)) == 0.0

    def test_gatv2_hand_values(self):
        w, a = [[1.0, 1.0]], [1.0]
        assert gatv2_score([2.0], [3.0], w, a) == pytest.approx(5.0)
        assert gatv2_score([-2.0], [-3.0], w, a) == pytest.approx(-1.0)

    def test_static_hand_values(self):
        w, a = [[1.0]], [1.0, 1.0]
        assert gat_static_score([2.0], [3.0], w, a) == pytest.approx(5.0)
        assert gat_static_score([-2.0], [-3.0], w, a) == pytest.approx(-1.0)

    def test_layer_matches_scalar_score(self):
        """The vectorized layer reproduces the reference per-pair score."""
        cfg = ModelConfig(in_dim=4, hidden=4, heads=1, norm_groups=1, n_pools=1, dropout=0.0)
        model = GatModel.init(cfg, seed=3)
        layer = BandLayer(FrequencyBand.alpha1, 2, {(0, 0): 1.0, (1, 1): 1.0, (0, 1): 0.7})
        rng = np.random.default_rng(4)
        graph = build_multilayer([layer]).with_features(rng.random((2, 4)))
        compiled = compile_graph(graph)
        _, records = model.forward(compiled)
        rec = records[0]
        w_left = model.params["gat1.w_left"].data
        w_right = model.params["gat1.w_right"].data
        w_edge = model.params["gat1.w_edge"].data
        att = model.params["gat1.att"].data[0]
        w_pair = np.hstack([w_left.T, np.vstack([w_right, w_edge]).T])
        scores = {}
        for (s, d, feats) in zip(rec.src, rec.dst, compiled.edge_feats):
            x_v = compiled.features[d]
            x_u = np.concatenate([compiled.features[s], feats])
            scores[(s, d)] = gatv2_score(x_v, x_u, w_pair, att)
        for target in (0, 1):
            incoming = {s: scores[(s, d)] for (s, d) in scores if d == target}
            expected = attention_normalize(incoming)
            for i, (s, d) in enumerate(zip(rec.src, rec.dst)):
                if d == target:
                    assert rec.alpha[i, 0] == pytest.approx(expected[s], abs=1e-12)


class TestAttentionNormalize:
    def test_two_zeros(self):
        assert attention_normalize({"a": 0.0, "b": 0.0}) == {"a": 0.5, "b": 0.5}

    def test_log_two(self):
        out = attention_normalize({"a": np.log(2.0), "b": 0.0})
        assert out["a"] == pytest.approx(2 / 3)
        assert out["b"] == pytest.approx(1 / 3)

    def test_shift_invariance(self):
        base = {"a": 0.3, "b": -1.2, "c": 2.0}
        shifted = {k: v + 17.5 for k, v in base.items()}
        a, b = attention_normalize(base), attention_normalize(shifted)
        for k in base:
            assert a[k] == pytest.approx(b[k], abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(StructuralError):
            attention_normalize({})


class TestForward:
    def test_attention_rows_sum_to_one(self, synth_compiled):
        model = GatModel.init(ModelConfig(), seed=7)
        batch = batch_graphs(synth_compiled)
        _, records = model.forward(batch)
        for rec in records:
            sums = rec.per_target_sums(batch.n_nodes)
            assert np.allclose(sums, 1.0, atol=1e-6)

    def test_default_graph_hidden_shape(self, synth_compiled):
        model = GatModel.init(ModelConfig(), seed=7)
        x = ad.Tensor(synth_compiled[0].features)
        h, _ = model._attention_layer(1, x, synth_compiled[0], train=False, rng=None)
        assert h.data.shape == (252, 64)

    def test_single_node_self_loop_alpha_one(self):
        cfg = ModelConfig(in_dim=3, hidden=4, heads=2, norm_groups=2, n_pools=1)
        model = GatModel.init(cfg, seed=1)
        layer = BandLayer(FrequencyBand.delta, 1, {(0, 0): 1.0})
        graph = build_multilayer([layer]).with_features(np.array([[0.3, -0.2, 0.9]]))
        compiled = compile_graph(graph)
        _, records = model.forward(compiled)
        assert np.allclose(records[0].alpha, 1.0)
        assert np.allclose(records[1].alpha, 1.0)

    def test_eval_mode_deterministic(self, synth_compiled):
        model = GatModel.init(ModelConfig(), seed=2)
        batch = batch_graphs(synth_compiled)
        p1, _ = model.forward(batch)
        p2, _ = model.forward(batch)
        assert np.array_equal(p1.data, p2.data)

    def test_train_mode_reproducible_with_seeded_rng(self, synth_compiled):
        model = GatModel.init(ModelConfig(), seed=2)
        batch = batch_graphs(synth_compiled)
        p1, _ = model.forward(batch, train=True, rng=np.random.default_rng(5))
        p2, _ = model.forward(batch, train=True, rng=np.random.default_rng(5))
        assert np.array_equal(p1.data, p2.data)

    def test_train_mode_requires_rng(self, synth_compiled):
        model = GatModel.init(ModelConfig(), seed=2)
        with pytest.raises(ValueError):
            model.forward(synth_compiled[0], train=True)

    def test_batch_matches_singles(self, synth_compiled):
        model = GatModel.init(ModelConfig(), seed=3)
        batched = model.predict(synth_compiled)
        singles = [model.predict([g]) for g in synth_compiled]
        assert np.allclose(batched, np.concatenate(singles), atol=1e-12)

    def test_mlp_zero_weights_constant_prediction(self, synth_compiled):
        model = GatModel.init(ModelConfig(), seed=4)
        for key in ("mlp.w1", "mlp.b1", "mlp.w2"):
            model.params[key].data = np.zeros_like(model.params[key].data)
        model.params["mlp.b2"].data = np.array([12.5])
        assert np.allclose(model.predict(synth_compiled), 12.5)

    def test_static_variant_forward(self):
        cfg = ModelConfig(in_dim=6, hidden=8, heads=2, norm_groups=2, n_pools=2, scoring="gat")
        model = GatModel.init(cfg, seed=5)
        g = tiny_graph()
        pred, records = model.forward(g)
        assert pred.data.shape == (1,)
        assert np.allclose(records[0].per_target_sums(g.n_nodes), 1.0, atol=1e-6)

    def test_mismatched_pools_rejected(self):
        model = GatModel.init(TINY, seed=0)
        g = tiny_graph(n_layers=1)
        with pytest.raises(StructuralError, match="band layers"):
            model.forward(g)

    def test_gradients_flow_to_all_params(self):
        model = GatModel.init(TINY, seed=6)
        g = tiny_graph()
        pred, _ = model.forward(g, train=True, rng=np.random.default_rng(0))
        ad.backward(mse_loss(pred, np.array([3.0])))
        for name, t in model.params.items():
            assert t.grad is not None, name
            assert np.all(np.isfinite(t.grad)), name


class TestCompile:
    def test_missing_self_loop_rejected(self):
        layer = BandLayer(FrequencyBand.alpha1, 2, {(0, 1): 0.5, (0, 0): 1.0})
        graph = build_multilayer([layer]).with_features(np.zeros((2, 3)))
        with pytest.raises(StructuralError, match="self-loop"):
            compile_graph(graph)

    def test_missing_features_rejected(self):
        layer = BandLayer(FrequencyBand.alpha1, 1, {(0, 0): 1.0})
        with pytest.raises(StructuralError, match="features"):
            compile_graph(build_multilayer([layer]))

    def test_edge_feature_channels(self):
        layer = BandLayer(FrequencyBand.alpha1, 2, {(0, 0): 1.0, (1, 1): 1.0, (0, 1): 0.25})
        twin = BandLayer(FrequencyBand.alpha2, 2, dict(layer.edges))
        g = compile_graph(build_multilayer([layer, twin]).with_features(np.zeros((4, 2))))
        codes = g.edge_type_codes()
        # intra edges carry their coherence weight, cross and self carry 1.0
        for i in range(g.n_edges):
            expected = 0.25 if codes[i] == 0 else 1.0
            assert g.edge_feats[i, 3] == expected
        assert sorted(np.bincount(codes)) == [4, 4, 4]  # intra dirs, cross dirs, self

    def test_directed_expansion_counts(self):
        g = tiny_graph(n=5, n_layers=2)
        # every node has exactly one self-edge (src == dst)
        self_edges = (g.src == g.dst).sum()
        assert self_edges == 10

    def test_batch_offsets(self):
        a, b = tiny_graph(0), tiny_graph(1)
        batch = batch_graphs([a, b])
        assert batch.n_nodes == a.n_nodes + b.n_nodes
        assert batch.src[a.n_edges :].min() >= a.n_nodes
        assert list(np.unique(batch.pool_segment)) == [0, 1, 2, 3]

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            batch_graphs([])


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, synth_compiled):
        model = GatModel.init(ModelConfig(), seed=11)
        path = tmp_path / "model.npz"
        model.save(path)
        loaded = GatModel.load(path)
        assert loaded.config == model.config
        assert set(loaded.params) == set(model.params)
        for k in model.params:
            assert np.array_equal(loaded.params[k].data, model.params[k].data)
        assert np.array_equal(loaded.predict(synth_compiled), model.predict(synth_compiled))

    def test_param_count_formula_and_stability(self):
        model_a = GatModel.init(ModelConfig(), seed=0)
        model_b = GatModel.init(ModelConfig(), seed=99)
        assert model_a.param_count == model_b.param_count
        d, h, heads, hd = 21, 64, 8, 8
        expected = 0
        for d_in in (d, h):
            expected += d_in * h + d_in * h + 4 * h  # w_left, w_right, w_edge
            expected += heads * hd                   # att
            expected += 2 * h                        # norm gamma/beta
        expected += 3 * h * 64 + 64 + 64 * 1 + 1     # mlp
        assert model_a.param_count == expected

    def test_version_check(self, tmp_path):
        model = GatModel.init(TINY, seed=0)
        path = tmp_path / "m.npz"
        model.save(path)
        import json

        with np.load(path) as blob:
            arrays = {k: blob[k] for k in blob.files}
        meta = json.loads(bytes(arrays["__meta__"]).decode())
        meta["version"] = 99
        arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        np.savez(path, **arrays)
        with pytest.raises(ValueError, match="version"):
            GatModel.load(path)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(hidden=60, heads=8)
    with pytest.raises(ValueError):
        ModelConfig(scoring="transformer")
    with pytest.raises(ValueError):
        ModelConfig(dropout=1.0)
