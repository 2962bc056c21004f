import numpy as np
import pytest

from neurograph.dataset import synth_cohort
from neurograph.encoding import (
    EncodingConfig,
    assemble_features,
    band_one_hot,
    laplacian_eigens,
    laplacian_pe,
    normalized_laplacian,
    rw_pe,
    transition_matrix,
)
from neurograph.errors import DataError
from neurograph.graphs import BandLayer, FrequencyBand, build_multilayer
from neurograph.rewiring import rewire_patient

from conftest import cycle_layer


def random_layer(n, rng, extra_edges=6, band=FrequencyBand.alpha1):
    edges = {(v, v): 1.0 for v in range(n)}
    for v in range(1, n):
        u = int(rng.integers(0, v))
        edges[(u, v)] = float(rng.uniform(0.1, 1.0))  # spanning tree keeps it connected
    for _ in range(extra_edges):
        u, v = rng.integers(0, n, size=2)
        if u != v:
            edges[(min(u, v), max(u, v))] = float(rng.uniform(0.1, 1.0))
    return BandLayer(band, n, edges)


class TestLaplacianPE:
    def test_four_cycle_spectrum(self):
        layer = cycle_layer(4, self_loops=True)
        vals, _ = laplacian_eigens(layer)
        assert np.allclose(sorted(vals), [0.0, 1.0, 1.0, 2.0], atol=1e-12)

    def test_four_cycle_matches_dense_oracle(self):
        layer = cycle_layer(4, self_loops=True)
        # oracle: explicit dense eigensolve of I - D^{-1/2} A D^{-1/2}
        a = layer.adjacency(include_self_loops=False)
        d = np.diag(1.0 / np.sqrt(a.sum(1)))
        oracle_vals = np.linalg.eigvalsh(np.eye(4) - d @ a @ d)
        vals, _ = laplacian_eigens(layer)
        assert np.allclose(vals, oracle_vals, atol=1e-12)

    def test_two_node_closed_form(self):
        layer = BandLayer(FrequencyBand.theta, 2, {(0, 1): 1.0})
        vals, vecs = laplacian_eigens(layer)
        assert np.allclose(vals, [0.0, 2.0], atol=1e-12)
        pe = laplacian_pe(layer, 1)
        assert np.allclose(pe[:, 0], [1 / np.sqrt(2), -1 / np.sqrt(2)])
        assert pe[0, 0] > 0  # sign fixed on first nonzero component

    def test_padding_when_dim_exceeds_spectrum(self):
        layer = BandLayer(FrequencyBand.theta, 3, {(0, 1): 1.0, (1, 2): 1.0})
        pe = laplacian_pe(layer, 5)
        assert pe.shape == (3, 5)
        assert np.all(pe[:, 2:] == 0.0)

    def test_eigen_residual_small(self):
        rng = np.random.default_rng(0)
        for n in (5, 12, 84):
            layer = random_layer(n, rng, extra_edges=2 * n)
            lap = normalized_laplacian(layer)
            vals, vecs = laplacian_eigens(layer)
            for i in range(len(vals)):
                assert np.linalg.norm(lap @ vecs[:, i] - vals[i] * vecs[:, i]) <= 1e-8

    def test_eigenvalue_range_and_order(self):
        rng = np.random.default_rng(1)
        layer = random_layer(20, rng)
        vals, _ = laplacian_eigens(layer)
        assert np.all(np.diff(vals) >= -1e-12)
        assert vals[0] >= -1e-10 and vals[-1] <= 2 + 1e-10

    def test_isolated_node_zero_row(self):
        layer = BandLayer(FrequencyBand.theta, 3, {(0, 1): 1.0})
        pe = laplacian_pe(layer, 2)
        assert np.all(pe[2] == 0.0)

    def test_dim_validation(self):
        with pytest.raises(ValueError):
            laplacian_pe(cycle_layer(4), 0)


class TestRandomWalkPE:
    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        t = transition_matrix(random_layer(10, rng))
        assert np.allclose(t.sum(1), 1.0, atol=1e-12)

    def test_single_node_self_loop_all_ones(self):
        layer = BandLayer(FrequencyBand.delta, 1, {(0, 0): 1.0})
        assert np.all(rw_pe(layer, 4) == 1.0)

    def test_four_cycle_no_self_loops(self):
        pe = rw_pe(cycle_layer(4, self_loops=False), 2)
        assert np.allclose(pe[:, 0], 0.0)
        assert np.allclose(pe[:, 1], 0.5)

    def test_matches_matrix_power_oracle(self):
        rng = np.random.default_rng(3)
        for n in (3, 5, 8):
            layer = random_layer(n, rng)
            t = transition_matrix(layer)
            pe = rw_pe(layer, 6)
            power = np.eye(n)
            for s in range(6):
                power = power @ t
                assert np.allclose(pe[:, s], np.diag(power), atol=1e-10)

    def test_values_are_probabilities(self):
        rng = np.random.default_rng(4)
        pe = rw_pe(random_layer(15, rng), 8)
        assert np.all(pe >= 0.0) and np.all(pe <= 1.0)

    def test_zero_degree_node_rejected(self):
        layer = BandLayer(FrequencyBand.delta, 2, {(0, 0): 1.0})
        with pytest.raises(DataError, match="zero weighted degree"):
            rw_pe(layer, 2)

    def test_steps_validation(self):
        with pytest.raises(ValueError):
            rw_pe(cycle_layer(3, self_loops=True), 0)


class TestAssembleFeatures:
    def test_default_dim_21(self, areas84):
        cohort = synth_cohort(1, 5)
        g = assemble_features(rewire_patient(cohort.patients[0], areas84))
        assert g.node_features.shape == (252, 21)

    def test_band_one_hot_order(self):
        assert list(band_one_hot(FrequencyBand.alpha2)) == [0, 0, 0, 1, 0]
        assert list(band_one_hot(FrequencyBand.delta)) == [1, 0, 0, 0, 0]

    def test_isomorphic_layers_same_pe_blocks(self):
        rng = np.random.default_rng(6)
        base = random_layer(7, rng)
        twin = BandLayer(FrequencyBand.beta1, 7, dict(base.edges))
        g = assemble_features(build_multilayer([base, twin]), EncodingConfig(4, 4))
        feats = g.node_features
        # identical topology: PE columns match, one-hot differs
        assert np.allclose(feats[:7, :8], feats[7:, :8])
        assert not np.array_equal(feats[:7, 8:], feats[7:, 8:])

    def test_rw_pe_permutation_covariance(self):
        rng = np.random.default_rng(7)
        layer = random_layer(9, rng)
        perm = rng.permutation(9)
        inv = np.argsort(perm)
        permuted = BandLayer(
            layer.band,
            9,
            {
                (min(int(inv[u]), int(inv[v])), max(int(inv[u]), int(inv[v]))): w
                for (u, v), w in layer.edges.items()
            },
        )
        base = rw_pe(layer, 5)
        moved = rw_pe(permuted, 5)
        assert np.allclose(moved[inv[np.arange(9)]], base, atol=1e-12)

    def test_lap_pe_permutation_covariance_up_to_sign(self):
        rng = np.random.default_rng(8)
        layer = random_layer(9, rng, extra_edges=10)
        vals, _ = laplacian_eigens(layer)
        assert np.min(np.diff(np.sort(vals))) > 1e-6  # distinct spectrum
        perm = rng.permutation(9)
        inv = np.argsort(perm)
        permuted = BandLayer(
            layer.band,
            9,
            {
                (min(int(inv[u]), int(inv[v])), max(int(inv[u]), int(inv[v]))): w
                for (u, v), w in layer.edges.items()
            },
        )
        base = laplacian_pe(layer, 4)
        moved = laplacian_pe(permuted, 4)[inv[np.arange(9)]]
        for col in range(4):
            same = np.allclose(moved[:, col], base[:, col], atol=1e-9)
            flipped = np.allclose(moved[:, col], -base[:, col], atol=1e-9)
            assert same or flipped

    def test_config_feature_dim(self):
        assert EncodingConfig(8, 8).feature_dim == 21
        assert EncodingConfig(2, 3).feature_dim == 10
        with pytest.raises(ValueError):
            EncodingConfig(0, 8)
