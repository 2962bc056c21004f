import numpy as np
import pytest

from neurograph.graphs import BandLayer, BrodmannArea, ConnectivityMatrix, FrequencyBand


@pytest.fixture(scope="session")
def areas84():
    from neurograph.graphs import default_areas

    return default_areas()


def random_matrix(n, rng, band=FrequencyBand.alpha1):
    """Uniform symmetric connectivity matrix with zero diagonal."""
    raw = rng.random((n, n))
    sym = (raw + raw.T) / 2.0
    np.fill_diagonal(sym, 0.0)
    return ConnectivityMatrix(band, sym)


def line_areas(xs):
    """Areas placed on the x axis at the given coordinates."""
    return [BrodmannArea(i, f"n{i}", (float(x), 0.0, 0.0)) for i, x in enumerate(xs)]


def cycle_layer(n, band=FrequencyBand.alpha1, self_loops=False, weight=1.0):
    edges = {(i, (i + 1) % n): weight for i in range(n)}
    if self_loops:
        for v in range(n):
            edges[(v, v)] = 1.0
    return BandLayer(band, n, edges)
