import numpy as np
import pytest

from gntk import GraphSpec, build_ring_graph, normalize_adjacency


@pytest.fixture(scope="session")
def ring():
    return build_ring_graph()


def random_graph(rng, n, density=0.4, mode="symmetric", self_loops=True):
    raw = (rng.random((n, n)) < density).astype(float)
    raw = np.maximum(raw, raw.T)
    if self_loops:
        np.fill_diagonal(raw, 1.0)
    return GraphSpec(n, normalize_adjacency(raw, mode))


def random_psd(rng, n, scale=1.0):
    r = rng.standard_normal((n, n))
    return scale * (r @ r.T) / n
