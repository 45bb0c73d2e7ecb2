import numpy as np
import pytest

from vibrokit.config import load
from vibrokit.network import ClusterPartition, OscillatorNetwork


def random_connected_weights(rng, k, p=0.5, low=0.2, high=2.0):
    """Random connected weighted graph on ``k`` nodes (path plus extras)."""
    A = np.zeros((k, k))
    perm = rng.permutation(k)
    for a, b in zip(perm[:-1], perm[1:]):
        A[a, b] = A[b, a] = rng.uniform(low, high)
    for i in range(k):
        for j in range(i + 1, k):
            if A[i, j] == 0 and rng.random() < p:
                A[i, j] = A[j, i] = rng.uniform(low, high)
    return A


def equitable_block(rng, nk, nl, nonuniform=True):
    """Inter block with constant row sums and constant column sums."""
    if nonuniform and nk == nl:
        M = np.zeros((nk, nl))
        for _ in range(rng.integers(1, 3)):
            M[np.arange(nk), rng.permutation(nl)] += rng.uniform(0.1, 1.0)
        return M
    return np.full((nk, nl), rng.uniform(0.05, 0.5))


def random_clustered_network(rng, r=None, max_n=30, sizes=None,
                             nonuniform=True, p_inter=0.6, intra_scale=1.0):
    """Random network satisfying the invariance conditions.

    Consecutive clusters are always coupled so the quotient is connected.
    """
    if sizes is None:
        r = int(rng.integers(1, 6)) if r is None else r
        sizes = []
        for _ in range(r):
            sizes.append(int(rng.integers(2, 7)))
        while sum(sizes) > max_n:
            sizes[int(np.argmax(sizes))] -= 1
    sizes = list(sizes)
    r = len(sizes)
    n = sum(sizes)
    starts = np.cumsum([0] + sizes)
    A = np.zeros((n, n))
    for k in range(r):
        s = slice(starts[k], starts[k + 1])
        A[s, s] = intra_scale * random_connected_weights(rng, sizes[k])
    for k in range(r):
        for l in range(k + 1, r):
            if l == k + 1 or rng.random() < p_inter:
                blk = equitable_block(rng, sizes[k], sizes[l], nonuniform)
                A[starts[k]:starts[k + 1], starts[l]:starts[l + 1]] = blk
                A[starts[l]:starts[l + 1], starts[k]:starts[k + 1]] = blk.T
    # shuffle labels so clusters are not contiguous index ranges
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    A = A[np.ix_(inv, inv)]
    omega_c = rng.uniform(-2, 2, r)
    omega = np.empty(n)
    clusters = []
    for k in range(r):
        nodes = sorted(int(perm[i]) for i in range(starts[k], starts[k + 1]))
        clusters.append(nodes)
        omega[nodes] = omega_c[k]
    return OscillatorNetwork(A, omega), ClusterPartition(clusters)


def triangle_c1():
    A = np.zeros((3, 3))
    A[0, 1] = A[1, 0] = 0.02
    A[1, 2] = A[2, 1] = 0.08
    A[0, 2] = A[2, 0] = 0.02
    return OscillatorNetwork(A, np.ones(3)), ClusterPartition([[0, 1, 2]])


def complete_uniform(n, w=1.0, omega=0.0):
    A = w * (np.ones((n, n)) - np.eye(n))
    return OscillatorNetwork(A, np.full(n, omega)), ClusterPartition(
        [list(range(n))])


@pytest.fixture(scope="session")
def bundled():
    cfg = load("@three_cluster")
    return cfg, cfg.network(), cfg.cluster_partition()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
