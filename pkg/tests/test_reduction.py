import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vibrokit.network import ClusterPartition, OscillatorNetwork, build_reduction
from vibrokit.reduction import (CompactDynamics, compute_R, lift_error,
                                reduce_state, wrap)
from vibrokit.simulate import simulate_full
from vibrokit.vibration import VibrationSchedule, dither_vector

from conftest import random_clustered_network


def _setup(net, part, seed=None):
    red = build_reduction(net, part, tree_seed=seed)
    mats = compute_R(red)
    return red, mats, CompactDynamics(net, red, mats)


def test_tree_network_gives_identity():
    net = OscillatorNetwork.from_edges(4, [(0, 1, 1), (1, 2, 1), (2, 3, 0.5)],
                                       np.zeros(4))
    red = build_reduction(net, ClusterPartition([[0, 1], [2, 3]]))
    np.testing.assert_allclose(compute_R(red).R, np.eye(3), atol=1e-14)


def test_triangle_R1():
    from conftest import triangle_c1
    net, part = triangle_c1()
    mats = compute_R(build_reduction(net, part))
    np.testing.assert_array_equal(mats.R1, [[1, 0], [0, 1], [1, 1]])


def test_random_12_node_identity(rng):
    net, part = random_clustered_network(rng, sizes=[4, 4, 4])
    red = build_reduction(net, part)
    mats = compute_R(red)
    assert np.max(np.abs(red.B.T - mats.R @ red.B_hat.T)) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_R_structure(seed):
    rng = np.random.default_rng(seed)
    net, part = random_clustered_network(rng)
    red = build_reduction(net, part)
    mats = compute_R(red)
    mask = np.zeros_like(mats.R1, dtype=bool)
    for es, ts in zip(red.cluster_edge_slices(), red.cluster_tree_slices()):
        # tree rows map to themselves
        nt = ts.stop - ts.start
        np.testing.assert_array_equal(mats.R1[es][:nt, ts], np.eye(nt))
        mask[es, ts] = True
    # R1 is block-diagonal conformal with the clusters
    assert np.all(mats.R1[~mask] == 0)


class TestVectorFields:
    @pytest.fixture
    def dyn(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 4, 5])
        return _setup(net, part)[2]

    def test_f_intra_zero(self, dyn):
        np.testing.assert_array_equal(dyn.f_intra(np.zeros(dyn.nx)), 0)

    def test_f_inter_vanishes_on_manifold(self, dyn, rng):
        for _ in range(100):
            y = rng.uniform(-np.pi, np.pi, dyn.ny)
            assert np.max(np.abs(dyn.f_inter(np.zeros(dyn.nx), y))) < 1e-12

    def test_f_inter_nonzero_when_row_sums_broken(self):
        # 2+2 nodes, inter edges (0,2) and (1,3) with unequal weights
        edges = [(0, 1, 1.0), (2, 3, 1.0), (0, 2, 1.0), (1, 3, 0.3)]
        net = OscillatorNetwork.from_edges(4, edges, np.zeros(4))
        dyn = _setup(net, ClusterPartition([[0, 1], [2, 3]]))[2]
        assert np.max(np.abs(dyn.f_inter(np.zeros(2), np.array([0.7])))) > 0.1

    def test_f_ctr_zero_cases(self, dyn, rng):
        x = rng.normal(size=dyn.nx)
        U = rng.normal(size=2 * dyn.m_intra)
        np.testing.assert_array_equal(dyn.f_ctr(np.zeros_like(U), x), 0)
        np.testing.assert_array_equal(dyn.f_ctr(U, np.zeros(dyn.nx)), 0)

    def test_dimension_mismatch(self, dyn):
        with pytest.raises(ValueError):
            dyn.f_intra(np.zeros(dyn.nx + 1))
        with pytest.raises(ValueError):
            dyn.g(np.zeros(dyn.nx), np.zeros(dyn.ny + 1))

    def test_rhs_matches_direct_projection(self, rng):
        """``B_hat^T theta'`` equals the reduced field at the same instant."""
        net, part = random_clustered_network(rng, sizes=[3, 4])
        red, mats, dyn = _setup(net, part)
        edges = red.intra_edge_list
        amps = {}
        for (i, j) in edges:
            amps[(i, j)] = rng.normal()
            amps[(j, i)] = rng.normal()
        sched = VibrationSchedule(0.05, amps)
        from vibrokit.simulate import full_rhs
        f = full_rhs(net, sched)
        U = dither_vector(red, sched)
        for _ in range(10):
            th = rng.uniform(-np.pi, np.pi, net.n)
            t = rng.uniform(0, 3)
            dth = f(t, th)
            st_ = reduce_state(red, th)
            d = dyn.rhs(t, np.concatenate([st_.x, st_.y]), U, sched.epsilon)
            np.testing.assert_allclose(d[:dyn.nx], red.B_hat_intra.T @ dth,
                                       atol=1e-10)
            np.testing.assert_allclose(d[dyn.nx:], red.B_hat_inter.T @ dth,
                                       atol=1e-10)
            # the split fields sum to the same x-velocity
            sample = U * np.sin(t / sched.epsilon) / sched.epsilon
            parts = (dyn.f_intra(st_.x) + dyn.f_inter(st_.x, st_.y)
                     + dyn.f_ctr(sample, st_.x))
            np.testing.assert_allclose(parts, d[:dyn.nx], atol=1e-10)
            np.testing.assert_allclose(
                dyn.g(st_.x, st_.y) + dyn.g_ctr(sample, st_.x), d[dyn.nx:],
                atol=1e-10)

    def test_central_difference_along_trajectory(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 3])
        red, mats, dyn = _setup(net, part)
        theta0 = rng.uniform(-1, 1, net.n)
        h = 1e-3
        tr = simulate_full(net, part, None, theta0, 1.0, h)
        xs = tr.states @ red.B_hat_intra
        i = 500
        fd = (xs[i + 1] - xs[i - 1]) / (2 * h)
        st_ = reduce_state(red, tr.states[i])
        exact = dyn.f_intra(st_.x) + dyn.f_inter(st_.x, st_.y)
        np.testing.assert_allclose(fd, exact, atol=1e-5)


class TestStateMaps:
    def test_manifold_maps_to_zero_x(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 2, 4])
        red = build_reduction(net, part)
        th = np.zeros(net.n)
        for c in part.clusters:
            th[list(c)] = rng.uniform(-3, 3)
        np.testing.assert_allclose(reduce_state(red, th).x, 0, atol=1e-15)
        np.testing.assert_array_equal(lift_error(th, part), 0)

    def test_zero_state(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 3])
        s = reduce_state(build_reduction(net, part), np.zeros(net.n))
        assert not s.x.any() and not s.y.any()

    def test_per_edge_subtraction(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 5])
        red = build_reduction(net, part)
        th = rng.normal(size=net.n)
        s = reduce_state(red, th)
        flat = [e for es in red.tree_intra_edges for e in es]
        np.testing.assert_allclose(s.x, [th[j] - th[i] for i, j in flat])
        np.testing.assert_allclose(
            s.y, [th[j] - th[i] for i, j in red.tree_inter_edges])

    def test_lift_error_wraps(self):
        part = ClusterPartition([[0, 1]])
        th = np.array([np.pi - 0.1, -np.pi + 0.1])
        assert lift_error(th, part)[0] == pytest.approx(0.2)

    def test_wrap_range(self, rng):
        a = rng.uniform(-50, 50, 1000)
        w = wrap(a)
        assert np.all(w > -np.pi) and np.all(w <= np.pi)
        np.testing.assert_allclose(np.cos(w), np.cos(a), atol=1e-12)
        assert wrap(np.pi) == pytest.approx(np.pi)
        assert wrap(-np.pi) == pytest.approx(np.pi)
