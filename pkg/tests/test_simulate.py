import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vibrokit.network import ClusterPartition, OscillatorNetwork, build_reduction
from vibrokit.reduction import CompactDynamics, compute_R, reduce_state
from vibrokit.simulate import (IntegrationError, StepSizeError, Trajectory,
                               full_rhs, manifold_initial_phases,
                               simulate_full, simulate_reduced, verdict)
from vibrokit.vibration import VibrationSchedule, design_lower_triangular

from conftest import random_clustered_network


def _pair(a):
    net = OscillatorNetwork([[0, a], [a, 0]], [0.3, 0.3])
    return net, ClusterPartition([[0, 1]])


def test_single_free_oscillator():
    net = OscillatorNetwork([[0.0]], [2.0])
    part = ClusterPartition([[0]])
    tr = simulate_full(net, part, None, [0.4], 1.0, 0.01)
    assert tr.states[-1, 0] == pytest.approx(2.4, abs=1e-10)


def test_two_oscillators_closed_form():
    # delta' = -2a sin(delta) integrates to tan(delta/2) = tan(d0/2) e^{-2at}
    a, d0 = 0.7, 0.1
    net, part = _pair(a)
    tr = simulate_full(net, part, None, [0.0, d0], 5.0, 0.01)
    delta = tr.states[:, 1] - tr.states[:, 0]
    exact = 2 * np.arctan(np.tan(d0 / 2) * np.exp(-2 * a * tr.times))
    assert np.max(np.abs(delta - exact)) <= 1e-8


def test_bundled_uncontrolled_not_converged(bundled):
    cfg, net, part = bundled
    th0 = manifold_initial_phases(part, net.n, seed=cfg.simulation.seed)
    tr = simulate_full(net, part, None, th0, 240.0, 0.01)
    v = verdict(tr, part)
    assert not v.converged
    assert v.tail_max_error[0] > 0.1


def test_step_size_guard():
    net, part = _pair(1.0)
    sched = VibrationSchedule(0.02, {(0, 1): 1.0})
    with pytest.raises(StepSizeError, match="epsilon/20"):
        simulate_full(net, part, sched, [0, 0.1], 1.0, 0.002)
    simulate_full(net, part, sched, [0, 0.1], 0.1, 0.001)
    with pytest.raises(StepSizeError):
        simulate_full(net, part, None, [0, 0.1], 1.0, 0.3)


def test_non_finite_aborts():
    # the RK4 stage sum overflows to inf
    net = OscillatorNetwork([[0, 1.0], [1.0, 0]], [1e308, 1e308])
    with pytest.raises(IntegrationError):
        simulate_full(net, ClusterPartition([[0, 1]]), None, [0, 1.0], 1.0,
                      0.5)


def test_theta0_length_checked():
    net, part = _pair(1.0)
    with pytest.raises(ValueError):
        simulate_full(net, part, None, [0.0], 1.0, 0.1)


def test_invalid_schedule_rejected():
    net, part = _pair(1.0)
    from vibrokit.vibration import ScheduleError
    with pytest.raises(ScheduleError):
        simulate_full(net, part, VibrationSchedule(0.1, {(0, 5): 1.0}),
                      [0, 0], 0.1, 0.001)


def test_deterministic(rng):
    net, part = random_clustered_network(rng, sizes=[3, 3])
    red = build_reduction(net, part)
    sched = VibrationSchedule(0.05, design_lower_triangular(red, 0, 1.0)
                              .amplitudes)
    th0 = rng.normal(size=net.n)
    a = simulate_full(net, part, sched, th0, 1.0, 0.0025)
    b = simulate_full(net, part, sched, th0, 1.0, 0.0025)
    np.testing.assert_array_equal(a.states, b.states)
    assert a.schedule_digest == sched.digest()


def test_full_rhs_matches_dense_formula(rng):
    net, part = random_clustered_network(rng, sizes=[3, 4])
    red = build_reduction(net, part)
    sched = VibrationSchedule(0.1, {(j, i): rng.normal()
                                    for i, j in red.intra_edge_list})
    f = full_rhs(net, sched)
    U = sched.matrix(net.n)
    for t in (0.0, 0.37, 1.9):
        th = rng.uniform(-3, 3, net.n)
        K = net.weights + U * np.sin(t / 0.1) / 0.1
        dense = net.frequencies + (K * np.sin(th[None, :] - th[:, None])).sum(1)
        np.testing.assert_allclose(f(t, th), dense, atol=1e-12)


class TestReduced:
    def _dyn(self, net, part):
        red = build_reduction(net, part)
        return CompactDynamics(net, red, compute_R(red))

    def test_manifold_invariance(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 4, 3])
        dyn = self._dyn(net, part)
        y0 = rng.uniform(-np.pi, np.pi, dyn.ny)
        tr = simulate_reduced(dyn, None, np.zeros(dyn.nx), y0, 10.0, 0.01)
        drift = np.max(np.abs(tr.states[:, :dyn.nx]))
        assert drift <= 1e-9 * 10

    def test_manifold_invariance_under_dither(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 3])
        dyn = self._dyn(net, part)
        sched = VibrationSchedule(0.05, design_lower_triangular(
            dyn.red, 0, 2.0).amplitudes)
        tr = simulate_reduced(dyn, sched, np.zeros(dyn.nx),
                              rng.normal(size=dyn.ny), 2.0, 0.0025)
        assert np.max(np.abs(tr.states[:, :dyn.nx])) <= 1e-12

    def test_zero_network_constant(self):
        net = OscillatorNetwork.from_edges(4, [(0, 1, 0.0), (2, 3, 0.0)],
                                           np.zeros(4))
        th0 = np.array([0.1, 0.5, -0.2, 0.9])
        tr = simulate_full(net, ClusterPartition([[0, 1, 2, 3]]), None, th0,
                           3.0, 0.1)
        np.testing.assert_array_equal(tr.states[-1], th0)

    def test_zero_frequencies_on_manifold_constant(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 3])
        net = OscillatorNetwork(net.weights, np.zeros(net.n))
        dyn = self._dyn(net, part)
        y0 = np.array([0.0])
        tr = simulate_reduced(dyn, None, np.zeros(dyn.nx), y0, 2.0, 0.01)
        np.testing.assert_allclose(tr.states, 0, atol=1e-15)

    def test_equivalence_with_full_model(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 4])
        dyn = self._dyn(net, part)
        sched = VibrationSchedule(0.1, design_lower_triangular(
            dyn.red, 1, 1.5).amplitudes)
        th0 = manifold_initial_phases(part, net.n, seed=3,
                                      cluster_phases=[0.0, 1.0])
        full = simulate_full(net, part, sched, th0, 3.0, 0.005)
        s0 = reduce_state(dyn.red, th0)
        red_tr = simulate_reduced(dyn, sched, s0.x, s0.y, 3.0, 0.005)
        proj = np.array([np.concatenate([reduce_state(dyn.red, th).x,
                                         reduce_state(dyn.red, th).y])
                         for th in full.states])
        assert np.max(np.abs(proj - red_tr.states)) <= 1e-6

    def test_shape_checked(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 3])
        dyn = self._dyn(net, part)
        with pytest.raises(ValueError):
            simulate_reduced(dyn, None, np.zeros(dyn.nx + 1), np.zeros(1),
                             1.0, 0.1)


class TestVerdict:
    def _traj(self, states):
        states = np.atleast_2d(states)
        times = np.arange(len(states), dtype=float)
        return Trajectory(times, states, "full", 1.0,
                          tuple(f"theta_{i + 1}" for i in
                                range(states.shape[1])))

    def test_equal_phases(self):
        part = ClusterPartition([[0, 1, 2]])
        v = verdict(self._traj(np.full((10, 3), 0.7)), part)
        assert v.converged
        np.testing.assert_array_equal(v.terminal_error, 0)

    def test_spread_on_circle(self):
        part = ClusterPartition([[0, 1, 2, 3, 4]])
        th = 2 * np.pi * np.arange(5) / 5
        v = verdict(self._traj(np.tile(th, (10, 1))), part)
        assert not v.converged
        gaps = [abs((a - b + np.pi) % (2 * np.pi) - np.pi) for a in th
                for b in th]
        assert v.terminal_error[0] == pytest.approx(max(gaps))

    def test_tail_window_only(self):
        part = ClusterPartition([[0, 1]])
        th = np.zeros((11, 2))
        th[:8, 1] = 1.0   # large error only before the final 20%
        v = verdict(self._traj(th), part)
        assert v.converged and v.tail_start == pytest.approx(8.0)
        th[9, 1] = 0.02
        assert not verdict(self._traj(th), part).converged

    def test_converged_implies_tail_below_tol(self, rng):
        part = ClusterPartition([[0, 1], [2, 3]])
        for _ in range(20):
            states = rng.normal(scale=rng.uniform(1e-4, 0.1), size=(30, 4))
            v = verdict(self._traj(states), part, tol_sync=0.05)
            if v.converged:
                assert np.all(v.tail_max_error < 0.05)

    def test_reduced_trajectory_rejected(self):
        tr = Trajectory(np.zeros(1), np.zeros((1, 1)), "reduced", 1.0, ("x_1",))
        with pytest.raises(ValueError):
            verdict(tr, ClusterPartition([[0, 1]]))


class TestProperties:
    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 10**6), c=st.floats(-10, 10))
    def test_rotational_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        net, part = random_clustered_network(rng, sizes=[3, 3])
        red = build_reduction(net, part)
        sched = VibrationSchedule(0.05, design_lower_triangular(
            red, 0, 1.0).amplitudes)
        th0 = rng.uniform(-1, 1, net.n)
        a = simulate_full(net, part, sched, th0, 1.0, 0.0025)
        b = simulate_full(net, part, sched, th0 + c, 1.0, 0.0025)
        da = a.states - a.states[:, :1]
        db = b.states - b.states[:, :1]
        assert np.max(np.abs(da - db)) <= 1e-9

    def test_dither_zero_mean_over_period(self):
        a, u, eps = 0.8, 2.5, 0.03
        s = np.linspace(0, 2 * np.pi * eps, 4096, endpoint=False)
        w = a + (u / eps) * np.sin(s / eps)
        assert np.mean(w) == pytest.approx(a, abs=1e-12)

    def test_rk4_order(self, rng):
        net, part = random_clustered_network(rng, sizes=[3, 3])
        th0 = rng.uniform(-1, 1, net.n)
        ends = [simulate_full(net, part, None, th0, 2.0, dt).states[-1]
                for dt in (0.1, 0.05, 0.025)]
        e1 = np.max(np.abs(ends[0] - ends[1]))
        e2 = np.max(np.abs(ends[1] - ends[2]))
        assert np.log2(e1 / e2) >= 3.5


def test_csv_export(tmp_path):
    net, part = _pair(1.0)
    tr = simulate_full(net, part, None, [0.0, 0.3], 1.0, 0.1)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["t", "theta_1", "theta_2"]
    assert len(rows) == 12
    assert float(rows[-1][1]) == tr.states[-1, 0]   # 17 digits round-trip
    tr.to_csv(p, max_rows=5)
    assert len(list(csv.reader(open(p)))) == 6


def test_initial_phases_seeded():
    part = ClusterPartition([[0, 1], [2, 3, 4]])
    a = manifold_initial_phases(part, 5, seed=1)
    np.testing.assert_array_equal(a, manifold_initial_phases(part, 5, seed=1))
    assert np.all(np.abs(a) <= 0.1)
    b = manifold_initial_phases(part, 5, seed=1, perturbation=0.0,
                                cluster_phases=[1.0, 2.0])
    np.testing.assert_array_equal(b, [1, 1, 2, 2, 2])
