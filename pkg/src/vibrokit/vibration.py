"""Sinusoidal vibration schedules and the linearized cluster blocks.

A schedule amplitude ``u_ij`` keyed ``(i, j)`` enters the equation of node
``i``: ``theta_i' += (u_ij / eps) sin(t / eps) sin(theta_j - theta_i)``.
Amplitudes may differ between ``(i, j)`` and ``(j, i)``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

from .network import ClusterPartition, IncidenceReduction, OscillatorNetwork
from .reduction import ReductionMatrices

TRIANGULAR_TOL = 1e-12


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class VibrationSchedule:
    """Dither scale ``epsilon`` plus per-directed-edge amplitudes.

    Missing entries are zero. The dither period is ``2 * pi * epsilon``.
    """

    epsilon: float
    amplitudes: dict = field(default_factory=dict)

    def __post_init__(self):
        eps = float(self.epsilon)
        if not (np.isfinite(eps) and eps > 0):
            raise ScheduleError(f"epsilon must be positive, got {eps}")
        amps = {}
        for (i, j), u in dict(self.amplitudes).items():
            u = float(u)
            if not np.isfinite(u):
                raise ScheduleError(f"amplitude on ({i}, {j}) is not finite")
            if u != 0.0:
                amps[(int(i), int(j))] = u
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def zero(cls, epsilon=1.0):
        return cls(epsilon, {})

    @property
    def period(self):
        return 2 * np.pi * self.epsilon

    @property
    def is_zero(self):
        return not self.amplitudes

    def get(self, i, j):
        return self.amplitudes.get((i, j), 0.0)

    def scaled(self, c):
        return VibrationSchedule(self.epsilon, {e: c * u for e, u in
                                                self.amplitudes.items()})

    def with_epsilon(self, epsilon):
        return VibrationSchedule(epsilon, self.amplitudes)

    def merged(self, other):
        amps = dict(self.amplitudes)
        for e, u in other.amplitudes.items():
            amps[e] = amps.get(e, 0.0) + u
        return VibrationSchedule(self.epsilon, amps)

    def validate(self, net: OscillatorNetwork, part: ClusterPartition):
        """Raise :class:`ScheduleError` unless every keyed edge is intra."""
        lab = part.labels(net.n)
        for (i, j) in self.amplitudes:
            if not (0 <= i < net.n and 0 <= j < net.n):
                raise ScheduleError(f"amplitude on ({i}, {j}): node out of "
                                    "range")
            if net.weights[i, j] <= 0:
                raise ScheduleError(f"amplitude on ({i}, {j}): not an edge")
            if lab[i] != lab[j]:
                raise ScheduleError(f"amplitude on ({i}, {j}): inter-cluster "
                                    "edges cannot vibrate")

    def matrix(self, n):
        """Dense amplitude matrix ``U[i, j] = u_ij``."""
        U = np.zeros((n, n))
        for (i, j), u in self.amplitudes.items():
            U[i, j] = u
        return U

    def to_list(self):
        return [[i, j, u] for (i, j), u in sorted(self.amplitudes.items())]

    def digest(self):
        blob = json.dumps({"epsilon": self.epsilon, "amplitudes":
                           self.to_list()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def directed_edges(red: IncidenceReduction):
    """Directed-edge order ``[dir1 | dir2]`` as schedule keys.

    Intra column ``c`` joins ``i < j`` with incidence ``e_j - e_i``. Its dir1
    entry is the vibration acting on the head ``j`` (key ``(j, i)``); its
    dir2 entry, with incidence ``e_i - e_j``, acts on ``i`` (key ``(i, j)``).
    """
    edges = red.intra_edge_list
    return [(j, i) for i, j in edges] + [(i, j) for i, j in edges]


def dither_vector(red: IncidenceReduction, sched: VibrationSchedule):
    """Amplitudes in directed-edge order (``U_1`` diagonal, then ``U_2``)."""
    lookup = set(red.intra_edge_list)
    for (i, j) in sched.amplitudes:
        if (min(i, j), max(i, j)) not in lookup:
            raise ScheduleError(f"amplitude on ({i}, {j}) is not on an intra-"
                                "cluster edge")
    return np.array([sched.get(i, j) for i, j in directed_edges(red)])


@dataclass(frozen=True)
class LinearizedBlocks:
    """Per-cluster linearization: ``J`` blocks and dither generators.

    The periodic part is ``P_k(s) = P_hat_blocks[k] * sin(s)``.
    """

    J_blocks: tuple
    P_hat_blocks: tuple

    @property
    def J(self):
        return block_diag(*self.J_blocks)

    @property
    def P_hat(self):
        return block_diag(*self.P_hat_blocks)


def assemble_J(red: IncidenceReduction, mats: ReductionMatrices):
    """Jacobian of the intra field at the manifold, one block per cluster."""
    out = []
    for Bk, Bhk, Wk, Rk in zip(red.B_intra_blocks(), red.B_hat_intra_blocks(),
                               red.W_intra_blocks(), mats.R1_blocks):
        out.append(-Bhk.T @ Bk @ Wk @ Rk)
    return out


def assemble_P_hat(red: IncidenceReduction, mats: ReductionMatrices,
                   sched: VibrationSchedule):
    """Dither generators ``P_hat_k`` with ``P_k(s) = P_hat_k sin(s)``."""
    U = dither_vector(red, sched)
    m = len(red.intra_edge_list)
    U1, U2 = U[:m], U[m:]
    out = []
    for Bk, Bhk, Rk, s in zip(red.B_intra_blocks(), red.B_hat_intra_blocks(),
                              mats.R1_blocks, red.cluster_edge_slices()):
        M = np.clip(Bk, 0, None) * U1[s] - np.clip(-Bk, 0, None) * U2[s]
        out.append(-Bhk.T @ M @ Rk)
    return out


def linearize(red, mats, sched) -> LinearizedBlocks:
    return LinearizedBlocks(tuple(assemble_J(red, mats)),
                            tuple(assemble_P_hat(red, mats, sched)))


@dataclass(frozen=True)
class LowerTriangularDesign:
    """Schedule fragment that makes one cluster's generator nilpotent."""

    cluster: int
    amplitude: float
    edge: tuple
    amplitudes: dict
    inert: bool

    def schedule(self, epsilon):
        return VibrationSchedule(epsilon, self.amplitudes)


def design_lower_triangular(red: IncidenceReduction, k: int,
                            u: float) -> LowerTriangularDesign:
    """Vibrate the first tree edge of cluster ``k`` with opposite signs.

    With the tree edge ``(i, j)`` (``i < j``) as the first column of the
    cluster's blocks, setting ``U_1 = u e1 e1^T`` and ``U_2 = -u e1 e1^T``
    gives ``u_ji = u`` and ``u_ij = -u``. Both endpoints then receive the same
    forcing, the first tree difference is untouched and ``P_hat_k`` is zero
    outside its first column below the diagonal.

    For a two-node cluster the generator is the 1x1 zero matrix; the result
    is flagged ``inert``.
    """
    if not 0 <= k < red.r:
        raise ScheduleError(f"cluster {k} does not exist")
    nk = len(red.clusters[k])
    if nk < 2:
        raise ScheduleError(f"cluster {k} has fewer than two nodes")
    tree = red.tree_intra_edges[k]
    if red.intra_edges[k][0] != tree[0]:
        raise ScheduleError(f"cluster {k}: first intra column is not its "
                            "first tree edge")
    if nk >= 3:
        a, b = set(tree[0]), set(tree[1])
        if not a & b:
            raise ScheduleError(f"cluster {k}: first two tree edges do not "
                                "share a node")
    i, j = tree[0]
    amps = {}
    if u != 0:
        amps = {(j, i): float(u), (i, j): -float(u)}
    return LowerTriangularDesign(cluster=k, amplitude=float(u), edge=(i, j),
                                 amplitudes=amps, inert=nk == 2)


def is_strictly_lower_triangular(blocks, tol=TRIANGULAR_TOL):
    """Per-block check that everything on or above the diagonal vanishes."""
    return [bool(np.all(np.abs(np.triu(np.asarray(P))) <= tol))
            for P in blocks]

