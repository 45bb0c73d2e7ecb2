"""Phase-difference coordinates and the compact reduced vector fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .network import ClusterPartition, IncidenceReduction, OscillatorNetwork

PINV_RCOND = 1e-12
IDENTITY_TOL = 1e-10


class ReductionError(ValueError):
    pass


def pinv(M):
    return np.linalg.pinv(M, rcond=PINV_RCOND)


@dataclass(frozen=True)
class ReductionMatrices:
    """Maps tree-edge differences to all edge differences: ``B^T = R B_hat^T``.

    ``R = [[R1, 0], [R2, R3]]`` with ``R1`` block-diagonal over clusters.
    """

    R1: np.ndarray
    R2: np.ndarray
    R3: np.ndarray
    R1_blocks: tuple

    @property
    def R(self):
        top = np.hstack([self.R1, np.zeros((self.R1.shape[0],
                                            self.R3.shape[1]))])
        return np.vstack([top, np.hstack([self.R2, self.R3])])


def compute_R(red: IncidenceReduction) -> ReductionMatrices:
    """Compute ``R1``, ``R2``, ``R3`` from pseudoinverses of the tree blocks.

    Raises
    ------
    ReductionError
        If the identity ``B^T = R B_hat^T`` is violated beyond 1e-10, which
        only happens for malformed incidence input.
    """
    blocks = []
    for Bk, Bhk in zip(red.B_intra_blocks(), red.B_hat_intra_blocks()):
        blocks.append(Bk.T @ pinv(Bhk.T))
    R1 = block_diag(*blocks) if blocks else np.zeros((0, 0))
    n = red.n
    Bhi, Bhe = red.B_hat_intra, red.B_hat_inter
    P_intra = np.eye(n) - Bhi @ pinv(Bhi)
    P_inter = np.eye(n) - Bhe @ pinv(Bhe)
    R2 = red.B_inter.T @ pinv(Bhi.T @ P_inter)
    R3 = red.B_inter.T @ pinv(Bhe.T @ P_intra)
    # pinv of an empty product is empty; keep shapes conformal
    R2 = R2.reshape(red.B_inter.shape[1], Bhi.shape[1])
    R3 = R3.reshape(red.B_inter.shape[1], Bhe.shape[1])
    # tree-edge rows are exact 0/1 patterns; strip round-off there
    R1 = np.where(np.abs(R1 - np.round(R1)) < 1e-12, np.round(R1), R1)
    mats = ReductionMatrices(R1=R1, R2=R2, R3=R3, R1_blocks=tuple(blocks))
    resid = np.max(np.abs(red.B.T - mats.R @ red.B_hat.T), initial=0.0)
    if resid > IDENTITY_TOL:
        raise ReductionError(
            f"B^T = R B_hat^T violated (residual {resid:.3e})")
    return mats


@dataclass(frozen=True)
class ReducedState:
    """Intra (``x``) and inter (``y``) cluster phase differences, unwrapped."""

    x: np.ndarray
    y: np.ndarray

    def wrapped(self):
        return ReducedState(wrap(self.x), wrap(self.y))


def wrap(a):
    """Wrap angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)


def reduce_state(red: IncidenceReduction, theta) -> ReducedState:
    theta = np.asarray(theta, dtype=float)
    return ReducedState(red.B_hat_intra.T @ theta, red.B_hat_inter.T @ theta)


def lift_error(theta, part: ClusterPartition) -> np.ndarray:
    """Per-cluster max wrapped pairwise phase gap.

    ``theta`` may be a single state ``(n,)`` or a stack ``(m, n)``; the
    result then has shape ``(r,)`` or ``(m, r)``.
    """
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    th = np.atleast_2d(theta)
    out = np.empty((th.shape[0], part.r))
    for k, c in enumerate(part.clusters):
        p = th[:, list(c)]
        d = np.abs(wrap(p[:, :, None] - p[:, None, :]))
        out[:, k] = d.reshape(th.shape[0], -1).max(axis=1)
    return out[0] if single else out


class CompactDynamics:
    """The five reduced vector fields with their constant factors cached.

    Dither samples are vectors of instantaneous values ``u_ij * sin(s)`` in
    directed-edge order ``[dir1 | dir2]`` (see
    :func:`vibrokit.vibration.directed_edges`).
    """

    def __init__(self, net: OscillatorNetwork, red: IncidenceReduction,
                 mats: ReductionMatrices):
        self.net, self.red, self.mats = net, red, mats
        Bhi, Bhe = red.B_hat_intra, red.B_hat_inter
        Bi, Be = red.B_intra, red.B_inter
        wi = np.diag(red.W_intra)
        we = np.diag(red.W_inter)
        self.R1, self.R2, self.R3 = mats.R1, mats.R2, mats.R3
        self._intra_x = -(Bhi.T @ Bi) * wi
        self._inter_x = -(Bhi.T @ Be) * we
        self._intra_y = -(Bhe.T @ Bi) * wi
        self._inter_y = -(Bhe.T @ Be) * we
        self._omega_y = Bhe.T @ net.frequencies
        self._ctr_pos_x = -(Bhi.T @ np.clip(Bi, 0, None))
        self._ctr_neg_x = Bhi.T @ np.clip(-Bi, 0, None)
        self._ctr_pos_y = -(Bhe.T @ np.clip(Bi, 0, None))
        self._ctr_neg_y = Bhe.T @ np.clip(-Bi, 0, None)
        self.m_intra = Bi.shape[1]
        self.nx = Bhi.shape[1]
        self.ny = Bhe.shape[1]

    def _check(self, x, y=None, U=None):
        if np.shape(x) != (self.nx,):
            raise ValueError(f"x must have length {self.nx}")
        if y is not None and np.shape(y) != (self.ny,):
            raise ValueError(f"y must have length {self.ny}")
        if U is not None and np.shape(U) != (2 * self.m_intra,):
            raise ValueError(f"dither sample must have length "
                             f"{2 * self.m_intra}")

    def f_intra(self, x):
        self._check(x)
        return self._intra_x @ np.sin(self.R1 @ x)

    def f_inter(self, x, y):
        self._check(x, y)
        return self._inter_x @ np.sin(self.R2 @ x + self.R3 @ y)

    def f_ctr(self, U, x):
        self._check(x, U=U)
        s = np.sin(self.R1 @ x)
        m = self.m_intra
        return self._ctr_pos_x @ (U[:m] * s) + self._ctr_neg_x @ (U[m:] * s)

    def g(self, x, y):
        self._check(x, y)
        return (self._omega_y + self._intra_y @ np.sin(self.R1 @ x)
                + self._inter_y @ np.sin(self.R2 @ x + self.R3 @ y))

    def g_ctr(self, U, x):
        self._check(x, U=U)
        s = np.sin(self.R1 @ x)
        m = self.m_intra
        return self._ctr_pos_y @ (U[:m] * s) + self._ctr_neg_y @ (U[m:] * s)

    def rhs(self, t, state, dither=None, epsilon=1.0):
        """Right-hand side of the reduced model in physical time ``t``.

        ``dither`` is the amplitude vector in directed-edge order; the
        applied sample is ``dither * sin(t / epsilon) / epsilon``.
        """
        x, y = state[:self.nx], state[self.nx:]
        sx = np.sin(self.R1 @ x)
        se = np.sin(self.R2 @ x + self.R3 @ y)
        dx = self._intra_x @ sx + self._inter_x @ se
        dy = self._omega_y + self._intra_y @ sx + self._inter_y @ se
        if dither is not None:
            m = self.m_intra
            U = dither * (np.sin(t / epsilon) / epsilon)
            a, b = U[:m] * sx, U[m:] * sx
            dx = dx + self._ctr_pos_x @ a + self._ctr_neg_x @ b
            dy = dy + self._ctr_pos_y @ a + self._ctr_neg_y @ b
        return np.concatenate([dx, dy])
