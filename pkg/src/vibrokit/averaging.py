"""Transition matrices of the sinusoidal auxiliary system and partial averaging.

The auxiliary system is ``dx/ds = P_hat sin(s) x``. Because the generator
has a fixed direction its transition matrix is
``Phi(s, s0) = expm(-(cos s - cos s0) P_hat)``, a finite polynomial when
``P_hat`` is nilpotent.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy.linalg import block_diag, expm

DEFAULT_S0 = np.pi / 2
QUADRATURE_POINTS = 4096
NUMERIC_STEPS_PER_PERIOD = 2048


def _nilpotency_index(P, tol=1e-12):
    """Smallest ``m`` with ``P^m = 0`` (``None`` if not nilpotent)."""
    d = P.shape[0]
    M = np.eye(d)
    scale = max(1.0, np.abs(P).max(initial=0.0))
    for m in range(1, d + 1):
        M = M @ P
        if np.abs(M).max(initial=0.0) <= tol * scale ** m:
            return m
    return None


def _exp_nilpotent(A, m):
    """``expm(A)`` for ``A^m = 0`` via the terminating series."""
    d = A.shape[0]
    out = np.eye(d)
    term = np.eye(d)
    for k in range(1, m):
        term = term @ A / k
        out = out + term
    return out


class TransitionMatrix:
    """Per-cluster transition matrices ``Phi_k(s, s0)``.

    Parameters
    ----------
    P_hat_blocks : sequence of square arrays
    s0 : float
        Reference phase where ``Phi = I``.
    method : {"closed", "numerical"}
        ``"closed"`` evaluates the matrix exponential (terminating series
        for nilpotent generators). ``"numerical"`` integrates
        ``dPhi/ds = P(s) Phi`` with RK4 at ``steps_per_period`` steps per
        ``2 pi``.
    """

    def __init__(self, P_hat_blocks, s0=DEFAULT_S0, method="closed",
                 steps_per_period=NUMERIC_STEPS_PER_PERIOD):
        if method not in ("closed", "numerical"):
            raise ValueError(f"unknown method {method!r}")
        self.P_hat_blocks = [np.atleast_2d(np.asarray(P, float))
                             for P in P_hat_blocks]
        for P in self.P_hat_blocks:
            if P.shape[0] != P.shape[1]:
                raise ValueError("generator blocks must be square")
        self.s0 = float(s0)
        self.method = method
        self.steps_per_period = int(steps_per_period)
        self.nilpotency = [_nilpotency_index(P) for P in self.P_hat_blocks]

    @property
    def kind(self):
        if self.method == "numerical":
            return "numerically-integrated"
        if all(m is not None for m in self.nilpotency):
            return "closed-form-nilpotent"
        return "closed-form-expm"

    @property
    def dims(self):
        return [P.shape[0] for P in self.P_hat_blocks]

    def block(self, k, s):
        P = self.P_hat_blocks[k]
        if self.method == "numerical":
            return self._integrate(P, s)
        c = -(np.cos(s) - np.cos(self.s0))
        m = self.nilpotency[k]
        if m is not None:
            return _exp_nilpotent(c * P, m)
        return expm(c * P)

    def inverse_block(self, k, s):
        if self.method == "numerical":
            return np.linalg.inv(self.block(k, s))
        P = self.P_hat_blocks[k]
        c = np.cos(s) - np.cos(self.s0)
        m = self.nilpotency[k]
        if m is not None:
            return _exp_nilpotent(c * P, m)
        return expm(c * P)

    def block_batch(self, k, s, inverse=False):
        """Stack of ``Phi_k`` (or its inverse) at every phase in ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        m = self.nilpotency[k]
        if self.method == "numerical" or m is None:
            f = self.inverse_block if inverse else self.block
            return np.array([f(k, v) for v in s])
        P = self.P_hat_blocks[k]
        c = np.cos(s) - np.cos(self.s0)
        if not inverse:
            c = -c
        out = np.broadcast_to(np.eye(P.shape[0]), (s.size,) + P.shape).copy()
        term = np.eye(P.shape[0])
        for q in range(1, m):
            term = term @ P / q
            out += (c ** q)[:, None, None] * term
        return out

    def __call__(self, s):
        return [self.block(k, s) for k in range(len(self.P_hat_blocks))]

    def full(self, s):
        return block_diag(*self(s))

    def full_inverse(self, s):
        return block_diag(*[self.inverse_block(k, s)
                            for k in range(len(self.P_hat_blocks))])

    def monodromy(self):
        return self.full(self.s0 + 2 * np.pi)

    def _integrate(self, P, s):
        d = P.shape[0]
        span = s - self.s0
        n = max(1, int(np.ceil(abs(span) / (2 * np.pi)
                               * self.steps_per_period)))
        h = span / n
        Phi = np.eye(d)
        for i in range(n):
            a = self.s0 + i * h
            Pa, Pm, Pb = (P * np.sin(a), P * np.sin(a + h / 2),
                          P * np.sin(a + h))
            k1 = Pa @ Phi
            k2 = Pm @ (Phi + h / 2 * k1)
            k3 = Pm @ (Phi + h / 2 * k2)
            k4 = Pb @ (Phi + h * k3)
            Phi = Phi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return Phi


def transition_matrix(P_hat_blocks, s0=DEFAULT_S0, method="closed",
                      **kw) -> TransitionMatrix:
    return TransitionMatrix(P_hat_blocks, s0=s0, method=method, **kw)


def averaged_J(J_blocks, Phi: TransitionMatrix,
               quadrature_points=QUADRATURE_POINTS):
    """Period average of ``Phi^-1 J Phi`` per cluster.

    The trapezoid rule on a periodic integrand reduces to the mean over an
    equispaced grid and converges geometrically. Conjugation fixes the
    identity, so the scalar part ``tr(J)/d I`` is split off and only the
    traceless remainder is averaged; this keeps ill-conditioned transition
    matrices from polluting the part that cannot change.
    """
    grid = Phi.s0 + 2 * np.pi * np.arange(quadrature_points) / quadrature_points
    out = []
    for k, J in enumerate(J_blocks):
        J = np.atleast_2d(np.asarray(J, float))
        if J.shape[0] != Phi.dims[k]:
            raise ValueError(f"block {k}: J is {J.shape}, Phi is "
                             f"{Phi.dims[k]}")
        if not np.any(Phi.P_hat_blocks[k]):
            out.append(J.copy())
            continue
        shift = np.trace(J) / J.shape[0]
        scalar = shift * np.eye(J.shape[0])
        J = J - scalar
        if np.abs(J).max() <= 64 * np.finfo(float).eps * abs(shift):
            # scalar up to round-off; conjugating the residue would only
            # amplify it by the conditioning of Phi
            out.append(scalar)
            continue
        m = Phi.nilpotency[k]
        if Phi.method == "closed" and m is not None:
            out.append(scalar + _averaged_nilpotent(
                J, Phi.P_hat_blocks[k], m, np.cos(grid) - np.cos(Phi.s0)))
            continue
        acc = np.zeros_like(J)
        for s in grid:
            F = Phi.block(k, s)
            if Phi.method == "numerical":
                cond = np.linalg.cond(F)
                if not np.isfinite(cond) or cond > 1e12:
                    raise np.linalg.LinAlgError(
                        f"transition matrix singular at s={s:.6g}")
            acc += Phi.inverse_block(k, s) @ J @ F
        out.append(scalar + acc / quadrature_points)
    return out


def _averaged_nilpotent(J, P, m, c):
    """Grid mean of ``expm(cP) J expm(-cP)`` for ``P^m = 0``.

    Expanding both exponentials leaves ``sum_{a,b} (-1)^b c^(a+b) P^a J P^b
    / (a! b!)``, so only the grid moments of ``c`` are needed.
    """
    moments = [float(np.mean(c ** q)) for q in range(2 * m - 1)]
    powers = [np.eye(P.shape[0])]
    for _ in range(1, m):
        powers.append(powers[-1] @ P)
    out = np.zeros_like(J)
    for a in range(m):
        left = powers[a] @ J
        for b in range(m):
            coef = (-1) ** b * moments[a + b] / (factorial(a) * factorial(b))
            out += coef * (left @ powers[b])
    return out


def spectrum(A):
    ev = np.linalg.eigvals(np.atleast_2d(A))
    return ev[np.lexsort((ev.imag, ev.real))]


@dataclass
class EigenInvarianceReport:
    s0_samples: list
    spectra: list          # per s0: list of per-cluster eigenvalue arrays
    max_deviation: float
    consistent: bool


def eigenvalue_invariance_check(J_blocks, P_hat_blocks, s0_samples,
                                tol=1e-6, quadrature_points=QUADRATURE_POINTS):
    """Spectra of the averaged blocks at several reference phases."""
    spectra = []
    for s0 in s0_samples:
        Phi = transition_matrix(P_hat_blocks, s0=s0)
        Jb = averaged_J(J_blocks, Phi, quadrature_points)
        spectra.append([spectrum(B) for B in Jb])
    dev = 0.0
    for sp in spectra[1:]:
        for a, b in zip(spectra[0], sp):
            dev = max(dev, _spectral_distance(a, b))
    return EigenInvarianceReport(list(s0_samples), spectra, dev, dev <= tol)


def _spectral_distance(a, b):
    """Max distance after optimal matching (small dimensions)."""
    from scipy.optimize import linear_sum_assignment
    C = np.abs(a[:, None] - b[None, :])
    r, c = linear_sum_assignment(C)
    return float(C[r, c].max(initial=0.0))


def averaging_deviation(J, P_hat, x0, epsilon, horizon, s0=DEFAULT_S0,
                        steps_per_period=64):
    """Sup-norm gap between the periodic linear system and its average.

    The full system is ``x' = (J + P_hat sin(t/eps) / eps) x``. The averaged
    prediction is ``Phi(t/eps, s0) expm(J_bar t) Phi(0, s0)^-1 x0``.
    """
    from .simulate import rk4

    J = np.atleast_2d(np.asarray(J, float))
    P_hat = np.atleast_2d(np.asarray(P_hat, float))
    x0 = np.asarray(x0, float)
    Phi = transition_matrix([P_hat], s0=s0)
    Jb = averaged_J([J], Phi)[0]
    period = 2 * np.pi * epsilon
    dt = period / steps_per_period
    n = int(np.ceil(horizon / dt))
    dt = horizon / n
    times, xs = rk4(lambda t, x: (J + P_hat * (np.sin(t / epsilon) / epsilon))
                    @ x, 0.0, x0, dt, n)
    z0 = Phi.inverse_block(0, 0.0) @ x0
    dev = 0.0
    for t, x in zip(times, xs):
        pred = Phi.block(0, t / epsilon) @ expm(Jb * t) @ z0
        dev = max(dev, float(np.max(np.abs(x - pred))))
    return dev


def epsilon_refinement(J, P_hat, x0, eps0, horizon, halvings=2,
                       s0=DEFAULT_S0):
    """Deviation at ``eps0, eps0/2, ...`` plus successive ratios and orders."""
    eps = [eps0 / 2 ** i for i in range(halvings + 1)]
    devs = [averaging_deviation(J, P_hat, x0, e, horizon, s0) for e in eps]
    ratios = [devs[i] / devs[i + 1] for i in range(halvings)]
    orders = [float(np.log2(q)) for q in ratios]
    return {"epsilon": eps, "deviation": devs, "ratio": ratios,
            "order": orders}
