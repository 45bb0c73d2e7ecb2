"""Lyapunov robustness, perturbation growth bounds and the small-gain certificate."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .averaging import (DEFAULT_S0, QUADRATURE_POINTS, averaged_J, spectrum,
                        transition_matrix)
from .network import (ClusterPartition, IncidenceReduction, OscillatorNetwork,
                      build_reduction, validate_invariance)
from .reduction import ReductionMatrices, compute_R
from .vibration import VibrationSchedule, linearize

HURWITZ_MARGIN = -1e-9
LYAPUNOV_RESIDUAL_TOL = 1e-10
LYAPUNOV_COND_LIMIT = 1e13


class CertificationError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class LyapunovError(np.linalg.LinAlgError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


def is_hurwitz(A, margin=HURWITZ_MARGIN):
    A = np.atleast_2d(A)
    if A.size == 0:
        return True
    return bool(np.linalg.eigvals(A).real.max() < margin)


def solve_lyapunov(A):
    """Solve ``A^T X + X A = -I`` through the vectorized Kronecker system.

    Raises
    ------
    LyapunovError
        When the Kronecker operator is numerically singular (some pair of
        eigenvalues sums to roughly zero). ``condition`` holds its estimate.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    d = A.shape[0]
    if A.shape != (d, d):
        raise ValueError("A must be square")
    if d == 0:
        return np.zeros((0, 0))
    eye = np.eye(d)
    # row-major vec: vec(A^T X) = (A^T kron I) vec X, vec(X A) = (I kron A^T)
    L = np.kron(A.T, eye) + np.kron(eye, A.T)
    cond = np.linalg.cond(L)
    if not np.isfinite(cond) or cond > LYAPUNOV_COND_LIMIT:
        raise LyapunovError(f"Lyapunov operator is near-singular "
                            f"(condition {cond:.3e})", cond)
    X = np.linalg.solve(L, -eye.ravel()).reshape(d, d)
    return 0.5 * (X + X.T)


def robustness(X):
    """``1 / lambda_max(X)`` for symmetric positive-definite ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.size == 0:
        return np.inf
    if not np.allclose(X, X.T, atol=1e-12 * max(1.0, np.abs(X).max())):
        raise ValueError("X is not symmetric")
    ev = np.linalg.eigvalsh(X)
    if ev[0] <= 0:
        raise ValueError(f"X is not positive definite (min eigenvalue "
                         f"{ev[0]:.3e})")
    return float(1.0 / ev[-1])


def lyapunov_robustness(A):
    return robustness(solve_lyapunov(A))


def _block_slices(dims):
    out, start = [], 0
    for d in dims:
        out.append(slice(start, start + d))
        start += d
    return out


def _inter_row_blocks(red: IncidenceReduction):
    """Row blocks ``M_k`` of ``B_hat_intra^T B_inter W_inter``."""
    M = red.B_hat_intra.T @ red.B_inter @ red.W_inter
    dims = [len(c) - 1 for c in red.clusters]
    return [M[s] for s in _block_slices(dims)], dims


def gamma_bounds(red: IncidenceReduction, mats: ReductionMatrices, Phi,
                 method="analytic", quadrature_points=256, samples=10_000,
                 seed=0):
    """Growth constants ``gamma[k, l]`` of the inter-cluster coupling.

    ``analytic`` is the sup over a phase grid of
    ``|Phi_k^-1|_2 |M_k|_2 |(R2 Phi)[:, block l]|_2``, which bounds the
    coupling because sine is 1-Lipschitz and vanishes on the manifold.
    ``sampled`` estimates the tightest such constant by random search, with
    each sample supported on a single block ``l``.
    """
    if method not in ("analytic", "sampled"):
        raise ValueError(f"unknown gamma method {method!r}")
    r = red.r
    Mk, dims = _inter_row_blocks(red)
    slices = _block_slices(dims)
    if red.B_inter.shape[1] == 0:
        return np.zeros((r, r))
    grid = Phi.s0 + 2 * np.pi * np.arange(quadrature_points) / quadrature_points
    if method == "analytic":
        gamma = np.zeros((r, r))
        Mnorm = [np.linalg.norm(M, 2) if M.size else 0.0 for M in Mk]
        for s in grid:
            F = Phi.full(s)
            RF = mats.R2 @ F
            for k in range(r):
                if dims[k] == 0:
                    continue
                inv_n = np.linalg.norm(Phi.inverse_block(k, s), 2)
                for l in range(r):
                    if dims[l] == 0:
                        continue
                    g = inv_n * Mnorm[k] * np.linalg.norm(RF[:, slices[l]], 2)
                    gamma[k, l] = max(gamma[k, l], g)
        return gamma
    return _sampled_gamma(red, mats, Phi, Mk, slices, samples, seed)


def inter_coupling(red, mats, Phi, s, z, y):
    """Per-cluster ``Phi_k^-1 f_inter_k(Phi z, y)`` as a list of vectors."""
    Mk, dims = _inter_row_blocks(red)
    x = Phi.full(s) @ z
    arg = mats.R2 @ x + mats.R3 @ y
    base = np.sin(arg) - np.sin(mats.R3 @ y)
    return [-Phi.inverse_block(k, s) @ (Mk[k] @ base) for k in range(red.r)]


def _sampled_gamma(red, mats, Phi, Mk, slices, samples, seed, batch=2000):
    """Random search for the coupling growth, batched over samples.

    ``Phi`` is block diagonal, so ``Phi z`` stays in block ``l`` when ``z``
    does and only ``Phi_l`` is needed for the argument.
    """
    rng = np.random.default_rng(seed)
    r = red.r
    ny = mats.R3.shape[1]
    gamma = np.zeros((r, r))
    live = [l for l in range(r) if slices[l].stop > slices[l].start]
    if not live:
        return gamma
    per_block = -(-samples // len(live))
    for l in live:
        dl = slices[l].stop - slices[l].start
        R2l = mats.R2[:, slices[l]]
        done = 0
        while done < per_block:
            q = min(batch, per_block - done)
            done += q
            s = rng.uniform(0, 2 * np.pi, q)
            z = rng.normal(size=(q, dl)) * 10.0 ** rng.uniform(-3, 0.5, (q, 1))
            y = rng.uniform(-np.pi, np.pi, (q, ny))
            zn = np.linalg.norm(z, axis=1)
            x = np.einsum("qij,qj->qi", Phi.block_batch(l, s), z)
            base = y @ mats.R3.T
            diff = np.sin(x @ R2l.T + base) - np.sin(base)
            for k in range(r):
                if Mk[k].shape[0] == 0:
                    continue
                inv = Phi.block_batch(k, s, inverse=True)
                v = np.einsum("qij,qj->qi", inv, diff @ Mk[k].T)
                ratio = np.linalg.norm(v, axis=1) / zn
                gamma[k, l] = max(gamma[k, l], float(ratio.max()))
    return gamma


def build_S(robustness_controlled, gamma):
    lam = np.asarray(robustness_controlled, dtype=float)
    S = -np.asarray(gamma, dtype=float).copy()
    S[np.diag_indices_from(S)] += lam
    return S


@dataclass(frozen=True)
class MMatrixVerdict:
    is_m_matrix: bool
    minors: list
    failing_minor: int | None
    spectrum: list
    reason: str

    def __bool__(self):
        return self.is_m_matrix


def is_m_matrix(S) -> MMatrixVerdict:
    """Z-matrix test plus positivity of every leading principal minor."""
    S = np.atleast_2d(np.asarray(S, dtype=float))
    ev = np.linalg.eigvals(S) if S.size else np.zeros(0)
    ev_list = [complex(v) for v in ev]
    off = S - np.diag(np.diag(S))
    if np.any(off > 0):
        return MMatrixVerdict(False, [], None, ev_list,
                              "positive off-diagonal entry (not a Z-matrix)")
    minors = []
    for k in range(1, S.shape[0] + 1):
        m = float(np.linalg.det(S[:k, :k]))
        minors.append(m)
        if m <= 0:
            return MMatrixVerdict(False, minors, k, ev_list,
                                  f"leading minor {k} is {m:.6g}")
    return MMatrixVerdict(True, minors, None, ev_list,
                          "all leading principal minors positive")


@dataclass
class StabilityCertificate:
    s0: float
    J_blocks: list
    P_hat_blocks: list
    J_bar_blocks: list
    spectra_J: list
    spectra_J_bar: list
    hurwitz_J: list
    hurwitz_J_bar: bool
    X: list
    X_bar: list
    robustness_uncontrolled: list
    robustness_controlled: list
    gamma_analytic: np.ndarray
    gamma_sampled: np.ndarray | None
    gamma_method: str
    S: np.ndarray
    m_matrix: MMatrixVerdict
    theorem1_satisfied: bool
    transition_kind: str
    notes: list = field(default_factory=list)

    @property
    def gamma_bar(self):
        if self.gamma_method == "sampled":
            return self.gamma_sampled
        return self.gamma_analytic

    @property
    def guideline(self):
        return {"J_bar_hurwitz": self.hurwitz_J_bar,
                "S_is_M_matrix": self.m_matrix.is_m_matrix,
                "high_frequency": "see estimate_eps_star"}

    def to_dict(self):
        def mats(lst):
            return [np.asarray(m).tolist() for m in lst]

        def cplx(lst):
            return [[[float(v.real), float(v.imag)] for v in sp] for sp in lst]

        def num(v):
            return None if v is None or not np.isfinite(v) else float(v)
        return {
            "s0": self.s0,
            "transition_kind": self.transition_kind,
            "J": mats(self.J_blocks),
            "P_hat": mats(self.P_hat_blocks),
            "J_bar": mats(self.J_bar_blocks),
            "spectrum_J": cplx(self.spectra_J),
            "spectrum_J_bar": cplx(self.spectra_J_bar),
            "hurwitz_J": self.hurwitz_J,
            "hurwitz_J_bar": self.hurwitz_J_bar,
            "X": mats(self.X),
            "X_bar": mats(self.X_bar),
            "robustness_uncontrolled": [num(v) for v in
                                        self.robustness_uncontrolled],
            "robustness_controlled": [num(v) for v in
                                      self.robustness_controlled],
            "gamma_analytic": np.asarray(self.gamma_analytic).tolist(),
            "gamma_sampled": None if self.gamma_sampled is None else
            np.asarray(self.gamma_sampled).tolist(),
            "gamma_method": self.gamma_method,
            "S": np.asarray(self.S).tolist(),
            "m_matrix": {"verdict": self.m_matrix.is_m_matrix,
                         "minors": self.m_matrix.minors,
                         "failing_minor": self.m_matrix.failing_minor,
                         "spectrum": [[v.real, v.imag] for v in
                                      self.m_matrix.spectrum],
                         "reason": self.m_matrix.reason},
            "theorem1_satisfied": self.theorem1_satisfied,
            "guideline": self.guideline,
            "notes": list(self.notes),
        }


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except CertificationError:
        raise
    except Exception as exc:  # tag and re-raise
        raise CertificationError(name, str(exc)) from exc


def certify(net: OscillatorNetwork, part: ClusterPartition,
            sched: VibrationSchedule, s0=DEFAULT_S0,
            quadrature_points=QUADRATURE_POINTS, gamma_method="analytic",
            gamma_samples=10_000, seed=0, red=None) -> StabilityCertificate:
    """Run the averaged small-gain pipeline on one schedule.

    Blocks that are not Hurwitz get no Lyapunov solution; their robustness
    is reported as ``nan`` and the certificate fails.
    """
    inv = _stage("invariance", validate_invariance, net, part)
    if not inv.passed:
        raise CertificationError("invariance", inv.summary())
    if red is None:
        red = _stage("reduction", build_reduction, net, part)
    mats = _stage("reduction", compute_R, red)
    if sched is None:
        sched = VibrationSchedule.zero()
    _stage("schedule", sched.validate, net, part)
    lin = _stage("linearize", linearize, red, mats, sched)
    Phi = _stage("transition", transition_matrix, lin.P_hat_blocks, s0)
    Jb = _stage("average", averaged_J, lin.J_blocks, Phi, quadrature_points)

    notes = []
    hurwitz_J = [is_hurwitz(J) for J in lin.J_blocks]
    hurwitz_each = [is_hurwitz(B) for B in Jb]
    X, Xb, rob_u, rob_c = [], [], [], []
    for k, (J, B) in enumerate(zip(lin.J_blocks, Jb)):
        if hurwitz_J[k]:
            Xk = _stage("lyapunov", solve_lyapunov, J)
            X.append(Xk)
            rob_u.append(robustness(Xk))
        else:
            X.append(None)
            rob_u.append(float("nan"))
            notes.append(f"cluster {k}: J is not Hurwitz")
        if hurwitz_each[k]:
            Xk = _stage("lyapunov", solve_lyapunov, B)
            Xb.append(Xk)
            rob_c.append(robustness(Xk))
        else:
            Xb.append(None)
            rob_c.append(float("nan"))
            notes.append(f"cluster {k}: averaged J is not Hurwitz")
    g_an = _stage("gamma", gamma_bounds, red, mats, Phi, "analytic")
    g_sa = None
    if gamma_method == "sampled" or gamma_samples:
        g_sa = _stage("gamma", gamma_bounds, red, mats, Phi, "sampled",
                      samples=gamma_samples, seed=seed)
    gamma = g_sa if gamma_method == "sampled" else g_an
    # a non-Hurwitz block gets a negative diagonal so S cannot pass
    lam = [v if np.isfinite(v) else -1.0 for v in rob_c]
    S = build_S(lam, gamma)
    mv = is_m_matrix(S)
    hurwitz_bar = all(hurwitz_each)
    return StabilityCertificate(
        s0=float(s0), J_blocks=list(lin.J_blocks),
        P_hat_blocks=list(lin.P_hat_blocks), J_bar_blocks=list(Jb),
        spectra_J=[spectrum(J) for J in lin.J_blocks],
        spectra_J_bar=[spectrum(B) for B in Jb],
        hurwitz_J=hurwitz_J, hurwitz_J_bar=hurwitz_bar,
        X=X, X_bar=Xb, robustness_uncontrolled=rob_u,
        robustness_controlled=rob_c, gamma_analytic=g_an, gamma_sampled=g_sa,
        gamma_method=gamma_method, S=S, m_matrix=mv,
        theorem1_satisfied=bool(hurwitz_bar and mv.is_m_matrix),
        transition_kind=Phi.kind, notes=notes)


@dataclass(frozen=True)
class EpsStarEstimate:
    eps_star: float
    grid: tuple
    verdicts: dict
    resolution: float
    method: str = "simulation-bisection"


def estimate_eps_star(net, part, sched, eps_grid, theta0, horizon,
                      tol_sync=None, dt_per_eps=None):
    """Largest grid ``epsilon`` whose full simulation converges.

    Bisection assumes the verdict is monotone in ``epsilon`` (stable below a
    threshold). The smallest grid value must converge.
    """
    from .simulate import (STEPS_PER_EPSILON, TOL_SYNC, simulate_full,
                           verdict)
    tol_sync = TOL_SYNC if tol_sync is None else tol_sync
    per = STEPS_PER_EPSILON if dt_per_eps is None else dt_per_eps
    grid = tuple(sorted(float(e) for e in eps_grid))
    if not grid:
        raise ValueError("empty epsilon grid")
    cache = {}

    def ok(i):
        if i not in cache:
            s = sched.with_epsilon(grid[i])
            dt = grid[i] / per
            n = int(np.ceil(horizon / dt))
            tr = simulate_full(net, part, s, theta0, n * dt, dt,
                               record_every=max(1, n // 5000))
            cache[i] = verdict(tr, part, tol_sync).converged
        return cache[i]

    if sched.is_zero:
        # no dither: epsilon has no effect, one run decides everything
        tr = simulate_full(net, part, sched, theta0, horizon, min(0.01, horizon / 100))
        good = verdict(tr, part, tol_sync).converged
        if not good:
            raise CertificationError("eps_star", "no stable epsilon in grid")
        return EpsStarEstimate(grid[-1], grid, {e: True for e in grid}, 0.0)
    if not ok(0):
        raise CertificationError("eps_star", "no stable epsilon in grid")
    lo, hi = 0, len(grid) - 1
    if ok(hi):
        lo = hi
    else:
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                lo = mid
            else:
                hi = mid
    res = grid[lo + 1] - grid[lo] if lo + 1 < len(grid) else 0.0
    return EpsStarEstimate(grid[lo], grid,
                           {grid[i]: v for i, v in sorted(cache.items())}, res)
