"""Fixed-step RK4 integration of the full and reduced controlled models."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .network import ClusterPartition, OscillatorNetwork
from .reduction import CompactDynamics, lift_error
from .vibration import VibrationSchedule, dither_vector

TOL_SYNC = 1e-2
TAIL_FRACTION = 0.2
STEPS_PER_EPSILON = 20


class IntegrationError(RuntimeError):
    pass


class StepSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution on a uniform grid.

    ``states`` has one row per entry of ``times``; ``columns`` names the
    state components (``theta_1..`` or ``x_1.., y_1..``).
    """

    times: np.ndarray
    states: np.ndarray
    kind: str
    dt: float
    columns: tuple
    schedule_digest: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.times)

    def to_csv(self, path, max_rows=None):
        """Write ``t,<columns>`` with 17 significant digits."""
        idx = np.arange(len(self.times))
        if max_rows is not None and len(idx) > max_rows:
            idx = np.unique(np.linspace(0, len(idx) - 1, max_rows)
                            .round().astype(int))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("t",) + tuple(self.columns))
            for i in idx:
                w.writerow([f"{self.times[i]:.17g}"]
                           + [f"{v:.17g}" for v in self.states[i]])


@dataclass(frozen=True)
class SyncVerdict:
    """Per-cluster synchronization diagnostics over the tail window."""

    terminal_error: np.ndarray
    tail_max_error: np.ndarray
    tail_slope: np.ndarray
    converged: bool
    tol_sync: float
    tail_start: float

    def to_dict(self):
        return {"converged": self.converged, "tol_sync": self.tol_sync,
                "tail_start": self.tail_start,
                "terminal_error": self.terminal_error.tolist(),
                "tail_max_error": self.tail_max_error.tolist(),
                "tail_slope_sign": np.sign(self.tail_slope).astype(int)
                .tolist()}


def rk4(f, t0, y0, dt, n_steps, record_every=1):
    """Classic RK4 with a constant step; returns sampled times and states."""
    y = np.array(y0, dtype=float)
    n_rec = n_steps // record_every + 1
    times = np.empty(n_rec)
    out = np.empty((n_rec, y.size))
    times[0], out[0] = t0, y
    h2 = 0.5 * dt
    rec = 1
    # overflow is detected and reported below, not warned about
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_steps + 1):
            t = t0 + (k - 1) * dt
            k1 = f(t, y)
            k2 = f(t + h2, y + h2 * k1)
            k3 = f(t + h2, y + h2 * k2)
            k4 = f(t + dt, y + dt * k3)
            y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if k % record_every == 0:
                if not np.all(np.isfinite(y)):
                    raise IntegrationError(f"non-finite state at t={t + dt:.6g}")
                times[rec] = t0 + k * dt
                out[rec] = y
                rec += 1
        if not np.all(np.isfinite(y)):
            raise IntegrationError("non-finite state at end of horizon")
    return times[:rec], out[:rec]


def _grid(horizon, dt):
    if horizon <= 0 or dt <= 0:
        raise StepSizeError("horizon and dt must be positive")
    n = int(round(horizon / dt))
    if n < 1 or abs(n * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise StepSizeError(f"horizon {horizon} is not a multiple of dt {dt}")
    return n


def _check_step(sched, dt):
    if sched is not None and not sched.is_zero:
        cap = sched.epsilon / STEPS_PER_EPSILON
        if dt > cap * (1 + 1e-12):
            raise StepSizeError(f"dt={dt} exceeds epsilon/{STEPS_PER_EPSILON}"
                                f"={cap:g}; the dither would be unresolved")


def full_rhs(net: OscillatorNetwork, sched: VibrationSchedule = None):
    """Vector field of the controlled Kuramoto model over directed edges."""
    src, dst = np.nonzero(net.weights)
    base = net.weights[src, dst]
    omega = net.frequencies.copy()
    n = net.n
    if sched is None or sched.is_zero:
        def f(t, th):
            s = np.sin(th[dst] - th[src])
            return omega + np.bincount(src, base * s, minlength=n)
        return f
    amp = sched.matrix(n)[src, dst]
    eps = sched.epsilon

    def f(t, th):
        s = np.sin(th[dst] - th[src])
        k = base + amp * (np.sin(t / eps) / eps)
        return omega + np.bincount(src, k * s, minlength=n)
    return f


def simulate_full(net: OscillatorNetwork, part: ClusterPartition,
                  sched: VibrationSchedule, theta0, horizon, dt,
                  record_every=1) -> Trajectory:
    """Integrate the controlled model from ``theta0`` over ``[0, horizon]``.

    Raises
    ------
    StepSizeError
        If ``dt > epsilon / 20`` while any amplitude is nonzero.
    IntegrationError
        If the state becomes non-finite.
    """
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (net.n,):
        raise ValueError(f"theta0 must have length {net.n}")
    if sched is not None:
        sched.validate(net, part)
    _check_step(sched, dt)
    n_steps = _grid(horizon, dt)
    times, states = rk4(full_rhs(net, sched), 0.0, theta0, dt, n_steps,
                        record_every)
    return Trajectory(times, states, "full", dt,
                      tuple(f"theta_{i + 1}" for i in range(net.n)),
                      sched.digest() if sched is not None else "")


def simulate_reduced(dyn: CompactDynamics, sched: VibrationSchedule, x0, y0,
                     horizon, dt, record_every=1) -> Trajectory:
    """Integrate the compact ``(x, y)`` model with the same stepping rules."""
    _check_step(sched, dt)
    n_steps = _grid(horizon, dt)
    state0 = np.concatenate([np.asarray(x0, float), np.asarray(y0, float)])
    if state0.size != dyn.nx + dyn.ny:
        raise ValueError("x0/y0 do not match the reduction")
    if sched is None or sched.is_zero:
        def f(t, s):
            return dyn.rhs(t, s)
    else:
        dith = dither_vector(dyn.red, sched)
        eps = sched.epsilon

        def f(t, s):
            return dyn.rhs(t, s, dith, eps)
    times, states = rk4(f, 0.0, state0, dt, n_steps, record_every)
    cols = tuple(f"x_{i + 1}" for i in range(dyn.nx)) + tuple(
        f"y_{i + 1}" for i in range(dyn.ny))
    return Trajectory(times, states, "reduced", dt, cols,
                      sched.digest() if sched is not None else "")


def verdict(traj: Trajectory, part: ClusterPartition, tol_sync=TOL_SYNC,
            tail_fraction=TAIL_FRACTION) -> SyncVerdict:
    """Converged iff every cluster error stays below ``tol_sync`` on the tail."""
    if traj.kind != "full" or len(traj) == 0:
        raise ValueError("verdict needs a nonempty full-model trajectory")
    errs = lift_error(traj.states, part)
    t = traj.times
    t_start = t[0] + (1 - tail_fraction) * (t[-1] - t[0])
    tail = t >= t_start - 1e-12
    tail_err = errs[tail]
    tail_max = tail_err.max(axis=0)
    if tail.sum() >= 2:
        slope = np.polyfit(t[tail], tail_err, 1)[0]
    else:
        slope = np.zeros(part.r)
    return SyncVerdict(terminal_error=errs[-1], tail_max_error=tail_max,
                       tail_slope=np.atleast_1d(slope),
                       converged=bool(np.all(tail_max < tol_sync)),
                       tol_sync=tol_sync, tail_start=float(t_start))


def manifold_initial_phases(part: ClusterPartition, n, seed=0,
                            perturbation=0.1, cluster_phases=None):
    """Equal phases per cluster plus a seeded uniform perturbation.

    Each node receives an independent draw from
    ``[-perturbation, perturbation]``.
    """
    rng = np.random.default_rng(seed)
    theta = np.zeros(n)
    phases = np.zeros(part.r) if cluster_phases is None else np.asarray(
        cluster_phases, float)
    for k, c in enumerate(part.clusters):
        theta[list(c)] = phases[k]
    return theta + rng.uniform(-perturbation, perturbation, n)
