"""One-dimensional amplitude search over single-column nilpotent dithers."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .averaging import (DEFAULT_S0, QUADRATURE_POINTS, averaged_J, spectrum,
                        transition_matrix)
from .certify import is_hurwitz, lyapunov_robustness
from .network import (ClusterPartition, OscillatorNetwork, build_reduction,
                      is_uniform_complete)
from .reduction import compute_R
from .vibration import (VibrationSchedule, assemble_J, assemble_P_hat,
                        design_lower_triangular)


class DesignError(ValueError):
    pass


def max_workers():
    """Thread cap from ``VIBROKIT_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("VIBROKIT_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class DesignResult:
    schedule: VibrationSchedule
    targets: tuple
    selected_amplitude: dict
    robustness_before: list
    robustness_after: list
    trace: list
    no_improvement: bool
    s0: float
    notes: tuple = ()

    def to_dict(self):
        def num(v):
            return None if v is None or not np.isfinite(v) else float(v)
        return {
            "targets": list(self.targets),
            "selected_amplitude": {str(k): v for k, v in
                                   self.selected_amplitude.items()},
            "schedule": {"epsilon": self.schedule.epsilon,
                         "amplitudes": self.schedule.to_list()},
            "robustness_before": [num(v) for v in self.robustness_before],
            "robustness_after": [num(v) for v in self.robustness_after],
            "no_improvement": self.no_improvement,
            "s0": self.s0,
            "trace": [{"u": t["u"], "hurwitz": t["hurwitz"],
                       "objective": num(t["objective"]),
                       "robustness": [num(v) for v in t["robustness"]]}
                      for t in self.trace],
            "notes": list(self.notes),
        }


def _block_robustness(A):
    return lyapunov_robustness(A) if is_hurwitz(A) else float("nan")


def amplitude_scan(net: OscillatorNetwork, part: ClusterPartition, targets,
                   u_grid, s0=DEFAULT_S0, epsilon=0.02,
                   quadrature_points=QUADRATURE_POINTS, tree_seed=None):
    """Pick the amplitude maximizing the weakest targeted robustness.

    Every target cluster receives the same amplitude ``u`` on its first tree
    edge. Grid points whose averaged blocks are not all Hurwitz are
    infeasible. Ties go to the smaller ``|u|``, then to grid order.
    """
    targets = tuple(sorted(set(int(k) for k in targets)))
    if not targets:
        raise DesignError("no target clusters")
    for k in targets:
        if not 0 <= k < part.r:
            raise DesignError(f"cluster {k} does not exist")
    u_grid = [float(u) for u in u_grid]
    if not u_grid:
        raise DesignError("empty amplitude grid")
    red = build_reduction(net, part, tree_seed=tree_seed)
    mats = compute_R(red)
    J_blocks = assemble_J(red, mats)
    before = [_block_robustness(J) for J in J_blocks]
    notes = []
    for k in targets:
        if len(part.clusters[k]) < 3:
            notes.append(f"cluster {k} has fewer than three nodes; the "
                         "construction has no effect there")
        elif is_uniform_complete(net, part.clusters[k]):
            notes.append(f"cluster {k} is complete and uniformly weighted; "
                         "vibrations cannot change its averaged block")

    def evaluate(u):
        amps = {}
        for k in targets:
            if len(part.clusters[k]) >= 3:
                amps.update(design_lower_triangular(red, k, u).amplitudes)
        sched = VibrationSchedule(epsilon, amps)
        P = assemble_P_hat(red, mats, sched)
        Phi = transition_matrix(P, s0=s0)
        Jb = averaged_J(J_blocks, Phi, quadrature_points)
        hurwitz = all(is_hurwitz(B) for B in Jb)
        rob = [_block_robustness(B) for B in Jb]
        obj = min(rob[k] for k in targets) if hurwitz else float("nan")
        return {"u": u, "hurwitz": hurwitz, "objective": obj,
                "robustness": rob, "schedule": sched}

    workers = max_workers()
    if workers > 1 and len(u_grid) > 1:
        with ThreadPoolExecutor(workers) as ex:
            trace = list(ex.map(evaluate, u_grid))
    else:
        trace = [evaluate(u) for u in u_grid]

    feasible = [t for t in trace if t["hurwitz"]]
    if not feasible:
        raise DesignError("no amplitude in the grid gives Hurwitz averaged "
                          "blocks")
    best = max(feasible, key=lambda t: (t["objective"], -abs(t["u"])))
    base = min(before[k] for k in targets)
    tol = 1e-9 * max(1.0, abs(base))
    no_improvement = not (best["objective"] > base + tol)
    return DesignResult(
        schedule=best["schedule"], targets=targets,
        selected_amplitude={k: best["u"] for k in targets},
        robustness_before=before, robustness_after=best["robustness"],
        trace=[{k: v for k, v in t.items() if k != "schedule"}
               for t in trace],
        no_improvement=no_improvement, s0=float(s0), notes=tuple(notes))


def hurwitz_frontier(J_block, P_hat_pattern, u_grid, s0=DEFAULT_S0,
                     quadrature_points=QUADRATURE_POINTS):
    """Spectrum of the averaged block along ``P_hat = u * pattern``."""
    J = np.atleast_2d(np.asarray(J_block, dtype=float))
    pattern = np.atleast_2d(np.asarray(P_hat_pattern, dtype=float))
    out = {}
    for u in u_grid:
        Phi = transition_matrix([float(u) * pattern], s0=s0)
        out[float(u)] = spectrum(averaged_J([J], Phi, quadrature_points)[0])
    return out


def averaged_det_gain(J_block, amplitude):
    """Closed form ``det(J_bar) - det(J) = j12^2 a^2 / 2`` for 2x2 blocks.

    Valid for an upper-triangular ``J`` averaged against the single-band
    generator ``[[0, 0], [a, 0]]`` at ``cos s0 = 0``.
    """
    J = np.asarray(J_block, dtype=float)
    return J[0, 1] ** 2 * amplitude ** 2 / 2
