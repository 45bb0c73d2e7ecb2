"""Vibrational stabilization of cluster synchronization in Kuramoto networks."""

__version__ = "0.1.0"

from .averaging import averaged_J, eigenvalue_invariance_check, transition_matrix
from .certify import (build_S, certify, estimate_eps_star, gamma_bounds,
                      is_m_matrix, robustness, solve_lyapunov)
from .design import amplitude_scan, hurwitz_frontier
from .network import (ClusterPartition, OscillatorNetwork, build_reduction,
                      validate_invariance)
from .reduction import CompactDynamics, compute_R, reduce_state
from .simulate import simulate_full, simulate_reduced, verdict
from .vibration import VibrationSchedule, design_lower_triangular, linearize

__all__ = [
    "ClusterPartition", "CompactDynamics", "OscillatorNetwork",
    "VibrationSchedule", "amplitude_scan", "averaged_J", "build_S",
    "build_reduction", "certify", "compute_R", "design_lower_triangular",
    "eigenvalue_invariance_check", "estimate_eps_star", "gamma_bounds",
    "hurwitz_frontier", "is_m_matrix", "linearize", "reduce_state",
    "robustness", "simulate_full", "simulate_reduced", "solve_lyapunov",
    "transition_matrix", "validate_invariance", "verdict",
]
