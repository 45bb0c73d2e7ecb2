"""Command-line entry point: ``vibrokit <command> --config <path>``.

Exit codes: 0 success, 1 usage or parse error, 2 negative verdict,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import epsilon_refinement
from .certify import CertificationError, certify
from .config import ConfigError, ExperimentConfig, load
from .design import DesignError, amplitude_scan
from .network import NetworkError, build_reduction, validate_invariance
from .reduction import lift_error, reduce_state, wrap
from .simulate import (IntegrationError, StepSizeError,
                       manifold_initial_phases, simulate_full, verdict)
from .vibration import ScheduleError, VibrationSchedule

EXIT_OK, EXIT_USAGE, EXIT_NEGATIVE, EXIT_NUMERIC = 0, 1, 2, 3
PLOT_ROWS = 5000
DEFAULT_U_GRID = [round(0.1 * i, 10) for i in range(41)]


def _parser():
    p = argparse.ArgumentParser(
        prog="vibrokit",
        description="Vibrational stabilization of cluster synchronization "
                    "in Kuramoto networks.")
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__}")
    p.add_argument("command", choices=["validate", "certify", "simulate",
                                       "design", "sweep"])
    p.add_argument("--config", required=True,
                   help="JSON config path, or @name for a bundled example")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, help="seed for initial phases and "
                   "sampled bounds")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--controlled", dest="controlled", action="store_true",
                      default=True)
    mode.add_argument("--uncontrolled", dest="controlled",
                      action="store_false")
    p.add_argument("--s0", type=float, help="reference phase in radians")
    p.add_argument("--eps", type=float, help="dither scale epsilon")
    return p


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _fmt(M):
    return np.array2string(np.asarray(M), precision=6, suppress_small=True,
                           max_line_width=100)


def _header(cfg, args, command):
    return {"command": command, "config_digest": cfg.digest(),
            "seed": cfg.simulation.seed, "version": __version__}


def _apply_overrides(cfg: ExperimentConfig, args):
    if args.seed is not None:
        cfg.simulation.seed = args.seed
    if args.s0 is not None:
        cfg.analysis.s0 = args.s0
    if args.eps is not None:
        if not args.eps > 0:
            raise ConfigError("--eps must be positive")
        cfg.epsilon = args.eps
        if cfg.linear_system is not None:
            cfg.linear_system.epsilon = args.eps
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def cmd_validate(cfg, args, out):
    rep = validate_invariance(cfg.network(), cfg.cluster_partition())
    print(rep.summary())
    _write_json(out / "validate.json", {**_header(cfg, args, "validate"),
                                        **rep.to_dict()})
    return EXIT_OK if rep.passed else EXIT_NEGATIVE


def _certificate_report(c):
    lines = [f"s0 = {c.s0:.6g} rad  (transition matrix: {c.transition_kind})"]
    for k in range(len(c.J_blocks)):
        lines += [f"cluster {k}",
                  "  J =\n" + _indent(_fmt(c.J_blocks[k])),
                  "  P_hat =\n" + _indent(_fmt(c.P_hat_blocks[k])),
                  "  J_bar =\n" + _indent(_fmt(c.J_bar_blocks[k])),
                  f"  spectrum(J)     = {_fmt(c.spectra_J[k])}",
                  f"  spectrum(J_bar) = {_fmt(c.spectra_J_bar[k])}",
                  f"  robustness: uncontrolled {c.robustness_uncontrolled[k]:.6g}"
                  f", controlled {c.robustness_controlled[k]:.6g}"]
        if c.X_bar[k] is not None:
            lines.append("  X_bar =\n" + _indent(_fmt(c.X_bar[k])))
    lines += ["gamma (analytic) =\n" + _indent(_fmt(c.gamma_analytic))]
    if c.gamma_sampled is not None:
        lines += ["gamma (sampled) =\n" + _indent(_fmt(c.gamma_sampled))]
    lines += [f"S (from {c.gamma_method} gamma) =\n" + _indent(_fmt(c.S)),
              f"J_bar Hurwitz: {c.hurwitz_J_bar}",
              f"S is an M-matrix: {c.m_matrix.is_m_matrix} "
              f"({c.m_matrix.reason})",
              f"small-gain certificate satisfied: {c.theorem1_satisfied}"]
    lines += [f"note: {n}" for n in c.notes]
    return "\n".join(lines)


def _indent(s, pad="    "):
    return "\n".join(pad + line for line in s.splitlines())


def _certify(cfg, sched):
    a = cfg.analysis
    return certify(cfg.network(), cfg.cluster_partition(), sched, s0=a.s0,
                   quadrature_points=a.quadrature_points,
                   gamma_method=a.gamma_method, gamma_samples=a.gamma_samples,
                   seed=cfg.simulation.seed)


def cmd_certify(cfg, args, out):
    sched = cfg.schedule() if args.controlled else VibrationSchedule.zero(
        cfg.epsilon)
    c = _certify(cfg, sched)
    print(_certificate_report(c))
    _write_json(out / "certificate.json", {**_header(cfg, args, "certify"),
                                           **c.to_dict()})
    return EXIT_OK if c.theorem1_satisfied else EXIT_NEGATIVE


def _theta0(cfg, part):
    s = cfg.simulation
    if isinstance(s.theta0, list):
        return np.asarray(s.theta0, dtype=float)
    return manifold_initial_phases(part, cfg.n, seed=s.seed,
                                   perturbation=s.perturbation)


def _downsample(n_rows, limit=PLOT_ROWS):
    if n_rows <= limit:
        return np.arange(n_rows)
    return np.unique(np.linspace(0, n_rows - 1, limit).round().astype(int))


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])


def cmd_simulate(cfg, args, out):
    net, part = cfg.network(), cfg.cluster_partition()
    s = cfg.simulation
    if args.controlled:
        sched, dt = cfg.schedule(), s.dt
    else:
        sched = VibrationSchedule.zero(cfg.epsilon)
        dt = s.dt_uncontrolled or s.dt
    theta0 = _theta0(cfg, part)
    traj = simulate_full(net, part, sched, theta0, s.horizon, dt,
                         record_every=s.record_every)
    v = verdict(traj, part, tol_sync=s.tol_sync)
    traj.to_csv(out / "trajectory.csv")
    errs = lift_error(traj.states, part)
    idx = _downsample(len(traj))
    _write_rows(out / "plotdata_cluster_error.csv",
                ["t"] + [f"e_{k + 1}" for k in range(part.r)],
                np.column_stack([traj.times[idx], errs[idx]]))
    red = build_reduction(net, part)
    x = wrap(np.array([reduce_state(red, th).x for th in traj.states[idx]]))
    _write_rows(out / "plotdata_intra_differences.csv",
                ["t"] + [f"x_{i + 1}" for i in range(x.shape[1])],
                np.column_stack([traj.times[idx], x]))
    rep = {**_header(cfg, args, "simulate"),
           "mode": "controlled" if args.controlled else "uncontrolled",
           "epsilon": sched.epsilon, "dt": dt, "horizon": s.horizon,
           "schedule_digest": traj.schedule_digest, **v.to_dict()}
    _write_json(out / "verdict.json", rep)
    state = "converged" if v.converged else "NOT converged"
    print(f"{rep['mode']} run, horizon {s.horizon:g} s, dt {dt:g}: {state}")
    print("tail max error per cluster: "
          + ", ".join(f"{e:.3e}" for e in v.tail_max_error))
    return EXIT_OK if v.converged else EXIT_NEGATIVE


def cmd_design(cfg, args, out):
    net, part = cfg.network(), cfg.cluster_partition()
    a = cfg.analysis
    targets = a.targets or [k for k, c in enumerate(part.clusters)
                            if len(c) >= 3]
    if not targets:
        raise ConfigError("no cluster with three or more nodes to target")
    res = amplitude_scan(net, part, targets, a.u_grid or DEFAULT_U_GRID,
                         s0=a.s0, epsilon=cfg.epsilon,
                         quadrature_points=a.quadrature_points)
    c = _certify(cfg, res.schedule)
    print(f"targets {list(res.targets)}; selected u = "
          f"{res.selected_amplitude}")
    for k in res.targets:
        print(f"cluster {k}: robustness {res.robustness_before[k]:.6g} -> "
              f"{res.robustness_after[k]:.6g}")
    if res.no_improvement:
        print("no improvement: no amplitude in the grid raises robustness")
    for n in res.notes:
        print(f"note: {n}")
    print(f"small-gain certificate for the selected schedule: "
          f"{c.theorem1_satisfied}")
    _write_json(out / "design.json", {**_header(cfg, args, "design"),
                                      **res.to_dict(),
                                      "certificate": c.to_dict()})
    return EXIT_NEGATIVE if res.no_improvement else EXIT_OK


def cmd_sweep(cfg, args, out):
    ls = cfg.linear_system
    if ls is None:
        raise ConfigError("sweep needs a linear_system section")
    res = epsilon_refinement(ls.J, ls.P_hat, ls.x0, ls.epsilon, ls.horizon,
                             halvings=ls.halvings, s0=cfg.analysis.s0)
    rows = []
    print(f"{'epsilon':>12} {'deviation':>14} {'ratio':>8} {'order':>8}")
    for i, (e, d) in enumerate(zip(res["epsilon"], res["deviation"])):
        q = res["ratio"][i - 1] if i else float("nan")
        o = res["order"][i - 1] if i else float("nan")
        rows.append([e, d, q, o])
        print(f"{e:12.6g} {d:14.6e} {q:8.4f} {o:8.4f}")
    _write_rows(out / "sweep.csv", ["epsilon", "deviation", "ratio", "order"],
                rows)
    _write_json(out / "sweep.json", {**_header(cfg, args, "sweep"), **res})
    return EXIT_OK


COMMANDS = {"validate": cmd_validate, "certify": cmd_certify,
            "simulate": cmd_simulate, "design": cmd_design,
            "sweep": cmd_sweep}


def main(argv=None):
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = _apply_overrides(load(args.config), args)
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, args, out)
    except (ConfigError, ScheduleError, StepSizeError, NetworkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DesignError as exc:
        print(f"design: {exc}", file=sys.stderr)
        return EXIT_NEGATIVE
    except CertificationError as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        if exc.stage == "invariance":
            return EXIT_NEGATIVE
        if exc.stage in ("schedule", "reduction"):
            return EXIT_USAGE
        return EXIT_NUMERIC
    except (IntegrationError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
