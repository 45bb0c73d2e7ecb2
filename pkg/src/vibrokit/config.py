"""JSON experiment configuration: parsing, validation and serialization.

Units: time in seconds, phases and ``s0`` in radians, frequencies in rad/s.
Node indices are 0-based.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .network import ClusterPartition, OscillatorNetwork
from .vibration import VibrationSchedule

BUNDLED_PREFIX = "@"


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 1)."""


@dataclass
class SimulationConfig:
    horizon: float = 240.0
    dt: float = 0.001
    dt_uncontrolled: float | None = None
    seed: int = 0
    theta0: str | list = "manifold"
    perturbation: float = 0.1
    tol_sync: float = 1e-2
    record_every: int = 1


@dataclass
class AnalysisConfig:
    s0: float = math.pi / 2
    quadrature_points: int = 4096
    gamma_method: str = "analytic"
    gamma_samples: int = 10_000
    targets: list = field(default_factory=list)
    u_grid: list = field(default_factory=list)
    eps_grid: list = field(default_factory=list)


@dataclass
class LinearSystemConfig:
    """Synthetic ``x' = (J + P_hat sin(t/eps)/eps) x`` used by ``sweep``."""

    J: list
    P_hat: list
    x0: list
    epsilon: float
    horizon: float
    halvings: int = 2


@dataclass
class ExperimentConfig:
    n: int
    edges: list
    frequencies: list
    partition: list
    epsilon: float = 0.02
    amplitudes: list = field(default_factory=list)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    linear_system: LinearSystemConfig | None = None
    output_dir: str = "out"

    def network(self):
        return OscillatorNetwork.from_edges(self.n, self.edges,
                                            self.frequencies)

    def cluster_partition(self):
        return ClusterPartition(self.partition)

    def schedule(self):
        return VibrationSchedule(self.epsilon, {(i, j): u for i, j, u in
                                                self.amplitudes})

    def to_dict(self):
        return {
            "network": {"n": self.n, "edges": self.edges,
                        "frequencies": self.frequencies},
            "partition": self.partition,
            "schedule": {"epsilon": self.epsilon,
                         "amplitudes": self.amplitudes},
            "simulation": asdict(self.simulation),
            "analysis": asdict(self.analysis),
            "linear_system": None if self.linear_system is None
            else asdict(self.linear_system),
            "output": {"dir": self.output_dir},
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _finite(name, v):
    try:
        v = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {v!r}") from None
    if not math.isfinite(v):
        raise ConfigError(f"{name}: must be finite")
    return v


def _int(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or \
            int(v) != v:
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    return int(v)


def _section(cls, name, data):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name}: expected an object")
    known = set(cls.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise ConfigError(f"{name}: unknown keys {sorted(extra)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def from_dict(d) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("top level must be an object")
    extra = set(d) - {"network", "partition", "schedule", "simulation",
                      "analysis", "linear_system", "output"}
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    try:
        netd = d["network"]
        n = _int("network.n", netd["n"])
        edges = [[_int("edge node", e[0]), _int("edge node", e[1]),
                  _finite("edge weight", e[2])] for e in netd["edges"]]
        freqs = [_finite("frequency", w) for w in netd["frequencies"]]
        partition = [[_int("partition node", i) for i in c]
                     for c in d["partition"]]
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    except (TypeError, IndexError):
        raise ConfigError("network or partition has the wrong shape") \
            from None
    sch = d.get("schedule") or {}
    eps = _finite("schedule.epsilon", sch.get("epsilon", 0.02))
    try:
        amps = [[_int("schedule node", a[0]), _int("schedule node", a[1]),
                 _finite("amplitude", a[2])] for a in sch.get("amplitudes", [])]
    except (TypeError, IndexError):
        raise ConfigError("schedule.amplitudes must be [i, j, u] "
                          "triples") from None
    sim = _section(SimulationConfig, "simulation", d.get("simulation"))
    ana = _section(AnalysisConfig, "analysis", d.get("analysis"))
    lin = d.get("linear_system")
    if lin is not None:
        if not isinstance(lin, dict):
            raise ConfigError("linear_system: expected an object")
        try:
            lin = LinearSystemConfig(**lin)
        except TypeError as exc:
            raise ConfigError(f"linear_system: {exc}") from None
    out = (d.get("output") or {}).get("dir", "out")
    cfg = ExperimentConfig(n=n, edges=edges, frequencies=freqs,
                           partition=partition, epsilon=eps, amplitudes=amps,
                           simulation=sim, analysis=ana, linear_system=lin,
                           output_dir=out)
    check(cfg)
    return cfg


def check(cfg: ExperimentConfig):
    """Resolve references and reject non-finite or out-of-range values."""
    if cfg.n < 1:
        raise ConfigError("network.n must be positive")
    if len(cfg.frequencies) != cfg.n:
        raise ConfigError(f"network.frequencies has {len(cfg.frequencies)} "
                          f"entries, expected {cfg.n}")
    try:
        net = cfg.network()
        part = cfg.cluster_partition()
        sched = cfg.schedule()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    # only unresolvable references are parse errors; structural defects
    # such as singletons are reported by the invariance check
    seen = set()
    for c in part.clusters:
        for i in c:
            if not 0 <= i < cfg.n:
                raise ConfigError(f"partition: node {i} out of range")
            if i in seen:
                raise ConfigError(f"partition: node {i} listed twice")
            seen.add(i)
    try:
        sched.validate(net, part)
    except ValueError as exc:
        raise ConfigError(f"schedule: {exc}") from None
    s = cfg.simulation
    for name in ("horizon", "dt", "perturbation", "tol_sync"):
        v = _finite(f"simulation.{name}", getattr(s, name))
        if v <= 0 and name != "perturbation":
            raise ConfigError(f"simulation.{name} must be positive")
    if s.dt_uncontrolled is not None and \
            _finite("simulation.dt_uncontrolled", s.dt_uncontrolled) <= 0:
        raise ConfigError("simulation.dt_uncontrolled must be positive")
    if isinstance(s.theta0, list):
        if len(s.theta0) != cfg.n:
            raise ConfigError("simulation.theta0 has the wrong length")
        for v in s.theta0:
            _finite("simulation.theta0", v)
    elif s.theta0 != "manifold":
        raise ConfigError("simulation.theta0 must be 'manifold' or a list")
    a = cfg.analysis
    _finite("analysis.s0", a.s0)
    if a.gamma_method not in ("analytic", "sampled"):
        raise ConfigError("analysis.gamma_method must be 'analytic' or "
                          "'sampled'")
    for k in a.targets:
        if not 0 <= _int("analysis.targets", k) < part.r:
            raise ConfigError(f"analysis.targets: cluster {k} does not exist")
    for v in list(a.u_grid) + list(a.eps_grid):
        _finite("analysis grid", v)
    if any(v <= 0 for v in a.eps_grid):
        raise ConfigError("analysis.eps_grid must be positive")
    if cfg.linear_system is not None:
        ls = cfg.linear_system
        J = np.asarray(ls.J, dtype=float)
        P = np.asarray(ls.P_hat, dtype=float)
        if J.ndim != 2 or J.shape[0] != J.shape[1] or P.shape != J.shape \
                or np.shape(ls.x0) != (J.shape[0],):
            raise ConfigError("linear_system: J, P_hat, x0 not conformal")
        if not (np.all(np.isfinite(J)) and np.all(np.isfinite(P))):
            raise ConfigError("linear_system: non-finite entries")
        if _finite("linear_system.epsilon", ls.epsilon) <= 0 or \
                _finite("linear_system.horizon", ls.horizon) <= 0:
            raise ConfigError("linear_system: epsilon and horizon must be "
                              "positive")


def loads(text) -> ExperimentConfig:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}, column "
                          f"{exc.colno}: {exc.msg}") from None
    return from_dict(d)


def bundled_names():
    root = resources.files("vibrokit") / "data"
    return sorted(p.name[:-5] for p in root.iterdir()
                  if p.name.endswith(".json"))


def load(path) -> ExperimentConfig:
    """Load a config file; ``@name`` selects a bundled example."""
    path = str(path)
    if path.startswith(BUNDLED_PREFIX):
        name = path[len(BUNDLED_PREFIX):]
        res = resources.files("vibrokit") / "data" / f"{name}.json"
        if not res.is_file():
            raise ConfigError(f"no bundled config {name!r}; available: "
                              f"{', '.join(bundled_names())}")
        return loads(res.read_text())
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return loads(text)
