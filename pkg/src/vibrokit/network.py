"""Oscillator networks, cluster partitions and their incidence structures.

Node indices are 0-based throughout. An undirected edge ``(i, j)`` with
``i < j`` is oriented ``i -> j``; its incidence column is ``e_j - e_i``.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import block_diag

TOL_INV = 1e-9


class NetworkError(ValueError):
    """Raised for malformed networks or partitions."""


class StructuralError(NetworkError):
    """A partition that cannot carry a cluster reduction."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class OscillatorNetwork:
    """Weighted undirected Kuramoto network.

    Parameters
    ----------
    weights : (n, n) array
        Symmetric, nonnegative coupling strengths with zero diagonal.
    frequencies : (n,) array
        Natural frequencies in rad/s.
    """

    weights: np.ndarray
    frequencies: np.ndarray

    def __post_init__(self):
        A = np.array(self.weights, dtype=float)
        w = np.array(self.frequencies, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise NetworkError(f"weights must be square, got shape {A.shape}")
        if w.shape[0] != A.shape[0]:
            raise NetworkError(
                f"{w.shape[0]} frequencies for {A.shape[0]} nodes")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(w))):
            raise NetworkError("weights and frequencies must be finite")
        if not np.array_equal(A, A.T):
            raise NetworkError("weights must be symmetric")
        if np.any(np.diag(A) != 0):
            raise NetworkError("weights must have a zero diagonal")
        if np.any(A < 0):
            raise NetworkError("weights must be nonnegative")
        A.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "weights", A)
        object.__setattr__(self, "frequencies", w)

    @classmethod
    def from_edges(cls, n, edges, frequencies):
        """Build from ``(i, j, weight)`` triples; each pair listed once."""
        A = np.zeros((n, n))
        for i, j, a in edges:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise NetworkError(f"invalid edge ({i}, {j}) for n={n}")
            if A[i, j] != 0:
                raise NetworkError(f"edge ({i}, {j}) listed twice")
            A[i, j] = A[j, i] = float(a)
        return cls(A, frequencies)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def edges(self):
        """Undirected edges ``(i, j)``, ``i < j``, in lexicographic order."""
        i, j = np.nonzero(np.triu(self.weights, 1))
        return [(int(a), int(b)) for a, b in zip(i, j)]

    def edge_list(self):
        return [(i, j, float(self.weights[i, j])) for i, j in self.edges()]

    def neighbors(self, i):
        return [int(j) for j in np.flatnonzero(self.weights[i])]


@dataclass(frozen=True)
class ClusterPartition:
    """Ordered partition of the nodes into clusters."""

    clusters: tuple

    def __post_init__(self):
        cl = tuple(tuple(sorted(int(i) for i in c)) for c in self.clusters)
        object.__setattr__(self, "clusters", cl)

    @property
    def r(self) -> int:
        return len(self.clusters)

    @property
    def sizes(self):
        return [len(c) for c in self.clusters]

    def labels(self, n):
        """Cluster index of every node (``-1`` for uncovered nodes)."""
        lab = np.full(n, -1, dtype=int)
        for k, c in enumerate(self.clusters):
            for i in c:
                if 0 <= i < n:
                    lab[i] = k
        return lab

    def structural_problems(self, net: OscillatorNetwork):
        """List every structural defect of the partition for ``net``."""
        n = net.n
        problems = []
        seen = {}
        for k, c in enumerate(self.clusters):
            if len(c) == 0:
                problems.append(f"cluster {k} is empty")
                continue
            if len(c) == 1:
                problems.append(f"cluster {k} is a singleton {list(c)}")
            for i in c:
                if not 0 <= i < n:
                    problems.append(f"cluster {k} has out-of-range node {i}")
                elif i in seen:
                    problems.append(
                        f"node {i} is in clusters {seen[i]} and {k}")
                else:
                    seen[i] = k
        missing = sorted(set(range(n)) - set(seen))
        if missing:
            problems.append(f"nodes {missing} are not in any cluster")
        if problems:
            return problems
        for k, c in enumerate(self.clusters):
            if len(c) >= 2 and not _connected(net.weights, c):
                problems.append(f"cluster {k} induces a disconnected subgraph")
        return problems


def _connected(A, nodes):
    nodes = list(nodes)
    inside = set(nodes)
    stack, seen = [nodes[0]], {nodes[0]}
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(A[i]):
            j = int(j)
            if j in inside and j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == len(nodes)


@dataclass
class InvarianceReport:
    """Outcome of :func:`validate_invariance`.

    ``structural`` holds partition defects; ``violations`` holds failures of
    the two invariance conditions, each a dict with a ``condition`` key
    (``"frequency"`` or ``"row_sum"``) and the offending indices.
    """

    passed: bool
    structural: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    def to_dict(self):
        return {"passed": self.passed, "structural": list(self.structural),
                "violations": list(self.violations)}

    def summary(self):
        if self.passed:
            return "PASS: partition is structurally valid and flow-invariant"
        lines = ["FAIL"]
        lines += [f"  structural: {p}" for p in self.structural]
        for v in self.violations:
            if v["condition"] == "frequency":
                lines.append(
                    f"  cluster {v['cluster']}: omega[{v['nodes'][0]}]="
                    f"{v['values'][0]:g} != omega[{v['nodes'][1]}]="
                    f"{v['values'][1]:g}")
            else:
                lines.append(
                    f"  cluster {v['cluster']} -> cluster {v['other']}: "
                    f"row sums {v['values'][0]:g} (node {v['nodes'][0]}) vs "
                    f"{v['values'][1]:g} (node {v['nodes'][1]})")
        return "\n".join(lines)


def validate_invariance(net: OscillatorNetwork, part: ClusterPartition,
                        tol: float = TOL_INV) -> InvarianceReport:
    """Check that the cluster synchronization manifold is flow-invariant.

    Requires equal natural frequencies inside each cluster and, for every
    ordered cluster pair ``(k, l)``, equal weighted row sums into cluster
    ``l`` across the nodes of cluster ``k``.
    """
    structural = part.structural_problems(net)
    if structural:
        return InvarianceReport(False, structural, [])
    violations = []
    w = net.frequencies
    A = net.weights
    for k, c in enumerate(part.clusters):
        ref = c[0]
        for i in c[1:]:
            if abs(w[i] - w[ref]) > tol:
                violations.append({"condition": "frequency", "cluster": k,
                                   "nodes": [ref, i],
                                   "values": [float(w[ref]), float(w[i])]})
        for l, d in enumerate(part.clusters):
            if l == k:
                continue
            sums = A[np.ix_(c, d)].sum(axis=1)
            for idx in range(1, len(c)):
                if abs(sums[idx] - sums[0]) > tol:
                    violations.append({
                        "condition": "row_sum", "cluster": k, "other": l,
                        "nodes": [c[0], c[idx]],
                        "values": [float(sums[0]), float(sums[idx])]})
    return InvarianceReport(not violations, [], violations)


def laplacian(net: OscillatorNetwork) -> np.ndarray:
    A = net.weights
    return np.diag(A.sum(axis=1)) - A


def incidence(n, edges) -> np.ndarray:
    """Oriented incidence matrix, column ``e_j - e_i`` for edge ``(i, j)``."""
    B = np.zeros((n, len(edges)))
    for col, (i, j) in enumerate(edges):
        B[i, col] = -1.0
        B[j, col] = 1.0
    return B


@dataclass(frozen=True)
class IncidenceReduction:
    """Spanning tree and ordered incidence blocks of a clustered network.

    Matrix rows follow the global node numbering. Columns of ``B`` are
    ``[intra edges of cluster 0 | ... | intra edges of cluster r-1 | inter
    edges]``; each cluster's intra columns start with its tree edges, so the
    first ``n_k - 1`` columns of ``B_intra_blocks[k]`` and
    ``B_hat_intra_blocks[k]`` coincide. Per-cluster blocks restrict rows to
    ``local_orders[k]``.
    """

    n: int
    clusters: tuple
    local_orders: tuple
    intra_edges: tuple          # per cluster: tree edges first, then chords
    tree_intra_edges: tuple     # per cluster
    inter_edges: tuple          # inter tree edges first
    tree_inter_edges: tuple
    B_intra: np.ndarray
    B_inter: np.ndarray
    B_hat_intra: np.ndarray
    B_hat_inter: np.ndarray
    W_intra: np.ndarray
    W_inter: np.ndarray

    @property
    def r(self):
        return len(self.clusters)

    @property
    def B(self):
        return np.hstack([self.B_intra, self.B_inter])

    @property
    def B_hat(self):
        return np.hstack([self.B_hat_intra, self.B_hat_inter])

    @property
    def W(self):
        return block_diag(self.W_intra, self.W_inter)

    @property
    def n_intra(self):
        """Number of intra-cluster tree edges, i.e. ``n - r``."""
        return self.B_hat_intra.shape[1]

    @property
    def intra_edge_list(self):
        return [e for es in self.intra_edges for e in es]

    @property
    def tree_edges(self):
        return [e for es in self.tree_intra_edges for e in es] + list(
            self.tree_inter_edges)

    @property
    def node_order(self):
        """Row permutation that makes the intra blocks block-diagonal."""
        return [i for order in self.local_orders for i in order]

    def cluster_edge_slices(self):
        """Column slices of each cluster inside ``B_intra``."""
        out, start = [], 0
        for es in self.intra_edges:
            out.append(slice(start, start + len(es)))
            start += len(es)
        return out

    def cluster_tree_slices(self):
        """Column slices of each cluster inside ``B_hat_intra`` (and x)."""
        out, start = [], 0
        for es in self.tree_intra_edges:
            out.append(slice(start, start + len(es)))
            start += len(es)
        return out

    def B_intra_blocks(self):
        return [self.B_intra[list(order)][:, s] for order, s in
                zip(self.local_orders, self.cluster_edge_slices())]

    def B_hat_intra_blocks(self):
        return [self.B_hat_intra[list(order)][:, s] for order, s in
                zip(self.local_orders, self.cluster_tree_slices())]

    def W_intra_blocks(self):
        return [self.W_intra[s, s] for s in self.cluster_edge_slices()]


def _cluster_tree(A, nodes, rng):
    """Spanning tree of one cluster whose first two edges form a path.

    Returns ``(local_order, tree_edges)``. The local order lists the path
    ``p1 - p2 - p3`` first, so the first two tree columns are the difference
    vectors of local nodes (1, 2) and (2, 3), up to orientation sign.
    """
    inside = set(nodes)

    def nbrs(i):
        out = [int(j) for j in np.flatnonzero(A[i]) if int(j) in inside]
        if rng is not None:
            rng.shuffle(out)
        return out

    root = nodes[0] if rng is None else int(rng.choice(nodes))
    if len(nodes) == 1:
        return [root], []
    first = nbrs(root)
    b = first[0]
    c_candidates = [j for j in nbrs(b) if j != root]
    if c_candidates:
        path = [root, b, c_candidates[0]]
    elif len(first) > 1:
        path = [b, root, first[1]]
    else:
        path = [root, b]
    tree = [(path[0], path[1])]
    if len(path) == 3:
        tree.append((path[1], path[2]))
    visited = set(path)
    queue = deque(path)
    while queue:
        i = queue.popleft()
        for j in nbrs(i):
            if j not in visited:
                visited.add(j)
                tree.append((i, j))
                queue.append(j)
    rest = sorted(visited - set(path))
    order = path + rest
    return order, [tuple(sorted(e)) for e in tree]


def build_reduction(net: OscillatorNetwork, part: ClusterPartition,
                    tree_seed: Optional[int] = None) -> IncidenceReduction:
    """Build the spanning tree and incidence blocks.

    With ``tree_seed=None`` every choice is made by lowest index. An integer
    seed randomizes roots and neighbor order, giving a different but equally
    valid tree.
    """
    problems = part.structural_problems(net)
    if problems:
        raise StructuralError(problems)
    A = net.weights
    n = net.n
    rng = None if tree_seed is None else np.random.default_rng(tree_seed)
    lab = part.labels(n)

    local_orders, tree_intra, intra_edges = [], [], []
    for c in part.clusters:
        order, tree = _cluster_tree(A, list(c), rng)
        tree_set = set(tree)
        chords = [(i, j) for i, j in net.edges()
                  if lab[i] == lab[j] == lab[c[0]] and (i, j) not in tree_set]
        local_orders.append(tuple(order))
        tree_intra.append(tuple(tree))
        intra_edges.append(tuple(tree + chords))

    all_inter = [(i, j) for i, j in net.edges() if lab[i] != lab[j]]
    joined = {0}
    tree_inter = []
    while len(joined) < part.r:
        cands = [(i, j) for i, j in all_inter
                 if (lab[i] in joined) != (lab[j] in joined)]
        if not cands:
            # disconnected quotient: start a new component of the forest
            joined.add(min(set(range(part.r)) - joined))
            continue
        i, j = cands[0]
        tree_inter.append((i, j))
        joined |= {int(lab[i]), int(lab[j])}
    rest = [e for e in all_inter if e not in set(tree_inter)]
    inter_edges = tree_inter + rest

    flat_intra = [e for es in intra_edges for e in es]
    flat_tree_intra = [e for es in tree_intra for e in es]
    B_intra = incidence(n, flat_intra)
    B_inter = incidence(n, inter_edges)
    B_hat_intra = incidence(n, flat_tree_intra)
    B_hat_inter = incidence(n, tree_inter)
    W_intra = np.diag([A[i, j] for i, j in flat_intra])
    W_inter = np.diag([A[i, j] for i, j in inter_edges])
    for M in (B_intra, B_inter, B_hat_intra, B_hat_inter, W_intra, W_inter):
        M.setflags(write=False)
    return IncidenceReduction(
        n=n, clusters=part.clusters, local_orders=tuple(local_orders),
        intra_edges=tuple(intra_edges), tree_intra_edges=tuple(tree_intra),
        inter_edges=tuple(inter_edges), tree_inter_edges=tuple(tree_inter),
        B_intra=B_intra, B_inter=B_inter, B_hat_intra=B_hat_intra,
        B_hat_inter=B_hat_inter, W_intra=W_intra, W_inter=W_inter)


def laplacian_consistency_check(red: IncidenceReduction,
                                net: OscillatorNetwork,
                                tol: float = 1e-10) -> bool:
    """True iff ``B W B^T`` equals the weighted graph Laplacian."""
    L = red.B @ red.W @ red.B.T
    return bool(np.max(np.abs(L - laplacian(net)), initial=0.0) <= tol)


def is_uniform_complete(net: OscillatorNetwork, nodes: Sequence[int],
                        tol: float = 1e-12) -> bool:
    """True if ``nodes`` induce a complete graph with one common weight."""
    sub = net.weights[np.ix_(list(nodes), list(nodes))]
    off = sub[~np.eye(len(nodes), dtype=bool)]
    return bool(off.size > 0 and off.min() > 0
                and off.max() - off.min() <= tol)
