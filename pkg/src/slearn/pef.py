"""Divide-and-conquer pipeline: partition nodes by correlation clustering,
estimate a subgraph per cluster with a pluggable solver, fuse the pieces
into one graph.

Fusion extends each subgraph to a DAG, then greedily adds cross-cluster
edges in descending |correlation| order whenever the better direction has
a positive BIC gain and keeps the graph acyclic, and finally removes any
edge whose deletion improves the score. The accepted-move score trace is
monotone by construction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .ensemble import Sle, solve_with_sle
from .errors import SlearnError
from .graphs import Cpdag, Dag, best_effort_extension, dag_to_cpdag
from .learners import AlgorithmConfig, run_config
from .scoring import SufficientStats, local_bic

log = logging.getLogger(__name__)

CROSS_CORR_THRESHOLD = 0.1
DEFAULT_MAX_FRAC = 0.10
DEFAULT_MIN_FRAC = 0.05


@dataclass(frozen=True)
class Partition:
    """Disjoint clusters covering all nodes, each sorted ascending."""

    clusters: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: set[int] = set()
        for cluster in self.clusters:
            if any(v in seen for v in cluster):
                raise ValueError("clusters overlap")
            seen.update(cluster)

    @property
    def n(self) -> int:
        return sum(len(c) for c in self.clusters)

    def cluster_of(self) -> np.ndarray:
        out = np.empty(self.n, dtype=int)
        for k, cluster in enumerate(self.clusters):
            out[list(cluster)] = k
        return out


def partition(
    stats: SufficientStats,
    max_frac: float = DEFAULT_MAX_FRAC,
    min_frac: float = DEFAULT_MIN_FRAC,
) -> Partition:
    """Average-linkage clustering on 1 - |corr| with a cluster-size cap.

    Merging greedily joins the closest pair whose merged size stays within
    ceil(max_frac * n); afterwards clusters smaller than ceil(min_frac * n)
    are merged into their nearest neighbor subject to the cap. Distance
    ties break toward the lowest node index. Problems too small to split
    (min_frac * n < 3) come back as a single cluster.
    """
    if not 0 < min_frac <= max_frac < 1:
        raise ValueError("need 0 < min_frac <= max_frac < 1")
    n = stats.n_vars
    if n < 3 or min_frac * n < 3:
        return Partition((tuple(range(n)),))
    cap = math.ceil(max_frac * n)
    min_size = math.ceil(min_frac * n)

    dist = 1.0 - np.abs(stats.corr)
    np.fill_diagonal(dist, np.inf)
    size = np.ones(n, dtype=int)
    members: list[list[int] | None] = [[i] for i in range(n)]
    active = np.ones(n, dtype=bool)
    triu = np.triu(np.ones((n, n), dtype=bool), 1)

    def merge(a: int, b: int) -> None:
        # Lance-Williams update keeps cluster distances average-linkage.
        wa, wb = size[a], size[b]
        row = (wa * dist[a, :] + wb * dist[b, :]) / (wa + wb)
        dist[a, :] = row
        dist[:, a] = row
        dist[a, a] = np.inf
        dist[b, :] = np.inf
        dist[:, b] = np.inf
        size[a] += size[b]
        members[a].extend(members[b])
        members[b] = None
        active[b] = False

    while True:
        ok = active[:, None] & active[None, :] & triu
        ok &= (size[:, None] + size[None, :]) <= cap
        masked = np.where(ok, dist, np.inf)
        flat = int(np.argmin(masked))
        a, b = divmod(flat, n)
        if not np.isfinite(masked[a, b]):
            break
        merge(a, b)

    # grow undersized clusters into their nearest admissible neighbor
    while True:
        small = [i for i in np.flatnonzero(active) if size[i] < min_size]
        small.sort(key=lambda i: (size[i], i))
        merged_any = False
        for i in small:
            mask = active.copy()
            mask[i] = False
            mask &= (size + size[i]) <= cap
            if not mask.any():
                continue
            row = np.where(mask, dist[i, :], np.inf)
            j = int(np.argmin(row))
            if not np.isfinite(row[j]):
                continue
            merge(min(i, j), max(i, j))
            merged_any = True
            break
        if not merged_any:
            break
    leftovers = [int(i) for i in np.flatnonzero(active) if size[i] < min_size]
    if leftovers:
        log.debug("clusters below minimum size kept as-is: %s", leftovers)

    clusters = sorted(tuple(sorted(members[i])) for i in np.flatnonzero(active))
    return Partition(tuple(clusters))


def estimate(
    part: Partition,
    stats: SufficientStats,
    solver: AlgorithmConfig | Sle,
    selection_lambda: float = 2.0,
    audit: list | None = None,
) -> list[tuple[tuple[int, ...], Cpdag]]:
    """Run the solver independently on each cluster's restricted stats.

    A failed cluster contributes an empty subgraph (recorded). Results are
    a pure function of the inputs, so cluster processing order (or any
    parallel schedule) cannot change them.
    """
    results = []
    for cluster in part.clusters:
        sub = stats.restrict(cluster)
        record = {"cluster": list(cluster), "chosen": None, "member_bics": None}
        try:
            if isinstance(solver, Sle):
                member_audit: list = []
                est, chosen = solve_with_sle(solver, sub, selection_lambda, member_audit)
                record["chosen"] = chosen
                record["member_bics"] = member_audit[0]["member_bics"]
            else:
                est = run_config(sub, solver)
        except SlearnError as exc:
            log.warning("cluster %s failed: %s", cluster[:4], exc)
            record["failed"] = str(exc)
            est = Cpdag(len(cluster))
        if audit is not None:
            audit.append(record)
        results.append((cluster, est))
    return results


def fuse(
    subgraphs: list[tuple[tuple[int, ...], Cpdag]],
    stats: SufficientStats,
    fuse_lambda: float = 2.0,
    score_trace: list | None = None,
) -> Cpdag:
    """Merge per-cluster subgraphs into one equivalence class.

    Steps: extend each subgraph to a DAG and take the disjoint union; rank
    cross-cluster pairs with |corr| >= 0.1 by descending |corr|; greedily
    add the direction with the larger positive score gain among those that
    keep the graph acyclic; then delete any edge whose removal improves
    the score; return the CPDAG of the result.
    """
    n = stats.n_vars
    cluster_id = np.full(n, -1, dtype=int)
    for k, (cluster, _) in enumerate(subgraphs):
        cluster_id[list(cluster)] = k
    if np.any(cluster_id < 0):
        raise ValueError("subgraph clusters do not cover all nodes")

    parents: list[set[int]] = [set() for _ in range(n)]
    children: list[set[int]] = [set() for _ in range(n)]

    def add_edge(u: int, v: int) -> None:
        parents[v].add(u)
        children[u].add(v)

    for cluster, cp in subgraphs:
        ext = best_effort_extension(cp)
        for u, v in ext.edges:
            add_edge(cluster[u], cluster[v])

    def reaches(src: int, dst: int) -> bool:
        seen = {src}
        stack = [src]
        while stack:
            x = stack.pop()
            if x == dst:
                return True
            stack.extend(w for w in children[x] if w not in seen)
            seen.update(children[x])
        return False

    absc = np.abs(stats.corr)
    cross = (cluster_id[:, None] != cluster_id[None, :]) & (absc >= CROSS_CORR_THRESHOLD)
    cross &= np.triu(np.ones((n, n), dtype=bool), 1)
    pairs = [(int(u), int(v)) for u, v in np.argwhere(cross)]
    pairs.sort(key=lambda uv: (-absc[uv[0], uv[1]], uv))

    def gain_of(parent: int, child: int) -> float:
        pa = frozenset(parents[child])
        try:
            return local_bic(stats, child, pa | {parent}, fuse_lambda) - local_bic(
                stats, child, pa, fuse_lambda
            )
        except SlearnError:
            return -math.inf

    for u, v in pairs:
        options = []
        for a, b in ((u, v), (v, u)):
            g = gain_of(a, b)
            if g > 0 and not reaches(b, a):
                options.append((g, (a, b)))
        if not options:
            continue
        options.sort(key=lambda og: (-og[0], og[1]))
        g, (a, b) = options[0]
        add_edge(a, b)
        if score_trace is not None:
            score_trace.append(("insert", a, b, g))

    while True:
        best_gain = 0.0
        best_edge = None  # ties keep the first hit of the fixed scan order
        for v in range(n):
            pa = frozenset(parents[v])
            for u in sorted(pa):
                g = local_bic(stats, v, pa - {u}, fuse_lambda) - local_bic(
                    stats, v, pa, fuse_lambda
                )
                if g > best_gain:
                    best_gain, best_edge = g, (u, v)
        if best_edge is None:
            break
        u, v = best_edge
        parents[v].discard(u)
        children[u].discard(v)
        if score_trace is not None:
            score_trace.append(("delete", u, v, best_gain))

    edges = {(u, v) for v in range(n) for u in parents[v]}
    return dag_to_cpdag(Dag(n, edges))


def p_sle(
    stats: SufficientStats,
    solver: AlgorithmConfig | Sle,
    max_frac: float = DEFAULT_MAX_FRAC,
    min_frac: float = DEFAULT_MIN_FRAC,
    fuse_lambda: float = 2.0,
    selection_lambda: float = 2.0,
    trace: dict | None = None,
) -> Cpdag:
    """Partition, estimate with the solver, fuse; deterministic."""
    part = partition(stats, max_frac, min_frac)
    audit: list = []
    subgraphs = estimate(part, stats, solver, selection_lambda, audit)
    fusion_trace: list = []
    fused = fuse(subgraphs, stats, fuse_lambda, fusion_trace)
    if trace is not None:
        trace["clusters"] = [list(c) for c in part.clusters]
        trace["estimate"] = audit
        trace["fusion"] = [
            {"op": op, "edge": [u, v], "gain": g} for op, u, v, g in fusion_trace
        ]
    return fused
