"""Directed acyclic graphs and their equivalence-class machinery.

Node identity is a dense integer index in [0, n). `Dag` and `Cpdag` are
immutable after construction and safe to share across threads/processes.
`Cpdag` doubles as a general PDAG container: construction only checks that
the directed and undirected edge sets are disjoint; the stronger
equivalence-class invariants (closure under the orientation rules,
extendability) hold for the outputs of `dag_to_cpdag` and
`apply_meek_rules` and are covered by property tests.
"""

from __future__ import annotations

import heapq
import io
import logging
from collections import deque
from itertools import combinations
from typing import Iterable, Sequence

from .errors import CycleError, ExtensionError, OrientationConflictError

log = logging.getLogger(__name__)

Edge = tuple[int, int]


def _check_edge(n: int, u: int, v: int) -> None:
    if not (0 <= u < n and 0 <= v < n):
        raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
    if u == v:
        raise ValueError(f"self-loop at node {u}")


class Dag:
    """Directed acyclic graph over nodes 0..n-1."""

    __slots__ = ("n", "edges", "_parents", "_children", "_hash")

    def __init__(self, n: int, edges: Iterable[Edge] = ()):
        if n < 0:
            raise ValueError("node count must be nonnegative")
        self.n = n
        self.edges = frozenset((int(u), int(v)) for u, v in edges)
        parents = [set() for _ in range(n)]
        children = [set() for _ in range(n)]
        for u, v in self.edges:
            _check_edge(n, u, v)
            parents[v].add(u)
            children[u].add(v)
        self._parents = tuple(frozenset(s) for s in parents)
        self._children = tuple(frozenset(s) for s in children)
        self._hash = hash((self.n, self.edges))
        topological_sort(self)  # raises CycleError on corrupt input

    def parents(self, v: int) -> frozenset[int]:
        return self._parents[v]

    def children(self, u: int) -> frozenset[int]:
        return self._children[u]

    def skeleton(self) -> frozenset[Edge]:
        return frozenset((u, v) if u < v else (v, u) for u, v in self.edges)

    def v_structures(self) -> frozenset[tuple[int, int, int]]:
        """Triples (a, b, c), a<b, with a->c<-b and a,b non-adjacent."""
        skel = self.skeleton()
        out = set()
        for c in range(self.n):
            for a, b in combinations(sorted(self._parents[c]), 2):
                if (a, b) not in skel:
                    out.add((a, b, c))
        return frozenset(out)

    def __eq__(self, other):
        return isinstance(other, Dag) and self.n == other.n and self.edges == other.edges

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return f"Dag(n={self.n}, edges={sorted(self.edges)})"


class Cpdag:
    """Partially directed graph: disjoint directed and undirected edge sets.

    Undirected edges are stored as (min, max) pairs.
    """

    __slots__ = ("n", "directed", "undirected", "_hash")

    def __init__(self, n: int, directed: Iterable[Edge] = (), undirected: Iterable[Edge] = ()):
        if n < 0:
            raise ValueError("node count must be nonnegative")
        self.n = n
        self.directed = frozenset((int(u), int(v)) for u, v in directed)
        self.undirected = frozenset(
            (int(u), int(v)) if u < v else (int(v), int(u)) for u, v in undirected
        )
        dir_skel = set()
        for u, v in self.directed:
            _check_edge(n, u, v)
            pair = (u, v) if u < v else (v, u)
            if pair in dir_skel and (v, u) in self.directed:
                raise ValueError(f"edge {pair} directed both ways")
            dir_skel.add(pair)
        for u, v in self.undirected:
            _check_edge(n, u, v)
            if (u, v) in dir_skel:
                raise ValueError(f"edge ({u}, {v}) is both directed and undirected")
        self._hash = hash((self.n, self.directed, self.undirected))

    @classmethod
    def empty(cls, n: int) -> "Cpdag":
        return cls(n)

    def skeleton(self) -> frozenset[Edge]:
        out = set(self.undirected)
        out.update((u, v) if u < v else (v, u) for u, v in self.directed)
        return frozenset(out)

    def parents(self, v: int) -> set[int]:
        return {u for u, w in self.directed if w == v}

    def undirected_neighbors(self, v: int) -> set[int]:
        return {u if w == v else w for u, w in self.undirected if v in (u, w)}

    def adjacency(self) -> list[set[int]]:
        adj = [set() for _ in range(self.n)]
        for u, v in self.skeleton():
            adj[u].add(v)
            adj[v].add(u)
        return adj

    def v_structures(self) -> frozenset[tuple[int, int, int]]:
        """Triples (a, b, c), a<b, with a->c<-b directed and a,b non-adjacent."""
        skel = self.skeleton()
        par = [set() for _ in range(self.n)]
        for u, v in self.directed:
            par[v].add(u)
        out = set()
        for c in range(self.n):
            for a, b in combinations(sorted(par[c]), 2):
                if (a, b) not in skel:
                    out.add((a, b, c))
        return frozenset(out)

    def __eq__(self, other):
        return (
            isinstance(other, Cpdag)
            and self.n == other.n
            and self.directed == other.directed
            and self.undirected == other.undirected
        )

    def __hash__(self):
        return self._hash

    def __repr__(self):
        return (
            f"Cpdag(n={self.n}, directed={sorted(self.directed)}, "
            f"undirected={sorted(self.undirected)})"
        )


def topological_sort(g: Dag) -> list[int]:
    """Topological order of g, lowest node index first among the ready set."""
    indeg = [0] * g.n
    for _, v in g.edges:
        indeg[v] += 1
    ready = [v for v in range(g.n) if indeg[v] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        u = heapq.heappop(ready)
        order.append(u)
        for w in sorted(g._children[u]):
            indeg[w] -= 1
            if indeg[w] == 0:
                heapq.heappush(ready, w)
    if len(order) != g.n:
        raise CycleError(f"graph on {g.n} nodes contains a directed cycle")
    return order


def would_create_cycle(g: Dag, u: int, v: int) -> bool:
    """True iff adding u->v to g closes a directed cycle (v reaches u)."""
    if u == v:
        raise ValueError("u and v must differ")
    seen = {v}
    stack = [v]
    while stack:
        x = stack.pop()
        if x == u:
            return True
        for w in g._children[x]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def _order_edges(g: Dag) -> list[Edge]:
    # Process edges by ascending topological rank of the child, and within a
    # child by descending rank of the parent (Chickering's edge ordering).
    pos = {v: i for i, v in enumerate(topological_sort(g))}
    return sorted(g.edges, key=lambda e: (pos[e[1]], -pos[e[0]]))


def dag_to_cpdag(g: Dag) -> Cpdag:
    """Completed PDAG of g's Markov equivalence class.

    Labels every edge compelled or reversible via Chickering's edge-ordering
    procedure; compelled edges stay directed, reversible ones become
    undirected.
    """
    order = _order_edges(g)
    label: dict[Edge, str] = {}

    def label_into(y: int, value: str) -> None:
        for p in g._parents[y]:
            if (p, y) not in label:
                label[(p, y)] = value

    for x, y in order:
        if (x, y) in label:
            continue
        done = False
        for w in sorted(g._parents[x]):
            if label.get((w, x)) != "c":
                continue
            if w not in g._parents[y]:
                label[(x, y)] = "c"
                label_into(y, "c")
                done = True
                break
            label[(w, y)] = "c"
        if done:
            continue
        if any(z != x and z not in g._parents[x] for z in g._parents[y]):
            label[(x, y)] = "c"
            label_into(y, "c")
        else:
            label[(x, y)] = "r"
            label_into(y, "r")

    directed = {e for e in g.edges if label[e] == "c"}
    undirected = {e for e in g.edges if label[e] == "r"}
    return Cpdag(g.n, directed, undirected)


def _meek_proposals(
    n: int,
    directed: set[Edge],
    undirected: set[Edge],
    adj: list[set[int]],
    parents: list[set[int]],
    children: list[set[int]],
    und_nbrs: list[set[int]],
) -> set[Edge]:
    """Orientations implied by rules R1-R4 on the current graph state."""
    proposals: set[Edge] = set()
    for a, b in undirected:
        for x, y in ((a, b), (b, a)):
            # R1: c -> x, x - y, c and y non-adjacent.
            if any(c not in adj[y] for c in parents[x]):
                proposals.add((x, y))
                continue
            # R2: x -> w -> y with x - y.
            if children[x] & parents[y]:
                proposals.add((x, y))
                continue
            # R3: x - c, x - d, c -> y, d -> y, c and d non-adjacent.
            common = und_nbrs[x] & parents[y]
            if any(
                d not in adj[c]
                for c, d in combinations(sorted(common), 2)
            ):
                proposals.add((x, y))
                continue
            # R4: x - c, c -> d, d -> y, x adjacent to d, c and y non-adjacent.
            hit = False
            for d in parents[y]:
                if d not in adj[x]:
                    continue
                for c in parents[d]:
                    if c in und_nbrs[x] and c not in adj[y]:
                        hit = True
                        break
                if hit:
                    break
            if hit:
                proposals.add((x, y))
    return proposals


def apply_meek_rules(p: Cpdag, on_conflict: str = "error") -> Cpdag:
    """Close a PDAG under the four orientation-propagation rules.

    Each sweep collects every orientation the rules imply on the current
    graph and applies them as a batch, which makes the closure independent
    of edge iteration order. A sweep proposing both directions of the same
    edge raises OrientationConflictError, or with on_conflict="undirect"
    leaves the edge undirected and never reorients it (logged).
    """
    if on_conflict not in ("error", "undirect"):
        raise ValueError("on_conflict must be 'error' or 'undirect'")
    directed = set(p.directed)
    undirected = set(p.undirected)
    frozen: set[Edge] = set()

    parents = [set() for _ in range(p.n)]
    children = [set() for _ in range(p.n)]
    und_nbrs = [set() for _ in range(p.n)]
    adj = [set() for _ in range(p.n)]
    for u, v in directed:
        parents[v].add(u)
        children[u].add(v)
        adj[u].add(v)
        adj[v].add(u)
    for u, v in undirected:
        und_nbrs[u].add(v)
        und_nbrs[v].add(u)
        adj[u].add(v)
        adj[v].add(u)

    while True:
        live = undirected - frozen
        proposals = _meek_proposals(p.n, directed, live, adj, parents, children, und_nbrs)
        if not proposals:
            break
        conflicts = {(u, v) for u, v in proposals if (v, u) in proposals}
        if conflicts:
            pairs = sorted({(min(u, v), max(u, v)) for u, v in conflicts})
            if on_conflict == "error":
                raise OrientationConflictError(
                    f"both directions forced for edges {pairs}"
                )
            log.debug("orientation conflicts left undirected: %s", pairs)
            frozen.update(pairs)
            proposals -= conflicts
        for u, v in proposals:
            pair = (u, v) if u < v else (v, u)
            undirected.discard(pair)
            und_nbrs[u].discard(v)
            und_nbrs[v].discard(u)
            directed.add((u, v))
            parents[v].add(u)
            children[u].add(v)
        if not proposals:
            break
    return Cpdag(p.n, directed, undirected)


def consistent_extension(p: Cpdag) -> Dag:
    """DAG with p's skeleton and directed edges and no new v-structures.

    Iterative sink-finding: repeatedly pick the lowest-indexed node x that
    has no outgoing directed edge and whose undirected neighbors are
    adjacent to all other neighbors of x, orient x's undirected edges into
    x, and remove x. Raises ExtensionError if no such node exists.
    """
    remaining = set(range(p.n))
    parents = [set() for _ in range(p.n)]
    children = [set() for _ in range(p.n)]
    und_nbrs = [set() for _ in range(p.n)]
    adj = [set() for _ in range(p.n)]
    for u, v in p.directed:
        parents[v].add(u)
        children[u].add(v)
        adj[u].add(v)
        adj[v].add(u)
    for u, v in p.undirected:
        und_nbrs[u].add(v)
        und_nbrs[v].add(u)
        adj[u].add(v)
        adj[v].add(u)

    oriented: list[Edge] = []
    while remaining:
        found = -1
        for x in sorted(remaining):
            if children[x]:
                continue
            nbrs = adj[x]
            if all(nbrs - {y} <= adj[y] for y in und_nbrs[x]):
                found = x
                break
        if found < 0:
            raise ExtensionError(
                f"no consistent extension; stuck with {len(remaining)} nodes remaining"
            )
        x = found
        for y in und_nbrs[x]:
            oriented.append((y, x))
            und_nbrs[y].discard(x)
            adj[y].discard(x)
        for w in parents[x]:
            children[w].discard(x)
            adj[w].discard(x)
        und_nbrs[x] = set()
        parents[x] = set()
        adj[x] = set()
        remaining.discard(x)

    return Dag(p.n, set(p.directed) | set(oriented))


def best_effort_extension(p: Cpdag) -> Dag:
    """Total variant of `consistent_extension` for possibly-invalid PDAGs.

    Constraint-based learners can emit patterns that admit no consistent
    extension (conflicting colliders on noisy data). When that happens,
    every skeleton edge is oriented along an approximate topological order
    of the directed subgraph: the skeleton is kept intact, directed edges
    are reversed only when they sit on a directed cycle, and new
    v-structures are accepted.
    """
    try:
        return consistent_extension(p)
    except ExtensionError:
        log.debug("input not extendable; falling back to order-based orientation")
    n = p.n
    indeg = [0] * n
    children = [set() for _ in range(n)]
    for u, v in p.directed:
        children[u].add(v)
        indeg[v] += 1
    remaining = set(range(n))
    pos = {}
    while remaining:
        # Kahn step; on a directed cycle, the least-blocked node goes first.
        x = min(remaining, key=lambda v: (indeg[v], v))
        pos[x] = len(pos)
        remaining.discard(x)
        for w in children[x]:
            if w in remaining:
                indeg[w] -= 1
    edges = set()
    for u, v in p.directed:
        edges.add((u, v) if pos[u] < pos[v] else (v, u))
    for u, v in p.undirected:
        edges.add((u, v) if pos[u] < pos[v] else (v, u))
    return Dag(n, edges)


def write_graph(g: Dag | Cpdag, path_or_buf) -> None:
    """Write the edge-list text format (`dag <n>` / `cpdag <n>` header)."""
    lines = []
    if isinstance(g, Dag):
        lines.append(f"dag {g.n}")
        lines.extend(f"{u} -> {v}" for u, v in sorted(g.edges))
    elif isinstance(g, Cpdag):
        lines.append(f"cpdag {g.n}")
        lines.extend(f"{u} -> {v}" for u, v in sorted(g.directed))
        lines.extend(f"{u} -- {v}" for u, v in sorted(g.undirected))
    else:
        raise ValueError(f"cannot serialize {type(g).__name__}")
    text = "\n".join(lines) + "\n"
    if isinstance(path_or_buf, io.IOBase) or hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", encoding="utf-8") as f:
            f.write(text)


def parse_graph(text: str) -> Dag | Cpdag:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError("empty graph file")
    head = lines[0].split()
    if len(head) != 2 or head[0] not in ("dag", "cpdag"):
        raise ValueError(f"bad graph header: {lines[0]!r}")
    kind, n = head[0], int(head[1])
    directed, undirected = [], []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3 or parts[1] not in ("->", "--"):
            raise ValueError(f"bad edge line: {ln!r}")
        u, v = int(parts[0]), int(parts[2])
        if parts[1] == "->":
            directed.append((u, v))
        else:
            undirected.append((u, v))
    if kind == "dag":
        if undirected:
            raise ValueError("dag file contains undirected edges")
        return Dag(n, directed)
    return Cpdag(n, directed, undirected)


def read_graph(path) -> Dag | Cpdag:
    """Read a graph in the edge-list text format."""
    with open(path, "r", encoding="utf-8") as f:
        return parse_graph(f.read())
