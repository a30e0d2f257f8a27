"""The two candidate member algorithms and their configuration space.

`run_ges` is a two-phase greedy equivalence search over CPDAGs scored by
the decomposable Gaussian BIC; `run_pc_stable` is the order-independent
constraint-based learner. Both are deterministic functions of the
sufficient statistics and their parameters.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from itertools import combinations

from .errors import ExtensionError
from .graphs import Cpdag, apply_meek_rules, consistent_extension, dag_to_cpdag
from .scoring import SufficientStats, fisher_z_test, residual_variance

log = logging.getLogger(__name__)

GES = "ges"
PC_STABLE = "pc_stable"

PENALTY_RANGE = (1.0, 1000.0)
MAX_PARENTS_RANGE = (1, 1000)
ALPHA_RANGE = (0.01, 0.2)
MAX_DEPTH_RANGE = (1, 1000)


@dataclass(frozen=True)
class AlgorithmConfig:
    """One fully parameterized member algorithm."""

    kind: str
    penalty: float | None = None  # ges: structural penalty on the BIC score
    max_parents: int | None = None  # ges
    faithfulness: bool | None = None  # ges
    alpha: float | None = None  # pc_stable: CI-test significance threshold
    max_depth: int | None = None  # pc_stable

    def __post_init__(self):
        if self.kind == GES:
            if self.penalty is None or self.max_parents is None or self.faithfulness is None:
                raise ValueError("ges config needs penalty, max_parents, faithfulness")
            if self.alpha is not None or self.max_depth is not None:
                raise ValueError("ges config cannot carry pc_stable parameters")
            if not PENALTY_RANGE[0] <= self.penalty <= PENALTY_RANGE[1]:
                raise ValueError(f"penalty {self.penalty} outside {PENALTY_RANGE}")
            if not MAX_PARENTS_RANGE[0] <= self.max_parents <= MAX_PARENTS_RANGE[1]:
                raise ValueError(f"max_parents {self.max_parents} outside {MAX_PARENTS_RANGE}")
        elif self.kind == PC_STABLE:
            if self.alpha is None or self.max_depth is None:
                raise ValueError("pc_stable config needs alpha and max_depth")
            if self.penalty is not None or self.max_parents is not None or self.faithfulness is not None:
                raise ValueError("pc_stable config cannot carry ges parameters")
            if not ALPHA_RANGE[0] <= self.alpha <= ALPHA_RANGE[1]:
                raise ValueError(f"alpha {self.alpha} outside {ALPHA_RANGE}")
            if not MAX_DEPTH_RANGE[0] <= self.max_depth <= MAX_DEPTH_RANGE[1]:
                raise ValueError(f"max_depth {self.max_depth} outside {MAX_DEPTH_RANGE}")
        else:
            raise ValueError(f"unknown learner kind {self.kind!r}")

    @classmethod
    def ges(cls, penalty: float, max_parents: int, faithfulness: bool) -> "AlgorithmConfig":
        return cls(kind=GES, penalty=float(penalty), max_parents=int(max_parents),
                   faithfulness=bool(faithfulness))

    @classmethod
    def pc_stable(cls, alpha: float, max_depth: int) -> "AlgorithmConfig":
        return cls(kind=PC_STABLE, alpha=float(alpha), max_depth=int(max_depth))

    def to_json_dict(self) -> dict:
        if self.kind == GES:
            return {"kind": GES, "penalty": self.penalty, "max_parents": self.max_parents,
                    "faithfulness": self.faithfulness}
        return {"kind": PC_STABLE, "alpha": self.alpha, "max_depth": self.max_depth}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "AlgorithmConfig":
        kind = obj.get("kind")
        if kind == GES:
            return cls.ges(obj["penalty"], obj["max_parents"], obj["faithfulness"])
        if kind == PC_STABLE:
            return cls.pc_stable(obj["alpha"], obj["max_depth"])
        raise ValueError(f"unknown learner kind {kind!r}")

    def label(self) -> str:
        if self.kind == GES:
            faith = "f1" if self.faithfulness else "f0"
            return f"ges(p={self.penalty:g},mp={self.max_parents},{faith})"
        return f"pc(a={self.alpha:g},d={self.max_depth})"

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


DEFAULT_GES = AlgorithmConfig.ges(1.0, 1000, False)
DEFAULT_PC_STABLE = AlgorithmConfig.pc_stable(0.05, 1000)


# --------------------------------------------------------------------------
# PC-Stable
# --------------------------------------------------------------------------


def run_pc_stable(stats: SufficientStats, alpha: float, max_depth: int) -> Cpdag:
    """Order-independent PC: skeleton, v-structures, orientation closure.

    At each depth the adjacency sets are frozen and removals applied only
    after the full sweep, which makes the skeleton invariant to variable
    ordering. Conflicting v-structure orientations are demoted to
    undirected edges, as are conflicts arising during rule closure.
    """
    n = stats.n_vars
    adj = [set(range(n)) - {i} for i in range(n)]
    sepset: dict[tuple[int, int], frozenset[int]] = {}

    depth = 0
    while depth <= max_depth:
        frozen = [tuple(sorted(adj[i])) for i in range(n)]
        any_testable = False
        removals = []
        for i in range(n):
            for j in sorted(adj[i]):
                if j < i:
                    continue
                found = None
                for side, other in ((i, j), (j, i)):
                    nbrs = [k for k in frozen[side] if k != other]
                    if len(nbrs) < depth:
                        continue
                    any_testable = True
                    for cond in combinations(nbrs, depth):
                        independent, _ = fisher_z_test(stats, i, j, cond, alpha)
                        if independent:
                            found = frozenset(cond)
                            break
                    if found is not None:
                        break
                if found is not None:
                    removals.append((i, j, found))
        for i, j, cond in removals:
            if j in adj[i]:
                adj[i].discard(j)
                adj[j].discard(i)
                sepset[(i, j)] = cond
        if not any_testable:
            break
        depth += 1

    # v-structures: i -> k <- j for unshielded triples with k outside sepset(i, j)
    proposals: set[tuple[int, int]] = set()
    for k in range(n):
        for i, j in combinations(sorted(adj[k]), 2):
            if j in adj[i]:
                continue
            cond = sepset.get((i, j))
            if cond is not None and k not in cond:
                proposals.add((i, k))
                proposals.add((j, k))
    conflicted = {(u, v) for u, v in proposals if (v, u) in proposals}
    if conflicted:
        pairs = sorted({(min(u, v), max(u, v)) for u, v in conflicted})
        log.debug("v-structure conflicts left undirected: %s", pairs)
    directed = proposals - conflicted

    undirected = set()
    for i in range(n):
        for j in adj[i]:
            if i < j and (i, j) not in directed and (j, i) not in directed:
                undirected.add((i, j))
    pdag = Cpdag(n, directed, undirected)
    return apply_meek_rules(pdag, on_conflict="undirect")


# --------------------------------------------------------------------------
# Greedy equivalence search
# --------------------------------------------------------------------------


class _GesState:
    """Mutable view of the current CPDAG plus cached local scores."""

    def __init__(self, stats: SufficientStats, penalty: float):
        self.stats = stats
        self.penalty = penalty
        self.n = stats.n_vars
        self.logm = math.log(stats.m)
        self.directed: set[tuple[int, int]] = set()
        self.undirected: set[tuple[int, int]] = set()
        self.pa = [frozenset() for _ in range(self.n)]
        self.und = [set() for _ in range(self.n)]
        self.adj = [set() for _ in range(self.n)]
        self._gain_cache: dict = {}

    def local_score(self, i: int, parents: frozenset) -> float:
        sigma2 = residual_variance(self.stats, i, parents)
        return -self.stats.m * math.log(sigma2) - self.penalty * len(parents) * self.logm

    def gain_of_adding(self, x: int, y: int, base: frozenset) -> float:
        """Score change at y from parent set `base` to `base | {x}`."""
        key = (x, y, base)
        g = self._gain_cache.get(key)
        if g is None:
            g = self.local_score(y, base | {x}) - self.local_score(y, base)
            self._gain_cache[key] = g
        return g

    def set_cpdag(self, c: Cpdag) -> None:
        self.directed = set(c.directed)
        self.undirected = set(c.undirected)
        self.pa = [frozenset() for _ in range(self.n)]
        self.und = [set() for _ in range(self.n)]
        self.adj = [set() for _ in range(self.n)]
        pa = [set() for _ in range(self.n)]
        for u, v in self.directed:
            pa[v].add(u)
            self.adj[u].add(v)
            self.adj[v].add(u)
        for u, v in self.undirected:
            self.und[u].add(v)
            self.und[v].add(u)
            self.adj[u].add(v)
            self.adj[v].add(u)
        self.pa = [frozenset(s) for s in pa]

    def as_cpdag(self) -> Cpdag:
        return Cpdag(self.n, self.directed, self.undirected)

    def is_clique(self, nodes) -> bool:
        nodes = list(nodes)
        return all(b in self.adj[a] for a, b in combinations(nodes, 2))

    def blocked_semi_directed(self, src: int, dst: int, blocker: frozenset) -> bool:
        """True iff every semi-directed path src -> dst meets `blocker`."""
        if src in blocker:
            return True
        seen = {src}
        stack = [src]
        while stack:
            u = stack.pop()
            if u == dst:
                return False
            for w in self.adj[u]:
                # semi-directed steps: u -> w or u - w
                if w in seen or w in blocker:
                    continue
                if (u, w) in self.directed or (min(u, w), max(u, w)) in self.undirected:
                    seen.add(w)
                    stack.append(w)
        return True

    def reclose(self) -> bool:
        """Rebuild the completed PDAG after an operator edit."""
        try:
            ext = consistent_extension(Cpdag(self.n, self.directed, self.undirected))
        except ExtensionError:
            return False
        self.set_cpdag(dag_to_cpdag(ext))
        return True


def _clique_subsets(candidates: list[int], base: frozenset, adj) -> list[frozenset]:
    """Subsets T of `candidates` with base | T pairwise adjacent.

    `base` itself must already be a clique. Subsets whose members are not
    mutually adjacent (or not adjacent to all of base) are pruned early.
    """
    out = [frozenset()]
    feasible = [t for t in candidates if all(b in adj[t] for b in base)]

    def extend(prefix: tuple[int, ...], start: int) -> None:
        for k in range(start, len(feasible)):
            t = feasible[k]
            if all(p in adj[t] for p in prefix):
                new = prefix + (t,)
                out.append(frozenset(new))
                extend(new, k + 1)

    extend((), 0)
    return out


def run_ges(
    stats: SufficientStats,
    penalty: float,
    max_parents: int,
    faithfulness: bool,
    score_trace: list | None = None,
) -> Cpdag:
    """Two-phase greedy equivalence search.

    Forward: repeatedly apply the highest-gain valid insert operator
    (candidate target-neighbor sets enumerated over cliques; validity is
    the clique condition plus the blocked semi-directed path condition)
    until no insert has positive gain, honoring `max_parents` on the
    scored parent set. Backward: repeatedly apply the highest-gain valid
    delete until none has positive gain. With `faithfulness`, insert
    candidates are restricted upfront to pairs whose single-edge gain
    from the empty graph is positive.

    `score_trace`, when given, receives the running extension's total
    score after every accepted operator.
    """
    state = _GesState(stats, penalty)
    n = state.n

    allowed = None
    if faithfulness:
        allowed = set()
        for i in range(n):
            for j in range(i + 1, n):
                if state.gain_of_adding(i, j, frozenset()) > 0:
                    allowed.add((i, j))

    def trace() -> None:
        if score_trace is not None:
            ext = consistent_extension(state.as_cpdag())
            score_trace.append(
                sum(state.local_score(i, frozenset(ext.parents(i))) for i in range(n))
            )

    # forward phase
    empty = frozenset()
    while True:
        candidates = []
        idx = 0
        for y in range(n):
            pa_y = state.pa[y]
            und_y = state.und[y]
            adj_y = state.adj[y]
            if not und_y and len(pa_y) + 1 <= max_parents:
                # NA and T are forced empty; only the bare insert remains.
                for x in range(n):
                    if x == y or x in adj_y:
                        continue
                    if allowed is not None and (min(x, y), max(x, y)) not in allowed:
                        continue
                    gain = state.gain_of_adding(x, y, pa_y)
                    if gain > 0:
                        candidates.append((gain, idx, x, y, empty, empty))
                    idx += 1
                continue
            for x in range(n):
                if x == y or x in adj_y:
                    continue
                if allowed is not None and (min(x, y), max(x, y)) not in allowed:
                    continue
                na = frozenset(und_y & state.adj[x])
                if not state.is_clique(na):
                    continue  # no T can make na | T a clique
                t_pool = sorted(und_y - state.adj[x])
                for t_set in _clique_subsets(t_pool, na, state.adj):
                    scored = pa_y | na | t_set
                    if len(scored) + 1 > max_parents:
                        idx += 1
                        continue
                    gain = state.gain_of_adding(x, y, scored)
                    if gain > 0:
                        candidates.append((gain, idx, x, y, na, t_set))
                    idx += 1
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[0], c[1]))
        applied = False
        for gain, _, x, y, na, t_set in candidates:
            if not state.blocked_semi_directed(y, x, na | t_set):
                continue
            saved = (set(state.directed), set(state.undirected))
            state.directed.add((x, y))
            for t in t_set:
                state.undirected.discard((min(t, y), max(t, y)))
                state.directed.add((t, y))
            if state.reclose():
                applied = True
                trace()
                break
            state.directed, state.undirected = saved  # pragma: no cover
            state.set_cpdag(state.as_cpdag())  # pragma: no cover
        if not applied:
            break

    # backward phase
    while True:
        candidates = []
        idx = 0
        pairs = [(x, y) for x, y in state.directed]
        pairs.extend((u, v) for u, v in state.undirected)
        pairs.extend((v, u) for u, v in state.undirected)
        pairs.sort()
        for x, y in pairs:
            na = frozenset(state.und[y] & state.adj[x])
            for keep in _clique_subsets(sorted(na), frozenset(), state.adj):
                h_set = na - keep
                base = (state.pa[y] | keep) - {x}
                gain = -state.gain_of_adding(x, y, base)
                if gain > 0:
                    candidates.append((gain, idx, x, y, h_set))
                idx += 1
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[0], c[1]))
        gain, _, x, y, h_set = candidates[0]
        pair = (min(x, y), max(x, y))
        state.directed.discard((x, y))
        state.undirected.discard(pair)
        for h in h_set:
            state.undirected.discard((min(h, y), max(h, y)))
            state.directed.add((y, h))
            hx = (min(h, x), max(h, x))
            if hx in state.undirected:
                state.undirected.discard(hx)
                state.directed.add((x, h))
        if not state.reclose():  # pragma: no cover
            raise ExtensionError("delete operator produced a non-extendable state")
        trace()

    return state.as_cpdag()


def run_config(stats: SufficientStats, config: AlgorithmConfig) -> Cpdag:
    """Dispatch to the learner the config parameterizes."""
    if config.kind == GES:
        return run_ges(stats, config.penalty, config.max_parents, config.faithfulness)
    return run_pc_stable(stats, config.alpha, config.max_depth)
