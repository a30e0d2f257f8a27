"""Synthetic problem generation.

A problem is built by replicating a small base network to a target size,
wiring the copies together with 10% random cross edges, sampling a linear
structural equation model with Gaussian noise, and standardizing the
columns. Everything is a pure function of (inputs, seed); stage substreams
come from `rng.substream`, so identical arguments reproduce problems
bit-for-bit.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import __version__ as _VERSION
from .errors import DegenerateColumnError, GenerationError
from .graphs import Cpdag, Dag, dag_to_cpdag, read_graph, topological_sort, write_graph
from .rng import substream
from .scoring import SufficientStats

CROSS_EDGE_FRACTION = 0.10
NOISE_STD_FLOOR = 1e-3
_MAX_ATTEMPT_FACTOR = 1000


@dataclass
class SemWeights:
    """Linear-model coefficients per edge and noise scale per node."""

    weights: dict[tuple[int, int], float]
    noise_std: np.ndarray

    def __post_init__(self):
        for e, w in self.weights.items():
            if not 0.5 <= abs(w) <= 1.0:
                raise ValueError(f"|weight| of edge {e} outside [0.5, 1]: {w}")
        self.noise_std = np.asarray(self.noise_std, dtype=float)
        if np.any(self.noise_std < 0) or np.any(self.noise_std > 1):
            raise ValueError("noise_std entries must lie in [0, 1]")


@dataclass
class Problem:
    """One structure-learning instance with known ground truth."""

    truth: Dag
    truth_cpdag: Cpdag
    data: np.ndarray
    seed: int
    base_name: str

    def __post_init__(self):
        if self.data.shape[1] != self.truth.n:
            raise ValueError("data column count must equal truth node count")

    @property
    def problem_id(self) -> str:
        return f"{self.base_name}-n{self.truth.n}-m{self.data.shape[0]}-s{self.seed}"

    @cached_property
    def stats(self) -> SufficientStats:
        return SufficientStats.from_data(self.data)


def base_network(name: str) -> Dag:
    """Built-in base networks used as replication seeds."""
    try:
        return _BASE_BUILDERS[name]()
    except KeyError:
        raise ValueError(
            f"unknown base network {name!r}; built-ins: {sorted(_BASE_BUILDERS)}"
        ) from None


def _asia8() -> Dag:
    # 8 nodes, 8 edges; the classic two-branch diagnostic network shape.
    return Dag(8, [(0, 1), (1, 5), (2, 3), (2, 4), (3, 5), (5, 6), (5, 7), (4, 7)])


def _chain3() -> Dag:
    return Dag(3, [(0, 1), (1, 2)])


def _collider5() -> Dag:
    return Dag(5, [(0, 2), (1, 2), (1, 3), (2, 4), (3, 4)])


def _alarm37() -> Dag:
    # 37 nodes, 46 edges; monitoring-network shape with hubs and colliders.
    edges = [
        (0, 3), (1, 3), (2, 4), (3, 5), (4, 5), (3, 6), (5, 8), (6, 8), (7, 8), (5, 9),
        (8, 10), (9, 10), (10, 11), (10, 12), (11, 14), (12, 14), (13, 14), (12, 15),
        (14, 16), (15, 16), (16, 17), (16, 18), (17, 19), (18, 19), (19, 20), (20, 21),
        (19, 22), (21, 23), (22, 23), (23, 24), (20, 25), (24, 26), (25, 26), (26, 27),
        (26, 28), (27, 29), (28, 29), (29, 30), (28, 31), (30, 32), (31, 32), (32, 33),
        (33, 34), (32, 35), (34, 36), (35, 36),
    ]
    return Dag(37, edges)


_BASE_BUILDERS = {
    "asia8": _asia8,
    "chain3": _chain3,
    "collider5": _collider5,
    "alarm37": _alarm37,
}


def replicate_network(base: Dag, target_n: int, seed: int) -> Dag:
    """Tile disjoint copies of `base` and add random acyclic cross edges.

    Makes ceil(target_n / base.n) copies, then adds
    round(0.10 * total intra-copy edges) edges between distinct copies,
    drawn by rejection sampling (duplicates and cycle-creating candidates
    rejected). With a single copy no cross edges are added.
    """
    if base.n < 1:
        raise ValueError("base network needs at least one node")
    if target_n < base.n:
        raise ValueError(f"target_n={target_n} smaller than base size {base.n}")
    copies = math.ceil(target_n / base.n)
    n = copies * base.n
    edges = {
        (u + c * base.n, v + c * base.n) for c in range(copies) for u, v in base.edges
    }
    n_cross = round(CROSS_EDGE_FRACTION * len(edges)) if copies > 1 else 0
    if n_cross == 0:
        return Dag(n, edges)

    children = [set() for _ in range(n)]
    for u, v in edges:
        children[u].add(v)

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

    rng = substream(seed, "replicate")
    highs = np.array([copies, copies, base.n, base.n])
    added = 0
    attempts = 0
    max_attempts = _MAX_ATTEMPT_FACTOR * n_cross
    while added < n_cross:
        attempts += 1
        if attempts > max_attempts:
            raise GenerationError(
                f"placed {added}/{n_cross} cross edges after {attempts} attempts"
            )
        ca, cb, u0, v0 = (int(x) for x in rng.integers(0, highs))
        if ca == cb:
            continue
        u = ca * base.n + u0
        v = cb * base.n + v0
        if v in children[u] or reaches(v, u):
            continue
        edges.add((u, v))
        children[u].add(v)
        added += 1
    return Dag(n, edges)


def _propagate(truth: Dag, sem: SemWeights, eps: np.ndarray) -> np.ndarray:
    data = np.zeros_like(eps)
    for v in topological_sort(truth):
        col = eps[:, v].copy()
        for u in sorted(truth.parents(v)):
            col += sem.weights[(u, v)] * data[:, u]
        data[:, v] = col
    return data


def draw_sem_weights(truth: Dag, rng: np.random.Generator) -> SemWeights:
    """Edge weights uniform on [-1, -0.5] u [0.5, 1] (sorted edge order),
    noise standard deviations uniform on [0, 1] floored at 1e-3."""
    edges = sorted(truth.edges)
    mags = rng.uniform(0.5, 1.0, len(edges))
    signs = 2 * rng.integers(0, 2, len(edges)) - 1
    weights = {e: float(w * s) for e, w, s in zip(edges, mags, signs)}
    noise_std = np.maximum(rng.uniform(0.0, 1.0, truth.n), NOISE_STD_FLOOR)
    return SemWeights(weights, noise_std)


def simulate_sem(truth: Dag, sem: SemWeights, m: int, seed: int) -> np.ndarray:
    """Draw m observations of the linear Gaussian model with fixed weights."""
    if m < 2:
        raise ValueError("need at least two samples")
    rng = substream(seed, "sem-noise")
    eps = rng.standard_normal((m, truth.n)) * sem.noise_std
    return _propagate(truth, sem, eps)


def sample_sem(truth: Dag, m: int, seed: int) -> tuple[np.ndarray, SemWeights]:
    """Draw model parameters and m observations of the linear Gaussian model.

    Each column is its parents' weighted sum plus Gaussian noise, filled in
    topological order; deterministic given the seed.
    """
    if m < 2:
        raise ValueError("need at least two samples")
    rng = substream(seed, "sem")
    sem = draw_sem_weights(truth, rng)
    eps = rng.standard_normal((m, truth.n)) * sem.noise_std
    return _propagate(truth, sem, eps), sem


def analytic_covariance(truth: Dag, sem: SemWeights) -> np.ndarray:
    """Population covariance (I - W)^-T D (I - W)^-1 of the linear model."""
    W = np.zeros((truth.n, truth.n))
    for (u, v), w in sem.weights.items():
        W[u, v] = w
    inv = np.linalg.inv(np.eye(truth.n) - W)
    return inv.T @ np.diag(sem.noise_std**2) @ inv


def standardize(data: np.ndarray) -> np.ndarray:
    """Rescale every column to sample mean 0 and standard deviation 1."""
    data = np.asarray(data, dtype=float)
    mean = data.mean(axis=0)
    std = data.std(axis=0, ddof=1)
    bad = np.flatnonzero(~(std > 0))
    if bad.size:
        raise DegenerateColumnError(f"column {int(bad[0])} has zero variance")
    return (data - mean) / std


def generate_problem(base, target_n: int, m: int, seed: int, base_name: str | None = None) -> Problem:
    """Full pipeline: replicate, sample, standardize, cache the true MEC."""
    if isinstance(base, str):
        base_name = base_name or base
        base = base_network(base)
    elif base_name is None:
        base_name = f"custom{base.n}"
    truth = replicate_network(base, target_n, seed)
    raw, _ = sample_sem(truth, m, seed)
    data = standardize(raw)
    return Problem(truth, dag_to_cpdag(truth), data, seed, base_name)


def write_data_csv(data: np.ndarray, path) -> None:
    """CSV with header x0,x1,...; values as shortest round-trip decimals."""
    data = np.asarray(data, dtype=float)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(f"x{j}" for j in range(data.shape[1])) + "\n")
        for row in data:
            f.write(",".join(repr(float(x)) for x in row) + "\n")


def read_data_csv(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data


def save_problem(problem: Problem, out_dir) -> None:
    """Write a problem bundle: truth.graph, data.csv, meta.json."""
    os.makedirs(out_dir, exist_ok=True)
    write_graph(problem.truth, os.path.join(out_dir, "truth.graph"))
    write_data_csv(problem.data, os.path.join(out_dir, "data.csv"))
    meta = {
        "base_name": problem.base_name,
        "seed": problem.seed,
        "m": int(problem.data.shape[0]),
        "n": problem.truth.n,
        "generator_version": _VERSION,
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_problem(bundle_dir) -> Problem:
    truth = read_graph(os.path.join(bundle_dir, "truth.graph"))
    if not isinstance(truth, Dag):
        raise ValueError("truth.graph must contain a dag")
    data = read_data_csv(os.path.join(bundle_dir, "data.csv"))
    with open(os.path.join(bundle_dir, "meta.json"), "r", encoding="utf-8") as f:
        meta = json.load(f)
    return Problem(truth, dag_to_cpdag(truth), data, int(meta["seed"]), meta["base_name"])
