"""Accuracy metrics between equivalence classes: F1 over skeleton
adjacencies, F1 over directed arrowheads, and structural Hamming distance.

All three compare CPDAGs; a Dag argument is converted to its CPDAG first,
so unidentifiable orientations are never penalized.
"""

from __future__ import annotations

from .graphs import Cpdag, Dag, dag_to_cpdag


def as_cpdag(g: Dag | Cpdag) -> Cpdag:
    return dag_to_cpdag(g) if isinstance(g, Dag) else g


def _check_pair(truth: Cpdag, est: Cpdag) -> None:
    if truth.n != est.n:
        raise ValueError(f"node counts differ: {truth.n} vs {est.n}")


def _f1(tp: int, fp: int, fn: int) -> float:
    if tp == fp == fn == 0:
        return 1.0  # both sides empty
    return 2.0 * tp / (2.0 * tp + fp + fn)


def f1_adjacent(truth: Dag | Cpdag, est: Dag | Cpdag) -> float:
    """Harmonic mean of precision and recall over skeleton adjacencies."""
    truth, est = as_cpdag(truth), as_cpdag(est)
    _check_pair(truth, est)
    t, e = truth.skeleton(), est.skeleton()
    tp = len(t & e)
    return _f1(tp, len(e) - tp, len(t) - tp)


def f1_arrowhead(truth: Dag | Cpdag, est: Dag | Cpdag) -> float:
    """Harmonic mean of precision and recall over directed arrowheads.

    An arrowhead u -> v counts as shared only when both graphs direct it
    the same way; a reversed, undirected, or absent counterpart counts
    against.
    """
    truth, est = as_cpdag(truth), as_cpdag(est)
    _check_pair(truth, est)
    tp = len(truth.directed & est.directed)
    return _f1(tp, len(est.directed) - tp, len(truth.directed) - tp)


def shd(truth: Dag | Cpdag, est: Dag | Cpdag) -> int:
    """Edge insertions, deletions, and mark changes separating two CPDAGs.

    Each node pair contributes 1 if adjacent in exactly one graph, and 1 if
    adjacent in both with a different mark (directed vs undirected, or
    opposite directions).
    """
    truth, est = as_cpdag(truth), as_cpdag(est)
    _check_pair(truth, est)

    def mark(g: Cpdag, u: int, v: int) -> str:
        if (u, v) in g.directed:
            return ">"
        if (v, u) in g.directed:
            return "<"
        return "-"

    t, e = truth.skeleton(), est.skeleton()
    dist = len(t ^ e)
    dist += sum(mark(truth, u, v) != mark(est, u, v) for u, v in t & e)
    return dist
