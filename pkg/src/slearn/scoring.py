"""Sufficient statistics, Gaussian BIC, and conditional-independence tests.

All scoring runs off a correlation matrix: the generation pipeline feeds
standardized data, so correlations carry everything the Gaussian
likelihood needs up to constants that cancel in every comparison made
here. The BIC convention is "larger is better": the residual-variance
log-likelihood term is negated and the structural penalty lambda scales
the parameter count.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConditioningError, DegenerateColumnError, InsufficientSamplesError
from .graphs import Dag

_SINGULAR_EPS = 1e-12


class SufficientStats:
    """Cached correlation summaries of an m x d observation matrix."""

    __slots__ = ("n_vars", "m", "corr", "_resid_cache")

    def __init__(self, corr: np.ndarray, m: int):
        corr = np.asarray(corr, dtype=float)
        if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
            raise ValueError("correlation matrix must be square")
        if m < 2:
            raise ValueError("need at least two samples")
        if not np.allclose(corr, corr.T, atol=1e-8):
            raise ValueError("correlation matrix must be symmetric")
        if not np.allclose(np.diag(corr), 1.0, atol=1e-8):
            raise ValueError("correlation matrix must have unit diagonal")
        corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
        np.fill_diagonal(corr, 1.0)
        corr.setflags(write=False)
        self.corr = corr
        self.n_vars = corr.shape[0]
        self.m = int(m)
        self._resid_cache: dict[tuple[int, frozenset[int]], float] = {}

    @classmethod
    def from_data(cls, data: np.ndarray) -> "SufficientStats":
        data = np.asarray(data, dtype=float)
        if data.ndim != 2:
            raise ValueError("data must be an m x d matrix")
        sd = data.std(axis=0)
        bad = np.flatnonzero(~(sd > 0))
        if bad.size:
            raise DegenerateColumnError(f"column {int(bad[0])} has zero variance")
        return cls(np.corrcoef(data, rowvar=False), data.shape[0])

    def restrict(self, nodes) -> "SufficientStats":
        """Stats over a node subset; index k maps to nodes[k]."""
        idx = np.asarray(sorted(nodes), dtype=int)
        return SufficientStats(self.corr[np.ix_(idx, idx)], self.m)

    def __repr__(self):
        return f"SufficientStats(n_vars={self.n_vars}, m={self.m})"


def residual_variance(stats: SufficientStats, i: int, parents) -> float:
    """Variance of column i left after regressing it on `parents`.

    Computed on the correlation scale via the Schur complement
    1 - c' C_pp^{-1} c; cached per (i, parents).
    """
    pa = frozenset(int(p) for p in parents)
    if i in pa:
        raise ValueError(f"node {i} cannot be its own parent")
    key = (i, pa)
    cached = stats._resid_cache.get(key)
    if cached is not None:
        return cached
    C = stats.corr
    if not pa:
        sigma2 = 1.0
    elif len(pa) == 1:
        (p,) = pa
        sigma2 = 1.0 - float(C[p, i]) ** 2
    elif len(pa) == 2:
        p, q = sorted(pa)
        cpi, cqi, cpq = float(C[p, i]), float(C[q, i]), float(C[p, q])
        det = 1.0 - cpq * cpq
        if det < _SINGULAR_EPS:
            raise ConditioningError(f"singular parent submatrix for node {i}")
        sigma2 = 1.0 - (cpi * cpi + cqi * cqi - 2.0 * cpi * cqi * cpq) / det
    else:
        idx = sorted(pa)
        c = C[idx, i]
        sub = C[np.ix_(idx, idx)]
        try:
            sol = np.linalg.solve(sub, c)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(f"singular parent submatrix for node {i}") from exc
        sigma2 = float(1.0 - c @ sol)
    if not math.isfinite(sigma2) or sigma2 < _SINGULAR_EPS:
        raise ConditioningError(f"degenerate residual variance for node {i} given {sorted(pa)}")
    stats._resid_cache[key] = sigma2
    return sigma2


def local_bic(stats: SufficientStats, i: int, parents, lam: float) -> float:
    """Node i's BIC contribution given `parents`; larger is better."""
    sigma2 = residual_variance(stats, i, parents)
    k = len(set(parents))
    return -stats.m * math.log(sigma2) - lam * k * math.log(stats.m)


def total_bic(stats: SufficientStats, g: Dag, lam: float) -> float:
    """Sum of local scores over the DAG; decomposable by construction."""
    if g.n != stats.n_vars:
        raise ValueError(f"graph has {g.n} nodes, stats has {stats.n_vars}")
    return sum(local_bic(stats, i, g.parents(i), lam) for i in range(g.n))


def partial_correlation(stats: SufficientStats, i: int, j: int, cond) -> float:
    """Correlation of i and j after conditioning on the nodes in `cond`."""
    cond = sorted(set(int(s) for s in cond))
    if i == j:
        raise ValueError("i and j must differ")
    if i in cond or j in cond:
        raise ValueError("i and j cannot appear in the conditioning set")
    C = stats.corr
    if not cond:
        r = float(C[i, j])
    elif len(cond) == 1:
        k = cond[0]
        den = (1.0 - C[i, k] ** 2) * (1.0 - C[j, k] ** 2)
        if den < _SINGULAR_EPS:
            raise ConditioningError(f"conditioning on {k} is degenerate")
        r = float((C[i, j] - C[i, k] * C[j, k]) / math.sqrt(den))
    else:
        idx = [i, j] + cond
        sub = C[np.ix_(idx, idx)]
        try:
            prec = np.linalg.inv(sub)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(f"singular submatrix for ({i}, {j} | {cond})") from exc
        den = prec[0, 0] * prec[1, 1]
        if not np.isfinite(den) or den < _SINGULAR_EPS:
            raise ConditioningError(f"degenerate precision for ({i}, {j} | {cond})")
        r = float(-prec[0, 1] / math.sqrt(den))
    return min(1.0, max(-1.0, r))


def two_sided_p(z: float) -> float:
    """Two-sided standard-normal tail mass 2 * (1 - Phi(|z|))."""
    return math.erfc(abs(z) / math.sqrt(2.0))


def fisher_z_test(
    stats: SufficientStats, i: int, j: int, cond, alpha: float
) -> tuple[bool, float]:
    """Two-sided Fisher-z test of i _||_ j given `cond`.

    Returns (independent, p_value); independent iff p > alpha.
    """
    cond = sorted(set(int(s) for s in cond))
    dof = stats.m - len(cond) - 3
    if dof < 1:
        raise InsufficientSamplesError(
            f"m={stats.m} too small for |S|={len(cond)} (need m >= |S| + 4)"
        )
    r = partial_correlation(stats, i, j, cond)
    r = min(1.0 - 1e-15, max(-1.0 + 1e-15, r))
    z = math.sqrt(dof) * math.atanh(r)
    p = two_sided_p(z)
    return p > alpha, p
