"""Structure learning ensembles and their automatic construction.

An ensemble runs its member algorithms individually. During training its
quality on a problem is the best member's F1-adjacent + F1-arrowhead sum
against the known truth; the ensemble quality over a training set is the
average of those per-problem maxima (0 for the empty ensemble). Ensembles
are built greedily: each iteration a budgeted black-box search looks for
the config with the best marginal quality gain, stopping early when no
positive gain is found. At test time, where no truth exists, the member
output with the best BIC score is returned.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

from .errors import InferenceError, SlearnError
from .graphs import Cpdag, best_effort_extension
from .learners import (
    ALPHA_RANGE,
    DEFAULT_GES,
    DEFAULT_PC_STABLE,
    GES,
    MAX_DEPTH_RANGE,
    MAX_PARENTS_RANGE,
    PC_STABLE,
    PENALTY_RANGE,
    AlgorithmConfig,
    run_config,
)
from .metrics import f1_adjacent, f1_arrowhead
from .rng import substream
from .scoring import SufficientStats, total_bic

log = logging.getLogger(__name__)

GAIN_EPS = 1e-12


@dataclass(frozen=True)
class Sle:
    """Ordered list of member algorithm configurations."""

    members: tuple[AlgorithmConfig, ...]

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def to_json_dict(self, metadata: dict | None = None) -> dict:
        out = {"members": [m.to_json_dict() for m in self.members]}
        if metadata is not None:
            out["metadata"] = metadata
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Sle":
        return cls(tuple(AlgorithmConfig.from_json_dict(m) for m in obj["members"]))


def save_sle(sle: Sle, path, metadata: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(sle.to_json_dict(metadata), f, indent=2, sort_keys=True)
        f.write("\n")


def load_sle(path) -> Sle:
    with open(path, "r", encoding="utf-8") as f:
        return Sle.from_json_dict(json.load(f))


def _problem_key(problem):
    return getattr(problem, "problem_id", problem)


class QualityCache:
    """Memo of quality values keyed by (config, problem id)."""

    def __init__(self):
        self._table: dict = {}

    def get_or_compute(self, config, problem, fn) -> float:
        key = (config, _problem_key(problem))
        value = self._table.get(key)
        if value is None:
            value = fn(config, problem)
            self._table[key] = value
        return value

    def __len__(self):
        return len(self._table)


def quality(config: AlgorithmConfig, problem) -> float:
    """F1-adjacent + F1-arrowhead of the config's output against truth.

    A learner failure scores 0 (logged) so the quality functional stays
    total.
    """
    try:
        est = run_config(problem.stats, config)
    except SlearnError as exc:
        log.warning("learner %s failed on %s: %s", config.label(), _problem_key(problem), exc)
        return 0.0
    truth = problem.truth_cpdag
    return f1_adjacent(truth, est) + f1_arrowhead(truth, est)


def ensemble_quality(members, training_set, quality_fn=quality, cache: QualityCache | None = None) -> float:
    """Average over problems of the best member quality; 0 if empty."""
    members = list(members)
    if not members or not training_set:
        return 0.0
    if cache is None:
        cache = QualityCache()
    total = 0.0
    for problem in training_set:
        total += max(cache.get_or_compute(c, problem, quality_fn) for c in members)
    return total / len(training_set)


@dataclass(frozen=True)
class ConfigSpace:
    """Search space handed to the marginal-gain optimizer.

    `seeds` are promising starting configs scored first each iteration.
    A non-None `discrete` pool replaces sampling entirely: candidates are
    taken from it in order (exhaustive once the budget covers it).
    """

    seeds: tuple[AlgorithmConfig, ...] = ()
    discrete: tuple[AlgorithmConfig, ...] | None = None
    kinds: tuple[str, ...] = (GES, PC_STABLE)


def default_space() -> ConfigSpace:
    """Both learners, seeded with their stock configs and the canned
    pre-learned ensemble members."""
    from .fixtures import load_fixture_sle

    seeds = [DEFAULT_PC_STABLE, DEFAULT_GES]
    seeds.extend(load_fixture_sle("paper_sle").members)
    return ConfigSpace(seeds=tuple(dict.fromkeys(seeds)))


def _log_uniform_int(rng, lo: int, hi: int) -> int:
    value = int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))
    return min(hi, max(lo, value))


def _random_config(space: ConfigSpace, rng) -> AlgorithmConfig:
    kind = space.kinds[int(rng.integers(len(space.kinds)))]
    if kind == GES:
        penalty = math.exp(rng.uniform(math.log(PENALTY_RANGE[0]), math.log(PENALTY_RANGE[1])))
        max_parents = _log_uniform_int(rng, *MAX_PARENTS_RANGE)
        return AlgorithmConfig.ges(penalty, max_parents, bool(rng.integers(2)))
    alpha = rng.uniform(*ALPHA_RANGE)
    return AlgorithmConfig.pc_stable(alpha, _log_uniform_int(rng, *MAX_DEPTH_RANGE))


def _perturb_config(config: AlgorithmConfig, rng) -> AlgorithmConfig:
    if config.kind == GES:
        penalty = math.exp(math.log(config.penalty) + 0.25 * rng.standard_normal())
        penalty = min(PENALTY_RANGE[1], max(PENALTY_RANGE[0], penalty))
        mp = int(round(math.exp(math.log(config.max_parents) + 0.25 * rng.standard_normal())))
        mp = min(MAX_PARENTS_RANGE[1], max(MAX_PARENTS_RANGE[0], mp))
        faith = config.faithfulness if rng.random() >= 0.1 else not config.faithfulness
        return AlgorithmConfig.ges(penalty, mp, faith)
    alpha = config.alpha + 0.02 * rng.standard_normal()
    alpha = min(ALPHA_RANGE[1], max(ALPHA_RANGE[0], alpha))
    depth = int(round(math.exp(math.log(config.max_depth) + 0.25 * rng.standard_normal())))
    depth = min(MAX_DEPTH_RANGE[1], max(MAX_DEPTH_RANGE[0], depth))
    return AlgorithmConfig.pc_stable(alpha, depth)


def optimize_marginal_gain(
    current,
    training_set,
    space: ConfigSpace,
    budget: int,
    seed: int,
    quality_fn=quality,
    cache: QualityCache | None = None,
) -> tuple[AlgorithmConfig | None, float]:
    """Budgeted search for the config with the best marginal quality gain.

    Continuous spaces split the budget 25% seeds / 50% uniform random
    (log-uniform for the integer and penalty parameters) / 25% Gaussian
    perturbations of the best candidate so far. Ties break toward the
    earliest evaluation.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    if cache is None:
        cache = QualityCache()
    rng = substream(seed, "optimize-gain")

    baseline = [
        max((cache.get_or_compute(c, d, quality_fn) for c in current), default=0.0)
        for d in training_set
    ]
    denom = max(len(training_set), 1)

    def gain_of(config: AlgorithmConfig) -> float:
        total = 0.0
        for base, problem in zip(baseline, training_set):
            q = cache.get_or_compute(config, problem, quality_fn)
            if q > base:
                total += q - base
        return total / denom

    if space.discrete is not None:
        candidates = list(space.discrete[:budget])
    else:
        n_seed = min(len(space.seeds), budget // 4)
        n_perturb = budget // 4 if budget >= 4 else 0
        n_random = budget - n_seed - n_perturb
        candidates = list(space.seeds[:n_seed])
        candidates.extend(_random_config(space, rng) for _ in range(n_random))
        candidates.extend(None for _ in range(n_perturb))  # filled from best-so-far

    best: AlgorithmConfig | None = None
    best_gain = -math.inf
    best_config_overall: AlgorithmConfig | None = None
    for candidate in candidates:
        if candidate is None:
            base = best_config_overall if best_config_overall is not None else _random_config(space, rng)
            candidate = _perturb_config(base, rng)
        g = gain_of(candidate)
        if g > best_gain:
            best, best_gain = candidate, g
            best_config_overall = candidate
    if best is None:
        return None, 0.0
    return best, best_gain


def auto_sle(
    training_set,
    space: ConfigSpace,
    k: int,
    opt_budget: int,
    seed: int,
    quality_fn=quality,
    trace: list | None = None,
) -> Sle:
    """Greedy ensemble construction maximizing marginal quality gain.

    Adds the best-found config per iteration and stops early when the
    best gain is not positive (within 1e-12). Deterministic given
    (training_set, space, k, opt_budget, seed).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if opt_budget < 1:
        raise ValueError("opt_budget must be at least 1")
    cache = QualityCache()
    members: list[AlgorithmConfig] = []
    for i in range(k):
        config, gain = optimize_marginal_gain(
            members, training_set, space, opt_budget, seed + i, quality_fn, cache
        )
        if config is None or gain <= GAIN_EPS:
            if not members:
                log.warning("no config achieved positive quality; ensemble is empty")
            break
        members.append(config)
        q = ensemble_quality(members, training_set, quality_fn, cache)
        if trace is not None:
            trace.append(
                {"iteration": i + 1, "added": config.to_json_dict(), "gain": gain, "q": q}
            )
        log.info("iteration %d: added %s (gain %.4f, Q %.4f)", i + 1, config.label(), gain, q)
    return Sle(tuple(members))


def solve_with_sle(
    sle: Sle,
    stats: SufficientStats,
    selection_lambda: float = 2.0,
    audit: list | None = None,
) -> tuple[Cpdag, int]:
    """Run every member and return the output with the best BIC score.

    Scores are the total BIC of a consistent extension of each member's
    CPDAG (every extension of the same class scores identically; invalid
    patterns are force-extended first). Ties break toward the lowest
    member index; failed members are excluded and an all-failure raises
    InferenceError.
    """
    if len(sle) == 0:
        raise ValueError("ensemble has no members")
    outputs: list[Cpdag | None] = []
    bics: list[float | None] = []
    for config in sle:
        try:
            est = run_config(stats, config)
            ext = best_effort_extension(est)
            bic = total_bic(stats, ext, selection_lambda)
        except SlearnError as exc:
            log.warning("member %s failed: %s", config.label(), exc)
            outputs.append(None)
            bics.append(None)
            continue
        outputs.append(est)
        bics.append(bic)
    chosen = -1
    for i, bic in enumerate(bics):
        if bic is not None and (chosen < 0 or bic > bics[chosen]):
            chosen = i
    if chosen < 0:
        raise InferenceError("every ensemble member failed")
    if audit is not None:
        audit.append({"member_bics": bics, "chosen": chosen})
    return outputs[chosen], chosen
