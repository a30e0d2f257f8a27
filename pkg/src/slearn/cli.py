"""Command-line entry point and benchmark harness.

Subcommands: `gen` (write a problem bundle), `train` (learn an ensemble),
`run` (solve a bundle with a solver, direct or through the
partition-estimation-fusion pipeline), `eval` (score a learned graph
against a bundle's truth), and `bench` (generate-run-eval sweeps that
produce long-format CSVs).

Exit codes: 0 success, 2 argument error, 3 data error, 4 internal
invariant violation. All randomness flows from one `--seed` through named
substreams, so repeated runs are bit-reproducible; wall-clock timings are
kept out of the deterministic outputs (metrics.csv) and land in
timings.csv / sidecar metadata instead.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .datagen import Problem, base_network, generate_problem, load_problem, save_problem
from .graphs import Dag
from .ensemble import (
    Sle,
    auto_sle,
    default_space,
    load_sle,
    save_sle,
    solve_with_sle,
)
from .errors import SlearnError
from .fixtures import BUILTIN_SLES, fixture_path, load_fixture_sle
from .graphs import Cpdag, read_graph, write_graph
from .learners import DEFAULT_GES, DEFAULT_PC_STABLE, AlgorithmConfig, run_config
from .metrics import f1_adjacent, f1_arrowhead, shd
from .pef import DEFAULT_MAX_FRAC, DEFAULT_MIN_FRAC, p_sle
from .rng import stage_key

EVAL_FIELDS = ("problem_id", "method", "f1_adj", "f1_arr", "shd", "runtime_s", "seed")
METRIC_FIELDS = ("problem_id", "method", "f1_adj", "f1_arr", "shd", "seed")
TIMING_FIELDS = ("problem_id", "method", "runtime_s")
_SEED_MASK = (1 << 63) - 1

_NAMED_CONFIGS = {
    "ges_default": DEFAULT_GES,
    "pc_stable_default": DEFAULT_PC_STABLE,
}


def resolve_base(spec: str) -> tuple[Dag, str]:
    """Resolve a base network: built-in name, fixture name, or graph path."""
    try:
        return base_network(spec), spec
    except ValueError:
        pass
    path = Path(spec)
    if not path.exists():
        try:
            path = fixture_path(spec)
        except FileNotFoundError:
            raise ValueError(f"unknown base network {spec!r}") from None
    g = read_graph(path)
    if not isinstance(g, Dag):
        raise ValueError(f"base network file {path} must contain a dag")
    return g, path.stem


def resolve_solver(spec: str) -> AlgorithmConfig | Sle:
    """Resolve a solver spec: a named config, a fixture name, or a JSON path."""
    if spec in _NAMED_CONFIGS:
        return _NAMED_CONFIGS[spec]
    if spec in BUILTIN_SLES:
        return load_fixture_sle(spec)
    path = Path(spec)
    if not path.exists():
        try:
            path = fixture_path(spec)
        except FileNotFoundError:
            raise ValueError(f"unknown solver {spec!r}") from None
    with open(path, "r", encoding="utf-8") as f:
        obj = json.load(f)
    if "members" in obj:
        return Sle.from_json_dict(obj)
    return AlgorithmConfig.from_json_dict(obj)


@dataclass
class RunFlags:
    max_frac: float = DEFAULT_MAX_FRAC
    min_frac: float = DEFAULT_MIN_FRAC
    fuse_lambda: float = 2.0
    selection_lambda: float = 2.0


def solve_problem(
    problem: Problem,
    solver: AlgorithmConfig | Sle,
    mode: str,
    flags: RunFlags | None = None,
    trace: dict | None = None,
) -> tuple[Cpdag, float]:
    """Run one solver on one problem; returns (estimate, runtime seconds)."""
    if mode not in ("pef", "direct"):
        raise ValueError(f"unknown mode {mode!r}")
    flags = flags or RunFlags()
    stats = problem.stats
    start = time.perf_counter()
    if mode == "pef":
        est = p_sle(
            stats,
            solver,
            flags.max_frac,
            flags.min_frac,
            flags.fuse_lambda,
            flags.selection_lambda,
            trace,
        )
    elif isinstance(solver, Sle):
        audit: list = []
        est, chosen = solve_with_sle(solver, stats, flags.selection_lambda, audit)
        if trace is not None:
            trace["chosen"] = chosen
            trace["member_bics"] = audit[0]["member_bics"]
    else:
        est = run_config(stats, solver)
    return est, time.perf_counter() - start


def eval_row(
    problem: Problem,
    est: Cpdag,
    method: str,
    runtime_s: float | None = None,
) -> dict:
    """Long-format result row for one (problem, method) pair."""
    truth = problem.truth_cpdag
    return {
        "problem_id": problem.problem_id,
        "method": method,
        "f1_adj": f1_adjacent(truth, est),
        "f1_arr": f1_arrowhead(truth, est),
        "shd": shd(truth, est),
        "runtime_s": runtime_s,
        "seed": problem.seed,
    }


def write_csv(path, fieldnames, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row[k]) for k in fieldnames})


# --------------------------------------------------------------------------
# bench harness
# --------------------------------------------------------------------------


@dataclass
class BenchConfig:
    networks: tuple[str, ...] = ("asia8", "alarm37")
    sizes: tuple[int, ...] = (200, 500)
    n_seeds: int = 10
    m: int = 1000
    seed: int = 0
    methods: tuple[tuple[str, str, str], ...] = (
        ("p_sle", "pef", "paper_sle"),
        ("p_ges", "pef", "ges_default"),
        ("p_pc", "pef", "pc_stable_default"),
    )
    flags: RunFlags = field(default_factory=RunFlags)
    out_dir: str | None = None
    jobs: int = 1


def problem_seed(master: int, network: str, size: int, rep: int) -> int:
    return (master ^ stage_key(f"problem-{network}-n{size}-r{rep}")) & _SEED_MASK


def _bench_task(args) -> tuple[dict, dict, str]:
    problem, method_name, mode, solver_spec, flags = args
    solver = resolve_solver(solver_spec)
    trace: dict = {}
    est, runtime = solve_problem(problem, solver, mode, flags, trace)
    row = eval_row(problem, est, method_name, runtime)
    audit = {"problem_id": problem.problem_id, "method": method_name}
    if mode == "pef":
        audit["estimate"] = trace.get("estimate", [])
    else:
        audit["chosen"] = trace.get("chosen")
        audit["member_bics"] = trace.get("member_bics")
    buf = io.StringIO()
    write_graph(est, buf)
    return row, audit, buf.getvalue()


def run_bench(cfg: BenchConfig) -> dict:
    """Generate problems, run every method, and collect result tables.

    Returns {"metrics": rows, "timings": rows, "audits": records}; when
    cfg.out_dir is set it also writes problem bundles, learned graphs,
    metrics.csv, timings.csv, and audits.json. metrics.csv and audits.json
    carry no wall-clock values, so identical seeds reproduce them
    byte-for-byte.
    """
    out_dir = Path(cfg.out_dir) if cfg.out_dir else None
    problems: list[Problem] = []
    for network in cfg.networks:
        for size in cfg.sizes:
            for rep in range(cfg.n_seeds):
                pseed = problem_seed(cfg.seed, network, size, rep)
                problem = generate_problem(network, size, cfg.m, pseed)
                problems.append(problem)
                if out_dir:
                    save_problem(problem, out_dir / "problems" / problem.problem_id)

    tasks = [
        (problem, name, mode, solver_spec, cfg.flags)
        for problem in problems
        for name, mode, solver_spec in cfg.methods
    ]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            outcomes = list(pool.map(_bench_task, tasks))
    else:
        outcomes = [_bench_task(t) for t in tasks]

    rows = [row for row, _, _ in outcomes]
    audits = [audit for _, audit, _ in outcomes]
    metrics = [{k: row[k] for k in METRIC_FIELDS} for row in rows]
    timings = [{k: row[k] for k in TIMING_FIELDS} for row in rows]

    if out_dir:
        graphs_dir = out_dir / "graphs"
        graphs_dir.mkdir(parents=True, exist_ok=True)
        for (row, _, text) in outcomes:
            name = f"{row['problem_id']}--{row['method']}.graph"
            (graphs_dir / name).write_text(text, encoding="utf-8")
        write_csv(out_dir / "metrics.csv", METRIC_FIELDS, metrics)
        write_csv(out_dir / "timings.csv", TIMING_FIELDS, timings)
        with open(out_dir / "audits.json", "w", encoding="utf-8") as f:
            json.dump(audits, f, indent=2, sort_keys=True)
            f.write("\n")
    return {"metrics": metrics, "timings": timings, "audits": audits, "rows": rows}


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_gen(args) -> int:
    base, name = resolve_base(args.base)
    problem = generate_problem(base, args.target_n, args.m, args.seed, base_name=name)
    save_problem(problem, args.out)
    print(f"wrote {problem.problem_id} to {args.out}")
    return 0


def cmd_train(args) -> int:
    problems_dir = Path(args.problems)
    bundles = sorted(p for p in problems_dir.iterdir() if (p / "meta.json").exists())
    if not bundles:
        raise SlearnError(f"no problem bundles under {problems_dir}")
    training = [load_problem(b) for b in bundles]
    trace: list = []
    sle = auto_sle(training, default_space(), args.k, args.budget, args.seed, trace=trace)
    fingerprint = hashlib.blake2b(
        "\n".join(p.problem_id for p in training).encode(), digest_size=8
    ).hexdigest()
    metadata = {
        "seed": args.seed,
        "k": args.k,
        "budget": args.budget,
        "training_fingerprint": fingerprint,
        "q_trace": trace,
    }
    save_sle(sle, args.out, metadata)
    print(f"trained ensemble of {len(sle)} members; Q trace: {[s['q'] for s in trace]}")
    return 0


def cmd_run(args) -> int:
    problem = load_problem(args.bundle)
    solver = resolve_solver(args.solver)
    flags = RunFlags(args.max_frac, args.min_frac, args.fuse_lambda, args.selection_lambda)
    trace: dict = {}
    est, runtime = solve_problem(problem, solver, args.mode, flags, trace)
    write_graph(est, args.out)
    meta = {
        "problem_id": problem.problem_id,
        "method": args.method or f"{args.mode}:{args.solver}",
        "mode": args.mode,
        "solver": args.solver,
        "runtime_s": runtime,
        "seed": problem.seed,
    }
    with open(str(args.out) + ".meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as f:
            json.dump(trace, f, indent=2, sort_keys=True)
            f.write("\n")
    print(f"wrote {args.out} ({runtime:.3f}s)")
    return 0


def cmd_eval(args) -> int:
    problem = load_problem(args.bundle)
    est = read_graph(args.graph)
    meta_path = Path(str(args.graph) + ".meta.json")
    runtime = None
    method = args.method
    if meta_path.exists():
        with open(meta_path, "r", encoding="utf-8") as f:
            meta = json.load(f)
        runtime = meta.get("runtime_s")
        method = method or meta.get("method")
    row = eval_row(problem, est, method or "unknown", runtime)
    if args.out:
        write_csv(args.out, EVAL_FIELDS, [row])
    else:
        writer = csv.DictWriter(sys.stdout, fieldnames=EVAL_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerow({k: ("" if row[k] is None else row[k]) for k in EVAL_FIELDS})
    return 0


def _parse_methods(text: str) -> tuple[tuple[str, str, str], ...]:
    methods = []
    for part in text.split(","):
        name, _, rest = part.partition("=")
        mode, _, solver = rest.partition(":")
        if not (name and mode in ("pef", "direct") and solver):
            raise ValueError(f"bad method spec {part!r}; want name=mode:solver")
        methods.append((name, mode, solver))
    return tuple(methods)


def cmd_bench(args) -> int:
    cfg = BenchConfig(
        networks=tuple(args.networks.split(",")),
        sizes=tuple(int(s) for s in args.sizes.split(",")),
        n_seeds=args.n_seeds,
        m=args.m,
        seed=args.seed,
        methods=_parse_methods(args.methods),
        flags=RunFlags(args.max_frac, args.min_frac, args.fuse_lambda, args.selection_lambda),
        out_dir=args.out_dir,
        jobs=args.jobs,
    )
    result = run_bench(cfg)
    by_method: dict[str, list] = {}
    for row in result["metrics"]:
        by_method.setdefault(row["method"], []).append(row["f1_adj"])
    for method, values in sorted(by_method.items()):
        values.sort()
        median = values[len(values) // 2]
        print(f"{method}: median F1-adjacent {median:.3f} over {len(values)} runs")
    print(f"wrote {len(result['metrics'])} result rows to {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slearn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a problem bundle")
    g.add_argument("--base", required=True, help="base network name or fixture")
    g.add_argument("--target-n", type=int, required=True)
    g.add_argument("--m", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="learn an ensemble from problem bundles")
    t.add_argument("--problems", required=True, help="directory of bundles")
    t.add_argument("--k", type=int, default=4)
    t.add_argument("--budget", type=int, default=200, help="evaluations per iteration")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    r = sub.add_parser("run", help="solve a bundle")
    r.add_argument("--bundle", required=True)
    r.add_argument("--solver", required=True, help="fixture name, named config, or JSON path")
    r.add_argument("--mode", choices=("pef", "direct"), default="pef")
    r.add_argument("--method", default=None, help="method label for eval rows")
    r.add_argument("--max-frac", type=float, default=DEFAULT_MAX_FRAC)
    r.add_argument("--min-frac", type=float, default=DEFAULT_MIN_FRAC)
    r.add_argument("--fuse-lambda", type=float, default=2.0)
    r.add_argument("--selection-lambda", type=float, default=2.0)
    r.add_argument("--trace", default=None, help="write run trace JSON here")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    e = sub.add_parser("eval", help="score a learned graph against a bundle")
    e.add_argument("--bundle", required=True)
    e.add_argument("--graph", required=True)
    e.add_argument("--method", default=None)
    e.add_argument("--out", default=None, help="CSV path (default: stdout)")
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="full generate-run-eval sweep")
    b.add_argument("--networks", default="asia8,alarm37")
    b.add_argument("--sizes", default="200,500")
    b.add_argument("--n-seeds", type=int, default=10)
    b.add_argument("--m", type=int, default=1000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument(
        "--methods",
        default="p_sle=pef:paper_sle,p_ges=pef:ges_default,p_pc=pef:pc_stable_default",
    )
    b.add_argument("--max-frac", type=float, default=DEFAULT_MAX_FRAC)
    b.add_argument("--min-frac", type=float, default=DEFAULT_MIN_FRAC)
    b.add_argument("--fuse-lambda", type=float, default=2.0)
    b.add_argument("--selection-lambda", type=float, default=2.0)
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--out-dir", required=True)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"argument error: {exc}", file=sys.stderr)
        return 2
    except (SlearnError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # internal invariant violation
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
