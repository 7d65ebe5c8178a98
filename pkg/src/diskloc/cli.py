"""Command-line interface.

Four subcommands cover the full workflow: ``generate`` draws a random
instance to a JSON file, ``solve`` runs one solver on an instance and writes
a trace CSV plus an estimate JSON, ``experiment`` runs a Monte Carlo
scenario described by a JSON file, and ``gap`` certifies the optimality gap
of an estimate.

Exit codes: 0 success, 2 usage or malformed input, 3 failed validation or
generation, 4 iteration budget exhausted before the stop rule fired,
5 internal error.
"""

import argparse
import json
import sys

import jsonschema
import numpy as np

from . import cost, network, simulate
from .network import GenerationError, Problem, ValidationError, generate_geometric
from .solvers import AsyncExactLocalizer, AsyncInexactLocalizer, ParallelLocalizer

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_BUDGET = 4
EXIT_INTERNAL = 5

SOLVERS = {
    "parallel": ParallelLocalizer,
    "async-exact": AsyncExactLocalizer,
    "async-inexact": AsyncInexactLocalizer,
}

#: Schema of the ``experiment`` scenario file.
SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["problem", "sigmas", "trials", "solvers", "master_seed", "output"],
    "properties": {
        "problem": {
            "type": "object",
            "additionalProperties": False,
            "minProperties": 1,
            "maxProperties": 1,
            "properties": {
                "file": {"type": "string"},
                "generate": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["n", "p"],
                    "properties": {
                        "n": {"type": "integer", "minimum": 1},
                        "p": {"type": "integer", "minimum": 1, "maximum": 3},
                        "radius": {"type": "number", "exclusiveMinimum": 0},
                        "target_avg_degree": {"type": "number", "exclusiveMinimum": 0},
                        "anchors_corners": {"type": "boolean"},
                        "sigma": {"type": "number", "minimum": 0},
                        "seed": {"type": "integer"},
                    },
                },
            },
        },
        "sigmas": {
            "type": "array",
            "minItems": 1,
            "items": {"type": "number", "minimum": 0},
        },
        "trials": {"type": "integer", "minimum": 1},
        "solvers": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name"],
                "properties": {
                    "name": {"enum": sorted(SOLVERS)},
                    "label": {"type": "string", "minLength": 1},
                    "options": {"type": "object"},
                },
            },
        },
        "master_seed": {"type": "integer"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "required": ["csv", "summary"],
            "properties": {
                "csv": {"type": "string"},
                "summary": {"type": "string"},
            },
        },
    },
}


class _UsageError(Exception):
    """Malformed input surfaced to the user as a usage failure."""


def _load_json(path, what):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise _UsageError(f"cannot read {what} file {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise _UsageError(f"{what} file {path!r} is not valid JSON: {exc}") from exc


def _load_problem(path):
    data = _load_json(path, "problem")
    try:
        return Problem.from_dict(data)
    except ValueError as exc:
        raise _UsageError(f"problem file {path!r}: {exc}") from exc


def cmd_generate(args):
    problem = generate_geometric(
        args.n, args.p,
        connect_radius=args.radius,
        target_avg_degree=args.target_avg_degree,
        anchors_at_corners=args.anchors_corners,
        rng_seed=args.seed,
    )
    if args.sigma > 0:
        noise_seed = np.random.SeedSequence(args.seed, spawn_key=(1,))
        edge_d, link_r = simulate.gen_measurements(problem, args.sigma, noise_seed)
        problem = problem.with_measurements(edge_d, link_r)
    problem.save(args.out)
    print(f"wrote {args.out}: n={problem.n} p={problem.p} "
          f"edges={problem.n_edges} anchor links={problem.n_links} "
          f"average degree {problem.average_degree:.3f}")
    return EXIT_OK


def cmd_solve(args):
    problem = _load_problem(args.problem)
    est = SOLVERS[args.solver](
        max_iterations=args.max_iterations,
        stop_rule=args.stop,
        eps_gradient=args.eps_gradient,
        eps_improvement=args.eps_improvement,
        random_state=args.seed,
        record_trace=True,
        keep_iterates=False,
    )
    est.fit(problem)
    trace_path = f"{args.out}.trace.csv"
    estimate_path = f"{args.out}.estimate.json"
    est.trace_.to_csv(trace_path)
    with open(estimate_path, "w", encoding="utf-8") as fh:
        json.dump(est.estimate_.tolist(), fh, indent=2)
        fh.write("\n")
    per_sensor = est.broadcasts_ / problem.n
    print(f"{args.solver}: {est.n_iterations_} iterations, "
          f"terminated by {est.termination_}, fhat {est.fhat_:.6g}, "
          f"gradient norm {est.grad_norm_:.6g}, "
          f"{per_sensor:.6g} broadcasts per sensor")
    print(f"wrote {trace_path} and {estimate_path}")
    if not est.converged_:
        print(f"stop rule {args.stop!r} did not fire within "
              f"{args.max_iterations} iterations", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def _scenario_problem(block):
    if "file" in block:
        return _load_problem(block["file"])
    gen = dict(block["generate"])
    sigma = gen.pop("sigma", 0.0)
    seed = gen.pop("seed", 0)
    try:
        problem = generate_geometric(
            gen.pop("n"), gen.pop("p"),
            connect_radius=gen.pop("radius", None),
            target_avg_degree=gen.pop("target_avg_degree", None),
            anchors_at_corners=gen.pop("anchors_corners", True),
            rng_seed=seed,
        )
    except ValueError as exc:
        raise _UsageError(f"scenario generate block: {exc}") from exc
    if sigma > 0:
        noise_seed = np.random.SeedSequence(seed, spawn_key=(1,))
        edge_d, link_r = simulate.gen_measurements(problem, sigma, noise_seed)
        problem = problem.with_measurements(edge_d, link_r)
    return problem


def cmd_experiment(args):
    scenario = _load_json(args.scenario, "scenario")
    try:
        jsonschema.validate(scenario, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(q) for q in exc.absolute_path) or "top level"
        raise _UsageError(f"scenario does not match the schema at {where}: "
                          f"{exc.message}") from exc
    problem = _scenario_problem(scenario["problem"])
    solvers = []
    for entry in scenario["solvers"]:
        label = entry.get("label", entry["name"])
        options = entry.get("options", {})
        try:
            solvers.append((label, SOLVERS[entry["name"]](**options)))
        except TypeError as exc:
            raise _UsageError(f"solver {label!r}: {exc}") from exc
    try:
        config = simulate.ExperimentConfig(
            problem=problem,
            sigmas=scenario["sigmas"],
            n_trials=scenario["trials"],
            solvers=solvers,
            master_seed=scenario["master_seed"],
        )
    except ValidationError:
        raise
    except ValueError as exc:
        raise _UsageError(f"scenario: {exc}") from exc
    result = simulate.run_experiment(config, n_workers=args.workers)
    csv_path = scenario["output"]["csv"]
    summary_path = scenario["output"]["summary"]
    result.write_csv(csv_path)
    result.write_summary(summary_path)
    for group in result.summary:
        line = (f"{group['solver']} sigma={group['sigma']:g}: "
                f"{group['completed_trials']} trials")
        if "rmse" in group:
            line += (f", rmse {group['rmse']:.6g}"
                     f", mean fhat {group['fhat_final_mean']:.6g}"
                     f", mean broadcasts {group['broadcasts_mean']:.6g}"
                     f", mean wall time {group['wall_time_mean']:.3g}s")
        if group["failed_trials"]:
            line += f", {group['failed_trials']} FAILED"
        print(line)
    for failure in result.failures:
        print(f"failed: {failure['solver']} sigma={failure['sigma']:g} "
              f"trial {failure['trial']}: {failure['error']}", file=sys.stderr)
    print(f"wrote {csv_path} and {summary_path}")
    if not result.records:
        print("all trials failed", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_gap(args):
    problem = _load_problem(args.problem)
    data = _load_json(args.estimate, "estimate")
    try:
        x_hat = np.asarray(data, dtype=np.float64)
        if x_hat.shape != (problem.n, problem.p):
            raise ValueError(
                f"expected positions of shape ({problem.n}, {problem.p}), "
                f"got {x_hat.shape}"
            )
    except ValueError as exc:
        raise _UsageError(f"estimate file {args.estimate!r}: {exc}") from exc
    cert = cost.gap_certificate(problem, x_hat, fhat_star=args.fhat)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(cert.to_dict(), fh, indent=2)
        fh.write("\n")
    print(f"fhat at estimate: {cert.fhat_star:.6g}")
    print(f"tight gap bound: {cert.tight_bound:.6g} "
          f"({len(cert.slack_edges)} slack edges, "
          f"{len(cert.slack_links)} slack anchor links)")
    print(f"a priori gap bound: {cert.apriori_bound:.6g}")
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="diskloc",
        description="Distributed range-based localization via the disk relaxation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="draw a random geometric instance")
    gen.add_argument("--n", type=int, required=True, help="number of sensors")
    gen.add_argument("--p", type=int, default=2, choices=(1, 2, 3),
                     help="ambient dimension (default 2)")
    radius = gen.add_mutually_exclusive_group(required=True)
    radius.add_argument("--radius", type=float, help="connectivity radius")
    radius.add_argument("--target-avg-degree", type=float,
                        help="calibrate the radius to this average degree")
    gen.add_argument("--sigma", type=float, default=0.0,
                     help="range noise standard deviation (default 0, noiseless)")
    gen.add_argument("--anchors-corners", dest="anchors_corners",
                     action="store_true", default=True,
                     help="anchor every corner of the unit cube (default)")
    gen.add_argument("--no-anchors-corners", dest="anchors_corners",
                     action="store_false", help="generate without anchors")
    gen.add_argument("--seed", type=int, default=0, help="generation seed")
    gen.add_argument("--out", required=True, help="output problem JSON")
    gen.set_defaults(func=cmd_generate)

    solve = sub.add_parser("solve", help="run one solver on an instance")
    solve.add_argument("--problem", required=True, help="problem JSON file")
    solve.add_argument("--solver", choices=sorted(SOLVERS), default="parallel")
    solve.add_argument("--stop", default="gradient-norm",
                       choices=("gradient-norm", "relative-improvement",
                                "fixed-iterations"))
    solve.add_argument("--eps-gradient", type=float, default=1e-6)
    solve.add_argument("--eps-improvement", type=float, default=1e-6)
    solve.add_argument("--max-iterations", type=int, default=100000)
    solve.add_argument("--seed", type=int, default=0,
                       help="seed of the random initialization")
    solve.add_argument("--out", required=True,
                       help="output prefix; writes <out>.trace.csv and "
                            "<out>.estimate.json")
    solve.set_defaults(func=cmd_solve)

    exp = sub.add_parser("experiment", help="run a Monte Carlo scenario")
    exp.add_argument("--scenario", required=True, help="scenario JSON file")
    exp.add_argument("--workers", type=int, default=None,
                     help="worker threads (default: LOCNET_WORKERS or 1)")
    exp.set_defaults(func=cmd_experiment)

    gap = sub.add_parser("gap", help="certify the optimality gap of an estimate")
    gap.add_argument("--problem", required=True, help="problem JSON file")
    gap.add_argument("--estimate", required=True,
                     help="estimate JSON file (nested position array)")
    gap.add_argument("--fhat", type=float, default=None,
                     help="relaxed cost at the estimate, recomputed if omitted")
    gap.add_argument("--out", required=True, help="output certificate JSON")
    gap.set_defaults(func=cmd_gap)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GenerationError as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001  map anything unexpected to exit 5
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
