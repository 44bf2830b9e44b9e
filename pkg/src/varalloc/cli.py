"""Command-line interface: generate, solve, evaluate, verify, sweep.

All randomness flows from the single ``--seed`` flag; subcomponents derive
labeled sub-seeds from it, so identical invocations produce byte-identical
output files.  Reports embed the resolved configuration as an audit trail.
Wall-clock timings go to stderr, never into output files.

Exit status: 0 on success, 1 for verification violations or solver budget
failures, 2 for usage and input errors.  Error messages are written to
stderr with the prefix ``error:``.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis, solvers
from .instances import (
    AllocationVector,
    Instance,
    InstanceFormatError,
    complete_k_subsets_instance,
    cycle_instance,
    erdos_renyi_instance,
    parse_instance,
    serialize_instance,
)
from .oracle import (
    CovarianceSpec,
    Estimate,
    EstimatorConfig,
    EstimationError,
    graph_objective,
    graph_objective_correlated,
)

__all__ = ["run", "main"]

_SWEEP_P_GRID = tuple(i / 8 for i in range(1, 9))
_SWEEP_SEED_COUNT = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="varalloc",
        description="Variance allocation for Gaussian vectors: solvers and verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a problem instance file")
    gen.add_argument("family", choices=["erdos-renyi", "cycle", "complete-k"])
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--m", type=int, default=None)
    gen.add_argument("--p", type=float, default=None)
    gen.add_argument("--mu", type=float, default=0.0)
    gen.add_argument("--k", type=int, default=None)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default=None)

    sol = sub.add_parser("solve", help="solve an instance and write a report")
    sol.add_argument(
        "algorithm",
        choices=["ptas-ind", "ptas-corr", "log-approx", "brute-force", "uniform"],
    )
    sol.add_argument("--in", dest="instance_path", required=True)
    sol.add_argument("--eps", type=float, default=None)
    sol.add_argument("--grid-step", type=float, default=None)
    sol.add_argument("--seed", type=int, default=0)
    sol.add_argument("--mc-samples", type=int, default=2_000_000)
    sol.add_argument("--out", default=None)

    ev = sub.add_parser("evaluate", help="re-evaluate the allocation in a solve report")
    ev.add_argument("--in", dest="report_path", required=True)
    ev.add_argument("--seed", type=int, default=None)
    ev.add_argument("--mc-samples", type=int, default=None)
    ev.add_argument("--out", default=None)

    ver = sub.add_parser("verify", help="run the empirical inequality checks")
    ver.add_argument("--claim", choices=sorted(analysis.ALL_CHECKS), default=None)
    ver.add_argument("--all", action="store_true")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--mc-samples", type=int, default=50_000)
    ver.add_argument("--out", default=None)

    sw = sub.add_parser("sweep", help="emit trend data as CSV")
    sw.add_argument("kind", choices=["concavity", "concentration"])
    sw.add_argument("--n", type=int, default=8)
    sw.add_argument("--m", type=int, default=24)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--mc-samples", type=int, default=100_000)
    sw.add_argument("--out", default=None)
    sw.add_argument("--format", choices=["csv", "json"], default="csv")
    return parser


def _write_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _write_bytes(path: str | None, blob: bytes) -> None:
    if path is None:
        sys.stdout.write(blob.decode("utf-8"))
    else:
        with open(path, "wb") as fh:
            fh.write(blob)


def _estimate_doc(est: Estimate) -> dict:
    return {"value": est.value, "half_width": est.half_width, "method": est.method_used}


def _config_doc(cfg: EstimatorConfig) -> dict:
    return {
        "method": cfg.method,
        "quadrature_tolerance": cfg.quadrature_tolerance,
        "mc_samples": cfg.mc_samples,
        "seed": cfg.seed,
    }


def _report_doc(report: solvers.SolveReport, inst: Instance, cfg: EstimatorConfig) -> dict:
    alloc = report.allocation
    if isinstance(alloc, AllocationVector):
        alloc_doc = {"stddevs": list(alloc.stddevs)}
    else:
        alloc_doc = {"matrix": [[float(x) for x in row] for row in alloc.matrix]}
    return {
        "algorithm": report.algorithm,
        "seed": report.seed,
        "eps": report.eps,
        "grid_step": report.grid_step,
        "support_size": report.support_size,
        "objective": _estimate_doc(report.objective),
        "allocation": alloc_doc,
        "instance": {
            "n": inst.n,
            "means": list(inst.means),
            "sets": [list(s) for s in inst.sets],
        },
        "config": _config_doc(cfg),
    }


def _cmd_generate(args) -> int:
    if args.family == "erdos-renyi":
        if args.m is None or args.p is None:
            raise ValueError("erdos-renyi requires --m and --p")
        inst = erdos_renyi_instance(args.n, args.m, args.p, args.seed)
    elif args.family == "cycle":
        inst = cycle_instance(args.n, args.mu)
    else:
        if args.k is None:
            raise ValueError("complete-k requires --k")
        inst = complete_k_subsets_instance(args.n, args.k)
    _write_bytes(args.out, serialize_instance(inst))
    return 0


def _cmd_solve(args) -> int:
    with open(args.instance_path, "rb") as fh:
        inst = parse_instance(fh.read())
    cfg = EstimatorConfig(seed=args.seed, mc_samples=args.mc_samples)
    if args.algorithm == "ptas-ind":
        if args.eps is None:
            raise ValueError("ptas-ind requires --eps")
        report = solvers.ptas_independent(inst, args.eps, cfg)
    elif args.algorithm == "ptas-corr":
        if args.eps is None:
            raise ValueError("ptas-corr requires --eps")
        report = solvers.ptas_correlated(inst, args.eps, args.grid_step, cfg)
    elif args.algorithm == "log-approx":
        report = solvers.log_approx_graph(inst, cfg)
    elif args.algorithm == "brute-force":
        if args.grid_step is None:
            raise ValueError("brute-force requires --grid-step")
        report = solvers.brute_force_grid(inst, args.grid_step, cfg)
    else:
        alloc = solvers.uniform_allocation(inst)
        objective = graph_objective(inst, alloc, cfg)
        report = solvers.SolveReport(
            allocation=alloc,
            objective=objective,
            algorithm="uniform",
            eps=None,
            grid_step=None,
            support_size=alloc.support_size,
            elapsed=0.0,
            seed=cfg.seed,
        )
    print(f"{report.algorithm}: {report.elapsed:.2f}s", file=sys.stderr)
    _write_text(args.out, json.dumps(_report_doc(report, inst, cfg), indent=2) + "\n")
    return 0


def _cmd_evaluate(args) -> int:
    with open(args.report_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    for key in ("instance", "allocation", "config"):
        if key not in doc:
            raise ValueError(f"report is missing the {key!r} field")
    inst_doc = doc["instance"]
    inst = parse_instance(json.dumps(inst_doc))
    conf = doc["config"]
    cfg = EstimatorConfig(
        method=conf.get("method", "auto"),
        quadrature_tolerance=conf.get("quadrature_tolerance", 1e-9),
        mc_samples=args.mc_samples if args.mc_samples is not None else conf["mc_samples"],
        seed=args.seed if args.seed is not None else conf["seed"],
    )
    alloc_doc = doc["allocation"]
    if "stddevs" in alloc_doc:
        alloc = AllocationVector(alloc_doc["stddevs"])
        est = graph_objective(inst, alloc, cfg)
    elif "matrix" in alloc_doc:
        spec = CovarianceSpec(inst.means, np.asarray(alloc_doc["matrix"], dtype=float))
        est = graph_objective_correlated(inst, spec, cfg)
    else:
        raise ValueError("allocation must contain 'stddevs' or 'matrix'")
    reported = doc.get("objective")
    out = {
        "objective": _estimate_doc(est),
        "reported_objective": reported,
        "seed": cfg.seed,
    }
    if reported is not None:
        tol = est.half_width + float(reported.get("half_width", 0.0)) + 1e-6
        out["matches_reported"] = bool(abs(est.value - reported["value"]) <= tol)
    _write_text(args.out, json.dumps(out, indent=2) + "\n")
    return 0


def _cmd_verify(args) -> int:
    if args.claim is None and not args.all:
        raise ValueError("choose --claim NAME or --all")
    names = sorted(analysis.ALL_CHECKS) if args.all else [args.claim]
    reports = []
    failed = 0
    for name in names:
        rep = analysis.ALL_CHECKS[name](args.seed, args.mc_samples)
        reports.append(rep)
        status = "ok" if rep.ok else "VIOLATED"
        print(
            f"{rep.claim}: {status} trials={rep.trials} violations={rep.violations} "
            f"worst_margin={rep.worst_margin!r}"
        )
        failed += rep.violations
    if args.out:
        docs = [
            {
                "claim": r.claim,
                "trials": r.trials,
                "violations": r.violations,
                "worst_margin": r.worst_margin,
                "seed": r.seed,
            }
            for r in reports
        ]
        _write_text(args.out, json.dumps(docs, indent=2) + "\n")
    if failed:
        print(f"error: {failed} verification violations", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args) -> int:
    if args.format != "csv":
        raise ValueError("sweep output is CSV only")
    cfg = EstimatorConfig(seed=args.seed, mc_samples=args.mc_samples)
    if args.kind == "concavity":
        table = analysis.concavity_curve(args.n, None, cfg)
    else:
        seeds = [args.seed + i for i in range(_SWEEP_SEED_COUNT)]
        table = analysis.concentration_profile(args.n, args.m, _SWEEP_P_GRID, seeds, cfg)
    if args.out is None:
        sys.stdout.write("parameter,statistic,value,ci_half_width\n")
        for row in table.rows:
            sys.stdout.write(
                f"{row.parameter!r},{row.statistic},{row.value!r},{row.ci_half_width!r}\n"
            )
    else:
        analysis.emit_sweep_csv(table, args.out)
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "solve": _cmd_solve,
    "evaluate": _cmd_evaluate,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def run(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (solvers.BudgetError, EstimationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (ValueError, InstanceFormatError, OSError, KeyError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


def main(argv=None) -> int:
    return run(argv)


if __name__ == "__main__":
    sys.exit(main())
