"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 run truncated
because the privacy budget ran out.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from .budget import schedule_additive, schedule_exponential, schedule_multiplicative
from .data import DataError
from .datasets import SpecError, chain_sem, dumps_csv, load_bayesnet, load_network, sample_bayesnet, sample_sem
from .experiment import ConfigError, ExperimentConfig, RunReport, run_experiment, summarize, summary_csv, sweep
from .graph import EdgeList, GraphError
from .metrics import f1_score

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_TRUNCATED = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p.add_argument("--out", help="write the result here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="privcgd", description="Private causal-graph discovery benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sk = sub.add_parser("skeleton", parents=[common], help="constraint-based skeleton discovery")
    sk.add_argument("--data", required=True, help="CSV with a header row")
    sk.add_argument("--truth", help="ground-truth edge list for scoring")
    sk.add_argument("--mode", choices=("curate", "uniform", "nonprivate"), default="curate")
    sk.add_argument("--epsilon-total", type=float, default=1.0)
    sk.add_argument("--delta-total", type=float, default=1e-8)
    sk.add_argument("--delta-prime", type=float, default=1e-12)
    sk.add_argument("--threshold", type=float, default=0.05)
    sk.add_argument("--beta1", type=float, default=0.1)
    sk.add_argument("--beta2", type=float, default=0.1)
    sk.add_argument("--q", type=float, default=1.0, help="sub-sampling rate")
    sk.add_argument("--max-order", type=int)

    sc = sub.add_parser("score", parents=[common], help="score-based DAG learning")
    sc.add_argument("--data", required=True)
    sc.add_argument("--truth")
    sc.add_argument("--epsilon-total", type=float, default=10.0)
    sc.add_argument("--delta", type=float, default=1e-5, help="per-iteration delta")
    sc.add_argument("--eps0", type=float, default=0.5)
    iters = sc.add_mutually_exclusive_group()
    iters.add_argument("--iters", type=int, default=20)
    iters.add_argument("--auto-iters", action="store_true", help="take I from the multiplicative schedule")
    sc.add_argument("--clip", type=float, default=5.0)
    sc.add_argument("--lambda", dest="lam", type=float, default=0.05)
    sc.add_argument("--omega", type=float, default=0.3)
    sc.add_argument("--linesearch", choices=("fixed", "noisy"), default="fixed")

    bp = sub.add_parser("budget-plan", parents=[common], help="iteration schedules for a total budget")
    bp.add_argument("--epsilon-total", type=float, required=True)
    bp.add_argument("--eps0", type=float, required=True)

    sa = sub.add_parser("sample", parents=[common], help="draw a synthetic dataset")
    src = sa.add_mutually_exclusive_group(required=True)
    src.add_argument("--network", help="shipped network name (asia, cancer, earthquake, survey)")
    src.add_argument("--spec", help="Bayesian network spec file")
    src.add_argument("--chain", type=int, metavar="D", help="linear chain SEM with D nodes")
    sa.add_argument("--n", type=int, default=10_000)
    sa.add_argument("--weight", type=float, default=2.0)
    sa.add_argument("--noise-std", type=float, default=0.5)
    sa.add_argument("--truth-out", help="also write the true edge list here")

    ev = sub.add_parser("eval", parents=[common], help="score an edge list against the truth")
    ev.add_argument("--estimate", required=True, help="edge list file or JSON run report")
    ev.add_argument("--truth", required=True)

    sw = sub.add_parser("sweep", parents=[common], help="seed sweep over a grid")
    sw.add_argument("--config", help="JSON file with 'base' and 'grid' objects")
    sw.add_argument("--pipeline", choices=("skeleton", "score"), default="skeleton")
    sw.add_argument("--mode", choices=("curate", "uniform", "nonprivate"), default="curate")
    sw.add_argument("--epsilons", type=float, nargs="+", default=[0.1, 1.0, 10.0])
    sw.add_argument("--seeds", type=int, default=20, help="seeds seed .. seed+N-1")
    sw.add_argument("--network", help="use a shipped network instead of the chain SEM")
    sw.add_argument("--n", type=int, default=10_000)
    sw.add_argument("--d", type=int, default=5)
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--reports", help="directory for per-run JSON reports")
    return parser


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _report_csv(report: RunReport) -> str:
    row = {
        "format_version": report.format_version,
        "pipeline": report.pipeline,
        "mode": report.mode,
        "seed": report.seed,
        "status": report.status,
        "edges": ";".join(f"{a}-{b}" for a, b in report.edges),
        "epsilon_total_spent": report.epsilon_total_spent,
        "delta_total_spent": report.delta_total_spent,
        "precision": report.precision,
        "recall": report.recall,
        "f1": report.f1,
        "ci_tests": sum(report.ci_test_count.values()),
        "truncated": report.truncated,
        "wall_time": report.wall_time,
    }
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
    w.writeheader()
    w.writerow({k: "" if v is None else v for k, v in row.items()})
    return buf.getvalue()


def _finish_run(report: RunReport, args) -> int:
    text = report.to_json() + "\n" if args.format == "json" else _report_csv(report)
    _emit(text, args.out)
    return EXIT_TRUNCATED if report.truncated else EXIT_OK


def _cmd_skeleton(args) -> int:
    cfg = ExperimentConfig(
        pipeline="skeleton",
        mode=args.mode,
        seed=args.seed,
        source="csv",
        data_path=args.data,
        truth_path=args.truth,
        epsilon_total=args.epsilon_total,
        skeleton={
            "delta_total": args.delta_total,
            "delta_prime": args.delta_prime,
            "T": args.threshold,
            "beta1": args.beta1,
            "beta2": args.beta2,
            "q": args.q,
            "max_order": args.max_order,
        },
    )
    return _finish_run(run_experiment(cfg), args)


def _cmd_score(args) -> int:
    cfg = ExperimentConfig(
        pipeline="score",
        seed=args.seed,
        source="csv",
        data_path=args.data,
        truth_path=args.truth,
        epsilon_total=args.epsilon_total,
        score={
            "delta": args.delta,
            "eps0": args.eps0,
            "iters": None if args.auto_iters else args.iters,
            "auto_iters": args.auto_iters,
            "clip": args.clip,
            "lam": args.lam,
            "omega": args.omega,
            "linesearch": "noisy-armijo" if args.linesearch == "noisy" else "fixed",
        },
    )
    try:
        return _finish_run(run_experiment(cfg), args)
    except ValueError as exc:
        if isinstance(exc, (DataError, GraphError)):
            raise
        raise ConfigError(str(exc)) from exc


def _cmd_budget_plan(args) -> int:
    if not args.eps0 > 0 or not args.epsilon_total > 0:
        raise ConfigError("budgets must be positive")
    schedules = [
        schedule_additive(args.epsilon_total, args.eps0),
        schedule_exponential(args.epsilon_total, args.eps0),
        schedule_multiplicative(args.epsilon_total, args.eps0),
    ]
    if args.format == "json":
        obj = [
            {
                "schedule": s.kind,
                "iterations": s.iterations,
                "closed_form": s.closed_form,
                "budgets": s.budgets,
                "total": s.total,
            }
            for s in schedules
        ]
        _emit(json.dumps(obj, indent=2) + "\n", args.out)
        return EXIT_OK
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["schedule", "I", "k", "eps_k", "cumulative"])
    for s in schedules:
        total = 0.0
        for k, e in enumerate(s.budgets):
            total += e
            w.writerow([s.kind, s.iterations, k, repr(e), repr(total)])
        if not s.budgets:
            w.writerow([s.kind, 0, "", "", 0.0])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def _cmd_sample(args) -> int:
    if args.n < 1:
        raise ConfigError("--n must be positive")
    if args.chain is not None:
        data, truth = sample_sem(chain_sem(args.chain, args.weight, args.noise_std, args.n, args.seed))
    else:
        spec = load_network(args.network) if args.network else load_bayesnet(args.spec)
        data, truth = sample_bayesnet(spec, args.n, args.seed)
    _emit(dumps_csv(data), args.out)
    if args.truth_out:
        truth.dump(args.truth_out)
    return EXIT_OK


def _load_estimate(path: str) -> EdgeList:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        report = json.loads(text)
        names = report["names"]
        index = {n: k for k, n in enumerate(names)}
        try:
            return EdgeList(names, [(index[a], index[b]) for a, b in report["edges"]])
        except KeyError as exc:
            raise GraphError(f"report edge uses unknown node {exc}") from exc
    return EdgeList.loads(text)


def _cmd_eval(args) -> int:
    estimate = _load_estimate(args.estimate)
    truth = EdgeList.load(args.truth)
    precision, recall, f1 = f1_score(estimate, truth)
    result = {"format_version": 1, "precision": precision, "recall": recall, "f1": f1, "scoring": "skeleton"}
    if args.format == "json":
        _emit(json.dumps(result, indent=2) + "\n", args.out)
    else:
        _emit("precision,recall,f1\n" + f"{precision!r},{recall!r},{f1!r}\n", args.out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if args.config:
        try:
            spec = json.loads(Path(args.config).read_text(encoding="utf-8"))
            base = ExperimentConfig(**spec.get("base", {}))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"bad sweep config: {exc}") from exc
        grid = spec.get("grid", {"epsilon_total": args.epsilons})
    else:
        base = ExperimentConfig(
            pipeline=args.pipeline,
            mode=args.mode,
            source="network" if args.network else "chain",
            network=args.network,
            n=args.n,
            d=args.d,
        )
        grid = {"epsilon_total": args.epsilons}
    base.validate()
    seeds = range(args.seed, args.seed + args.seeds)
    reports = sweep(base, grid, seeds, workers=args.workers)
    if args.reports:
        folder = Path(args.reports)
        folder.mkdir(parents=True, exist_ok=True)
        for k, r in enumerate(reports):
            (folder / f"run_{k:04d}.json").write_text(r.to_json() + "\n", encoding="utf-8")
    rows = summarize(reports, sorted(grid))
    if args.format == "csv":
        _emit(summary_csv(rows), args.out)
    else:
        _emit(json.dumps(rows, indent=2) + "\n", args.out)
    return EXIT_OK


_COMMANDS = {
    "skeleton": _cmd_skeleton,
    "score": _cmd_score,
    "budget-plan": _cmd_budget_plan,
    "sample": _cmd_sample,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"privcgd: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SpecError, GraphError, FileNotFoundError, UnicodeDecodeError) as exc:
        print(f"privcgd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
