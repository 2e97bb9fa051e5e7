"""Command line: ``sasim run | verify | trace``."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from . import oracle
from .harness import (
    DEFAULT_CHECKS,
    ExperimentConfig,
    emit_report,
    generate_graph,
    leader_automaton,
    parse_graph_spec,
    place_candidates,
    run_experiment,
)
from .model import run_asynchronous, run_synchronous
from .synchronizer import synchronize


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", default="path:16", help="family:size, e.g. path:64, grid:8x8, gnp-connected:50:0.1, file:edges.txt")
    p.add_argument("--self-loops", default="none", choices=["none", "all"])
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--candidates", default="random:2", help="strategy:count (random|spread|clustered)")
    p.add_argument("--symbols", type=int, default=16, help="size of the random symbol space")
    p.add_argument("--scheduler", default="synchronous",
                   help="synchronous | uniform-random-delay | round-robin | adversarial-lag:1,2[:factor]")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-rounds", type=int, default=1_000_000)
    p.add_argument("--out", default=None, help="output path (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sasim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded batch of trials and emit a report")
    _common(run)
    run.add_argument("--trials", type=int, default=10)
    run.add_argument("--format", default="json", choices=["json", "csv"])
    run.add_argument("--checks", default=",".join(DEFAULT_CHECKS))
    run.add_argument("--threads", type=int, default=None)

    trace = sub.add_parser("trace", help="single run dumped as JSON lines")
    _common(trace)

    verify = sub.add_parser("verify", help="re-run the oracles on a trace file")
    verify.add_argument("path")
    verify.add_argument("--out", default=None)
    return parser


def _config(args: argparse.Namespace, trials: int, checks: Sequence[str] = DEFAULT_CHECKS) -> ExperimentConfig:
    return ExperimentConfig(
        graph=args.graph,
        self_loops=args.self_loops,
        k=args.k,
        candidates=args.candidates,
        symbols=args.symbols,
        scheduler=args.scheduler,
        trials=trials,
        seed=args.seed,
        max_rounds=args.max_rounds,
        checks=tuple(checks),
    )


def _write(text: str, path: Optional[str]) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args: argparse.Namespace) -> int:
    checks = [c for c in args.checks.split(",") if c]
    config = _config(args, args.trials, checks)
    report = run_experiment(config, threads=args.threads)
    text = emit_report(report, args.format)
    _write(text, args.out)
    return 1 if report.hard_failure else 0


def cmd_trace(args: argparse.Namespace) -> int:
    config = _config(args, 1)
    family, size = parse_graph_spec(config.graph)
    graph = generate_graph(family, size, config.self_loops, config.seed)
    strategy, count = config.placement
    cands = place_candidates(graph, count, strategy, config.seed, config.k)
    inputs = [v in cands for v in range(graph.n)]
    spec = leader_automaton(config.k, config.symbols)
    if config.scheduler == "synchronous":
        trace = run_synchronous(graph, spec, inputs, config.seed, config.max_rounds)
    else:
        trace = run_asynchronous(graph, synchronize(spec), inputs, config.seed, config.scheduler,
                                 max_events=config.max_rounds * graph.n)
    lines = "".join(line + "\n" for line in trace.iter_jsonl())
    _write(lines, args.out)
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    tv = oracle.TraceView.from_jsonl(args.path)
    verdicts = {
        "lemma1": oracle.check_ball_growing(tv),
        "lemma2": oracle.check_be_timing(tv, lambda phase, it: phase == 0 and it == tv.k),
        "phase-sync": oracle.check_phase_sync(oracle.annotate(tv)),
        "outcome": oracle.verify_outcome(tv),
    }
    out = {name: v.to_dict() for name, v in verdicts.items()}
    _write(json.dumps(out, sort_keys=True, indent=2, default=oracle.jsonable) + "\n", args.out)
    hard = any(not v.ok for name, v in verdicts.items() if name != "outcome")
    return 1 if hard or verdicts["outcome"].clause == "FlippedDecision" else 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "trace": cmd_trace, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except (ValueError, OSError) as exc:
        print(f"sasim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
