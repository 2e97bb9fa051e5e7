"""Experiment runner: graph generators, candidate placement, seeded trial
batches, oracle checks per trial and report emission."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import random
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import networkx as nx

from . import __version__
from . import oracle
from .leader import ProtocolParams, kls_automaton
from .model import Graph, build_graph, parse_scheduler, read_edge_list, run_synchronous
from .synchronizer import run_pulses, synchronize

SCHEMA = 1
HARD_CHECKS = ("lemma1", "lemma2", "phase-sync", "pulse-equivalence")
DEFAULT_CHECKS = ("outcome", "lemma1", "lemma2", "phase-sync")
CSV_COLUMNS = ("trial", "seed", "rounds", "phases", "leader", "ok", "failure_kind", "config_hash")


class GnpGaveUp(RuntimeError):
    pass


class CountExceedsK(ValueError):
    pass


# --------------------------------------------------------------------------
# graphs and candidates


def _grid_shape(size: str) -> tuple[int, int]:
    if "x" in size:
        a, b = size.split("x")
        return int(a), int(b)
    n = int(size)
    rows = max(d for d in range(1, math.isqrt(n) + 1) if n % d == 0)
    return rows, n // rows


def generate_graph(family: str, size: str | int, self_loops: str = "none", seed: int = 0) -> Graph:
    """Build a graph of the given family.

    ``size`` is a node count; ``grid`` also takes ``RxC``, ``gnp-connected``
    takes ``n`` or ``n:p`` and ``file`` takes a path to an edge list.
    """
    size = str(size)
    if family == "file":
        return read_edge_list(size, self_loops)
    if family == "grid":
        rows, cols = _grid_shape(size)
        g = nx.grid_2d_graph(rows, cols)
        g = nx.convert_node_labels_to_integers(g, ordering="sorted")
        return build_graph(g.edges(), self_loops, node_count=rows * cols)
    if family == "gnp-connected":
        n_text, _, p_text = size.partition(":")
        n = int(n_text)
        p = float(p_text) if p_text else min(1.0, 2 * math.log(max(n, 2)) / max(n, 1))
        return build_graph(_connected_gnp(n, p, seed).edges(), self_loops, node_count=n)
    n = int(size)
    if n < 1:
        raise ValueError("size must be >= 1")
    if family == "path":
        return build_graph([(i, i + 1) for i in range(n - 1)], self_loops, node_count=n)
    if family == "cycle":
        if n < 3:
            raise ValueError("a cycle needs at least 3 nodes")
        return build_graph([(i, (i + 1) % n) for i in range(n)], self_loops, node_count=n)
    if family == "tree":
        if n <= 2:
            return build_graph([(i, i + 1) for i in range(n - 1)], self_loops, node_count=n)
        rng = random.Random(seed)
        tree = nx.from_prufer_sequence([rng.randrange(n) for _ in range(n - 2)])
        return build_graph(tree.edges(), self_loops, node_count=n)
    raise ValueError(f"unknown graph family {family!r}")


def _connected_gnp(n: int, p: float, seed: int, attempts: int = 200) -> nx.Graph:
    for attempt in range(attempts):
        g = nx.gnp_random_graph(n, p, seed=seed * attempts + attempt)
        if n == 1 or nx.is_connected(g):
            return g
    raise GnpGaveUp(f"no connected G({n}, {p}) after {attempts} attempts")


def parse_graph_spec(text: str) -> tuple[str, str]:
    family, sep, size = text.partition(":")
    if not sep or not size:
        raise ValueError(f"graph spec must be family:size, got {text!r}")
    return family, size


def place_candidates(graph: Graph, count: int, strategy: str, seed: int, k: Optional[int] = None) -> list[int]:
    if count < 1 or (k is not None and count > k):
        raise CountExceedsK(f"candidate count {count} outside 1..{k}")
    n = graph.n
    if count > n:
        raise CountExceedsK(f"{count} candidates on {n} nodes")
    rng = random.Random(seed)
    if strategy == "random":
        return sorted(rng.sample(range(n), count))
    g = nx.Graph(graph.edges())
    g.add_nodes_from(range(n))
    g.remove_edges_from(list(nx.selfloop_edges(g)))
    if strategy == "spread":
        dist = dict(nx.all_pairs_shortest_path_length(g))
        ecc = [max(dist[v].values()) for v in range(n)]
        chosen = [max(range(n), key=lambda v: (ecc[v], -v))]
        while len(chosen) < count:
            chosen.append(max(
                (v for v in range(n) if v not in chosen),
                key=lambda v: (min(dist[c][v] for c in chosen), -v),
            ))
        return sorted(chosen)
    if strategy == "clustered":
        center = rng.randrange(n)
        order = [center] + [v for _, v in nx.bfs_edges(g, center)]
        return sorted(order[:count])
    raise ValueError(f"unknown placement strategy {strategy!r}")


# --------------------------------------------------------------------------
# configuration and reports


@dataclass(frozen=True)
class ExperimentConfig:
    graph: str = "path:16"
    self_loops: str = "none"
    k: int = 2
    candidates: str = "random:2"
    symbols: int = 16
    scheduler: str = "synchronous"
    trials: int = 10
    seed: int = 0
    max_rounds: int = 1_000_000
    checks: tuple[str, ...] = DEFAULT_CHECKS

    def __post_init__(self) -> None:
        parse_graph_spec(self.graph)
        strategy, count = self.placement
        if count < 1 or count > self.k:
            raise CountExceedsK(f"candidate count {count} outside 1..{self.k}")
        if self.scheduler != "synchronous":
            parse_scheduler(self.scheduler)
        object.__setattr__(self, "checks", tuple(self.checks))

    @property
    def placement(self) -> tuple[str, int]:
        strategy, _, count = self.candidates.partition(":")
        return strategy, int(count or 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["checks"] = list(self.checks)
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def trial_seed(self, trial: int) -> int:
        digest = hashlib.blake2b(f"{self.seed}:{trial}".encode(), digest_size=8).digest()
        return int.from_bytes(digest, "little") >> 1


@dataclass
class TrialResult:
    trial: int
    seed: int
    n: int
    diameter: int
    candidates: list[int]
    rounds: int
    phases: int
    leader: Optional[int]
    ok: bool
    failure_kind: Optional[str]
    status: str
    verdicts: dict = field(default_factory=dict)
    phase_stats: list = field(default_factory=list)
    proceed_seen: bool = False


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    trials: list[TrialResult]
    aggregates: dict
    schema: int = SCHEMA
    version: str = __version__

    @property
    def hard_failure(self) -> bool:
        return any(
            not v["ok"] for t in self.trials for name, v in t.verdicts.items() if name in HARD_CHECKS
        ) or any(t.failure_kind == "FlippedDecision" for t in self.trials)

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "version": self.version,
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "aggregates": self.aggregates,
            "trials": [asdict(t) for t in self.trials],
        }


@lru_cache(maxsize=None)
def leader_automaton(k: int, symbols: int):
    return kls_automaton(ProtocolParams(k, symbols))


def phase_stats(tv: oracle.TraceView) -> list[dict]:
    """Per phase: live candidates entering it and still live when it ends."""
    n = tv.n
    index = [1] * n
    last = [tv.state(0, v)["phase"] for v in range(n)]
    starts: dict[int, tuple[int, int]] = {1: (0, 0)}
    live_at: list[int] = []
    for t in range(tv.rounds + 1):
        live = 0
        for v in range(n):
            s = tv.state(t, v)
            if s["phase"] != last[v]:
                index[v] += 1
                last[v] = s["phase"]
                starts.setdefault(index[v], (t, s["phase"]))
            if s["candidate"] and not s["withdrawn"]:
                live += 1
        live_at.append(live)
    out = []
    ordered = sorted(starts.items())
    for j, (idx, (t, phase)) in enumerate(ordered):
        entering = live_at[t - 1] if t > 0 else live_at[0]
        end = ordered[j + 1][1][0] - 1 if j + 1 < len(ordered) else tv.rounds
        out.append({"index": idx, "phase": phase, "start": t, "entering": entering, "surviving": live_at[end]})
    return out


def _geometric_iteration(k: int):
    return lambda phase, it: phase == 0 and it == k


def run_trial(config: ExperimentConfig, trial: int) -> TrialResult:
    seed = config.trial_seed(trial)
    family, size = parse_graph_spec(config.graph)
    graph = generate_graph(family, size, config.self_loops, seed)
    strategy, count = config.placement
    cands = place_candidates(graph, count, strategy, seed, config.k)
    inputs = [v in cands for v in range(graph.n)]
    spec = leader_automaton(config.k, config.symbols)
    trace = run_synchronous(graph, spec, inputs, seed, config.max_rounds)
    tv = oracle.TraceView.from_trace(trace)

    verdicts: dict[str, dict] = {}
    checks = set(config.checks)
    if config.scheduler != "synchronous":
        wrapped = _wrapped(config.k, config.symbols)
        pulses = trace.rounds
        atrace = run_pulses(graph, wrapped, inputs, seed, config.scheduler, pulses)
        verdicts["pulse-equivalence"] = oracle.check_pulse_equivalence(trace, atrace, pulses).to_dict()
    if "lemma1" in checks:
        verdicts["lemma1"] = oracle.check_ball_growing(tv).to_dict()
    if "lemma2" in checks:
        verdicts["lemma2"] = oracle.check_be_timing(tv, _geometric_iteration(config.k)).to_dict()
    if "phase-sync" in checks:
        verdicts["phase-sync"] = oracle.check_phase_sync(oracle.annotate(tv)).to_dict()
    outcome = oracle.verify_outcome(tv, cands)
    verdicts["outcome"] = outcome.to_dict()
    stats = phase_stats(tv)
    return TrialResult(
        trial=trial,
        seed=seed,
        n=graph.n,
        diameter=graph.diameter,
        candidates=cands,
        rounds=trace.rounds,
        phases=len(stats),
        leader=outcome.metrics.get("leader"),
        ok=outcome.ok,
        failure_kind=outcome.clause,
        status=trace.terminal_status,
        verdicts=verdicts,
        phase_stats=stats,
        proceed_seen=oracle.proceed_ever_set(tv),
    )


@lru_cache(maxsize=None)
def _wrapped(k: int, symbols: int):
    return synchronize(leader_automaton(k, symbols))


def _run_one(args: tuple[ExperimentConfig, int]) -> TrialResult:
    return run_trial(*args)


def thread_count() -> int:
    env = os.environ.get("SASIM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(config: ExperimentConfig, threads: Optional[int] = None) -> ExperimentReport:
    threads = thread_count() if threads is None else threads
    jobs = [(config, t) for t in range(config.trials)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    results.sort(key=lambda r: r.trial)
    return ExperimentReport(config, results, aggregate(results, config.k))


def aggregate(results: Sequence[TrialResult], k: int) -> dict:
    if not results:
        return {key: None for key in (
            "failure_rate", "mean_rounds", "max_rounds", "mean_rounds_over_d",
            "median_rounds_over_dklogn", "elimination_success_frequency",
            "elimination_by_entering", "detection_frequency", "c1_max", "c2_max",
        )}
    rounds = [r.rounds for r in results]
    over_d = [r.rounds / max(r.diameter, 1) for r in results]
    over_dk = [r.rounds / (max(r.diameter, 1) * (k + math.log2(max(r.n, 2)))) for r in results]
    elim_ok = elim_total = 0
    by_entering: dict[str, list[int]] = {}
    det_hit = det_total = 0
    for r in results:
        for ph in r.phase_stats:
            if ph["phase"] == 1:
                elim_total += 1
                success = ph["surviving"] == 1
                elim_ok += success
                slot = by_entering.setdefault(str(ph["entering"]), [0, 0])
                slot[0] += success
                slot[1] += 1
            elif ph["entering"] >= 2:
                det_total += 1
                det_hit += not (ph is r.phase_stats[-1] and r.leader is not None)
    c1 = [r.verdicts["lemma2"]["metrics"].get("c1", 0.0) for r in results if "lemma2" in r.verdicts]
    c2 = [r.verdicts["lemma2"]["metrics"].get("c2", 0.0) for r in results if "lemma2" in r.verdicts]
    return {
        "failure_rate": sum(not r.ok for r in results) / len(results),
        "failure_kinds": _count(r.failure_kind for r in results if r.failure_kind),
        "mean_rounds": statistics.fmean(rounds),
        "max_rounds": max(rounds),
        "mean_rounds_over_d": statistics.fmean(over_d),
        "median_rounds_over_dklogn": statistics.median(over_dk),
        "elimination_success_frequency": elim_ok / elim_total if elim_total else None,
        "elimination_by_entering": dict(sorted(by_entering.items())),
        "detection_frequency": det_hit / det_total if det_total else None,
        "c1_max": max(c1) if c1 else None,
        "c2_max": max(c2) if c2 else None,
    }


def _count(items) -> dict:
    out: dict[str, int] = {}
    for x in items:
        out[x] = out.get(x, 0) + 1
    return dict(sorted(out.items()))


def report_json(report: ExperimentReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def report_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    h = report.config.config_hash()
    for r in report.trials:
        writer.writerow([r.trial, r.seed, r.rounds, r.phases, "" if r.leader is None else r.leader,
                         int(r.ok), r.failure_kind or "", h])
    return buf.getvalue()


def emit_report(report: ExperimentReport, fmt: str = "json", path: str | Path | None = None) -> str:
    if fmt == "json":
        text = report_json(report)
    elif fmt == "csv":
        text = report_csv(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
