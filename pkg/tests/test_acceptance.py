"""Acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

import json
import math
import random

import pytest
from conftest import CRITERIA

from corpus import ball_cases, run_ball_case
from sasim import oracle
from sasim.cli import main
from sasim.harness import ExperimentConfig, emit_report, generate_graph, place_candidates, run_experiment
from sasim.leader import kls_automaton
from sasim.model import audit_state_space, run_asynchronous, run_synchronous, runtime
from test_model import SCHEDULERS as ASYNC
from test_model import check_port_semantics, link_histories, recording_spec, run_random_history

slow = pytest.mark.slow


def record(name, ok, detail):
    CRITERIA[name] = (bool(ok), detail)
    print(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")
    return ok


def batch(trials, **kw):
    return run_experiment(ExperimentConfig(trials=trials, **kw))


@pytest.fixture(scope="module")
def ball_corpus():
    out = []
    for case in ball_cases():
        tr = run_ball_case(case)
        out.append((case, tr, oracle.TraceView.from_trace(tr)))
    return out


# 1. ball growing yields shortest-path balls


def test_c1_ball_growing(ball_corpus):
    failures = []
    small = 0
    for case, tr, tv in ball_corpus:
        verdict = oracle.check_ball_growing(tv)
        finished = tr.terminal_status == "all-decided"
        if tv.n <= 12:
            small += 1
            exhaustive = oracle.check_ball_growing(tv, exhaustive=True)
            verdict = verdict if not verdict.ok else exhaustive
        if not (verdict.ok and finished):
            failures.append((case.index, verdict.clause, verdict.witness))
    ok = record("C1", not failures and small > 0,
                f"{len(ball_corpus) - len(failures)}/{len(ball_corpus)} runs pass, {small} checked exhaustively")
    assert ok, failures[:5]


# 2. ball growing and B&E iterations take O(D) rounds


def test_c2_timing_constants(ball_corpus):
    c1 = c2 = 0.0
    failures = []
    for case, _, tv in ball_corpus:
        verdict = oracle.check_be_timing(tv)
        if not verdict.ok:
            failures.append((case.index, verdict.clause, verdict.witness))
            continue
        c1 = max(c1, verdict.metrics["c1"])
        c2 = max(c2, verdict.metrics["c2"])
    ok = record("C2", not failures and c1 <= 4 and c2 <= 4, f"c1={c1:.3f} c2={c2:.3f} (bound 4)")
    assert ok, failures[:5]


# 3. phase synchrony between roots


C3_CONFIGS = [
    ("grid:4x4", "none", 3, "random:3"),
    ("cycle:10", "all", 2, "spread:2"),
    ("gnp-connected:16", "none", 4, "random:4"),
    ("path:12", "none", 4, "clustered:4"),
    ("grid:3x5", "all", 2, "random:2"),
]


@slow
def test_c3_phase_sync():
    runs = bad = 0
    worst = {}
    for graph, loops, k, cands in C3_CONFIGS:
        report = batch(100, graph=graph, self_loops=loops, k=k, candidates=cands, seed=3,
                       checks=("phase-sync",))
        for t in report.trials:
            runs += 1
            v = t.verdicts["phase-sync"]
            bad += not v["ok"]
            worst[k] = max(worst.get(k, 0), v["metrics"].get("max_gap", 0))
    ok = record("C3", runs == 500 and bad == 0, f"{runs - bad}/{runs} multi-root runs pass, max gap by k {worst}")
    assert ok


# 4. elimination picks a unique survivor often enough


@slow
def test_c4_elimination_success():
    report = batch(2000, graph="cycle:8", k=4, candidates="spread:4", seed=4, checks=("outcome",))
    success, total = report.aggregates["elimination_by_entering"]["4"]
    freq = success / total
    floor = 0.25 - 3 * math.sqrt(0.25 * 0.75 / 2000)
    exact = float(oracle.unique_max_prob(4, 4))
    ok = record("C4", freq >= floor and abs(freq - exact) <= 0.03,
                f"{success}/{total} = {freq:.4f}, floor {floor:.4f}, exact {exact:.4f} +/- 0.03")
    assert ok


# 5. safety with a constant symbol space


def safety_batch(symbols):
    """500 trials: n in {64, 128}, candidate counts 2, 3, 4 split evenly."""
    results = []
    configs = [(n, c) for n in (64, 128) for c in (2, 3, 4)]
    shares = [84, 83, 83, 84, 83, 83]
    for (n, c), trials in zip(configs, shares):
        report = batch(trials, graph=f"gnp-connected:{n}", k=4, candidates=f"random:{c}", symbols=symbols,
                       seed=5 + n + c, checks=("outcome",))
        results.extend(report.trials)
    return results


@pytest.fixture(scope="module")
def safety_runs():
    return {s: safety_batch(s) for s in (16, 2)}


def failure_rate(trials):
    return sum(not t.ok for t in trials) / len(trials)


@slow
def test_c5_safety(safety_runs):
    trials = safety_runs[16]
    failures = [t for t in trials if not t.ok]
    for t in failures:
        print("failure", t.seed, t.failure_kind, json.dumps(t.verdicts["outcome"]["witness"]))
    witnessed = all(t.failure_kind in ("MultiLeader", "NoLeader") and t.verdicts["outcome"]["witness"]
                    for t in failures)
    rate = 1 - failure_rate(trials)
    ok = record("C5-safety", len(trials) == 500 and rate >= 0.99 and witnessed,
                f"exactly one leader in {rate:.3f} of {len(trials)} runs with 16 symbols")
    assert ok


@slow
@pytest.mark.xfail(strict=True, reason="failures at 16 and at 2 symbols are both too rare to observe "
                   "at these sizes; see the README")
def test_c5_failure_rate_grows_with_fewer_symbols(safety_runs):
    rate16 = failure_rate(safety_runs[16])
    rate2 = failure_rate(safety_runs[2])
    ok = record("C5-direction", rate2 > rate16, f"failure rate {rate2:.4f} at 2 symbols vs {rate16:.4f} at 16")
    assert ok


# 6. a lone candidate always wins, without detection noise


def test_c6_single_candidate():
    graphs = ["path:16", "cycle:12", "grid:4x4", "gnp-connected:20", "tree:15"]
    bad = 0
    total = 0
    for i, graph in enumerate(graphs):
        report = batch(40, graph=graph, self_loops="all" if i % 2 else "none", k=3, candidates="random:1",
                       seed=6, checks=("outcome",))
        for t in report.trials:
            total += 1
            bad += t.leader != t.candidates[0] or t.proceed_seen
    ok = record("C6", total == 200 and bad == 0, f"{total - bad}/{total} runs elect the candidate with no proceed")
    assert ok


# 7. rounds scale like D (k + log n)


@slow
def test_c7_scaling():
    medians = {}
    for n in (32, 64, 128, 256):
        report = batch(15, graph=f"path:{n}", k=3, candidates="random:3", seed=7, checks=("outcome",))
        assert report.aggregates["failure_rate"] == 0
        medians[n] = report.aggregates["median_rounds_over_dklogn"]
    ratio = max(medians.values()) / min(medians.values())
    detail = " ".join(f"n={n}:{m:.3f}" for n, m in medians.items())
    ok = record("C7", ratio < 2, f"median rounds/(D(k+log2 n)) {detail}, spread factor {ratio:.3f}")
    assert ok


# 8. asynchronous runs reproduce the synchronous ones


SCHEDULERS = ["uniform-random-delay", "round-robin", "adversarial-lag:0", "adversarial-lag:0,1:0.5"]


@slow
def test_c8_synchronizer():
    graphs = ["path:6", "cycle:6", "grid:2x3", "gnp-connected:7"]
    lines = []
    all_ok = True
    for scheduler in SCHEDULERS:
        passed = 0
        overhead = 0.0
        for i, graph in enumerate(graphs):
            report = batch(25, graph=graph, k=2, candidates="random:2", scheduler=scheduler, seed=8 + i,
                           checks=("outcome",))
            for t in report.trials:
                v = t.verdicts["pulse-equivalence"]
                passed += v["ok"]
                overhead = max(overhead, v["metrics"].get("overhead", math.inf))
        all_ok &= passed == 100 and overhead <= 4
        lines.append(f"{scheduler} {passed}/100 C={overhead:.2f}")
    ok = record("C8", all_ok, "; ".join(lines))
    assert ok


# 9. constant state space and port semantics


def test_c9_state_space_is_n_independent():
    spec = kls_automaton(3)
    traces = []
    for n in (16, 64, 256):
        g = generate_graph("cycle", n)
        for seed in range(3):
            cands = place_candidates(g, 3, "random", seed, 3)
            traces.append(run_synchronous(g, spec, [v in cands for v in range(n)], seed, 1_000_000))
    report = audit_state_space(traces, spec)
    per_n = report.to_dict()["field_cardinality_per_n"]
    ok = record("C9-audit", report.passed and report.domain_bound is not None,
                f"declared bound {report.domain_bound}, distinct states per n {report.per_n}, "
                f"escaped fields {report.escaped_fields or 'none'}")
    assert ok, per_n


def test_c9_fifo_and_port_semantics():
    links = 0
    seed = 0
    while links < 10_000:
        tr = run_random_history(seed, ASYNC[seed % len(ASYNC)])
        sent, got, times = link_histories(tr)
        for link, msgs in got.items():
            assert msgs == sent[link][: len(msgs)]
            assert times[link] == sorted(times[link])
        links += len(sent)
        seed += 1
    spec = recording_spec()
    rng = random.Random(9)
    for seed in range(200):
        g = generate_graph("gnp-connected", str(rng.randint(3, 8)), rng.choice(["none", "all"]), seed)
        tr = run_asynchronous(g, spec, None, seed, ASYNC[seed % 4], max_events=80)
        check_port_semantics(tr, runtime(spec).ids[spec.initial_message])
    record("C9-ports", True, f"FIFO over {links} link histories, presence views over 200 random schedules")


# 10. determinism


def test_c10_determinism(tmp_path):
    config = ExperimentConfig(graph="gnp-connected:24", k=3, candidates="spread:3", trials=6, seed=10,
                              scheduler="uniform-random-delay")
    same = all(emit_report(run_experiment(config, threads=t), fmt) == emit_report(run_experiment(config), fmt)
               for t, fmt in ((1, "json"), (1, "csv")))
    outs = []
    for name in ("a.json", "b.json"):
        path = tmp_path / name
        assert main(["run", "--graph", "grid:4x4", "--k", "2", "--candidates", "random:2", "--trials", "4",
                     "--seed", "10", "--out", str(path)]) == 0
        outs.append(path.read_bytes())
    ok = record("C10", same and outs[0] == outs[1], "library and CLI reports are byte-identical on re-run")
    assert ok


def test_c10_seed_changes_the_report():
    a = emit_report(batch(3, graph="cycle:9", k=2, candidates="random:2", seed=1))
    b = emit_report(batch(3, graph="cycle:9", k=2, candidates="random:2", seed=2))
    assert a != b
