import csv
import io
import json

import pytest

from sasim import harness
from sasim.cli import main
from sasim.harness import (
    CountExceedsK,
    ExperimentConfig,
    ExperimentReport,
    aggregate,
    emit_report,
    generate_graph,
    place_candidates,
    run_experiment,
)
from sasim.model import FileParseError


def test_path_two():
    g = generate_graph("path", 2)
    assert g.n == 2 and sorted(g.edges()) == [(0, 1)]


def test_path_with_self_loops():
    g = generate_graph("path", 5, "all")
    loops = [e for e in g.edges() if e[0] == e[1]]
    assert len(loops) == 5 and g.diameter == 4


def test_gnp_replays():
    a = generate_graph("gnp-connected", "50:0.1", seed=7)
    b = generate_graph("gnp-connected", "50:0.1", seed=7)
    assert sorted(a.edges()) == sorted(b.edges())


def test_gnp_gives_up():
    with pytest.raises(harness.GnpGaveUp):
        generate_graph("gnp-connected", "40:0.001", seed=1)


def test_bad_file(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("0 x\n")
    with pytest.raises(FileParseError):
        generate_graph("file", str(p))


def test_grid_and_tree_shapes():
    assert generate_graph("grid", "3x4").n == 12
    t = generate_graph("tree", 20, seed=3)
    assert t.n == 20 and len(list(t.edges())) == 19


def test_place_single_candidate():
    assert len(place_candidates(generate_graph("cycle", 8), 1, "random", 0, 3)) == 1


def test_spread_on_a_path_picks_endpoints():
    assert place_candidates(generate_graph("path", 9), 2, "spread", 0, 2) == [0, 8]


def test_clustered_replays_and_is_connected():
    g = generate_graph("grid", "5x5")
    a = place_candidates(g, 3, "clustered", 11, 3)
    assert a == place_candidates(g, 3, "clustered", 11, 3)
    assert len(a) == 3


def test_count_outside_range():
    g = generate_graph("path", 5)
    with pytest.raises(CountExceedsK):
        place_candidates(g, 3, "random", 0, 2)
    with pytest.raises(CountExceedsK):
        ExperimentConfig(k=2, candidates="random:3")


def test_k1_batch_never_fails():
    report = run_experiment(ExperimentConfig(graph="grid:4x4", k=1, candidates="random:1", trials=100), threads=1)
    assert report.aggregates["failure_rate"] == 0
    assert not report.hard_failure
    for t in report.trials:
        assert t.verdicts["lemma1"]["ok"] and t.verdicts["lemma2"]["ok"]


def test_csv_has_header_and_rows():
    report = run_experiment(ExperimentConfig(trials=2), threads=1)
    rows = list(csv.reader(io.StringIO(emit_report(report, "csv"))))
    assert rows[0][:7] == ["trial", "seed", "rounds", "phases", "leader", "ok", "failure_kind"]
    assert len(rows) == 3
    assert all(r[-1] == report.config.config_hash() for r in rows[1:])


def test_empty_report_has_null_aggregates(tmp_path):
    config = ExperimentConfig(trials=0)
    report = ExperimentReport(config, [], aggregate([], config.k))
    out = tmp_path / "r.json"
    emit_report(report, "json", out)
    data = json.loads(out.read_text())
    assert data["schema"] == 1 and data["trials"] == []
    assert all(v is None for v in data["aggregates"].values())


def test_unknown_format():
    report = ExperimentReport(ExperimentConfig(trials=0), [], {})
    with pytest.raises(ValueError):
        emit_report(report, "xml")


def test_aggregates_recompute_from_rows():
    report = run_experiment(ExperimentConfig(graph="cycle:8", k=3, candidates="spread:3", trials=8), threads=1)
    assert aggregate(report.trials, 3) == report.aggregates


def test_parallelism_does_not_change_the_report():
    config = ExperimentConfig(graph="path:12", k=2, candidates="random:2", trials=6, seed=3)
    serial = emit_report(run_experiment(config, threads=1))
    parallel = emit_report(run_experiment(config, threads=3))
    assert serial == parallel


# CLI


def test_cli_run_json(tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["run", "--graph", "path:8", "--k", "2", "--candidates", "spread:2", "--trials", "3",
                 "--threads", "1", "--out", str(out)])
    assert code == 0
    data = json.loads(out.read_text())
    assert len(data["trials"]) == 3 and data["config"]["graph"] == "path:8"


def test_cli_run_csv_to_stdout(capsys):
    assert main(["run", "--trials", "2", "--format", "csv", "--threads", "1"]) == 0
    assert len(capsys.readouterr().out.splitlines()) == 3


def test_cli_stress_symbols_is_a_soft_check(capsys):
    code = main(["run", "--graph", "cycle:12", "--k", "4", "--candidates", "spread:4", "--symbols", "2",
                 "--trials", "5", "--threads", "1"])
    assert code == 0


def test_cli_trace_then_verify(tmp_path, capsys):
    trace = tmp_path / "t.jsonl"
    assert main(["trace", "--graph", "grid:3x3", "--k", "2", "--candidates", "spread:2", "--seed", "4",
                 "--out", str(trace)]) == 0
    assert trace.read_text().count("\n") > 1
    out = tmp_path / "v.json"
    assert main(["verify", str(trace), "--out", str(out)]) == 0
    verdicts = json.loads(out.read_text())
    assert set(verdicts) == {"lemma1", "lemma2", "phase-sync", "outcome"}
    assert all(v["ok"] for v in verdicts.values())


def test_cli_bad_arguments(capsys):
    assert main(["run", "--graph", "path", "--trials", "1"]) == 2
    assert main(["run", "--k", "1", "--candidates", "random:2"]) == 2
    assert main(["verify", "/nonexistent/trace.jsonl"]) == 2
