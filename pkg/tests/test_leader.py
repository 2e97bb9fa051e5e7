import pytest

from sasim import oracle
from sasim.ballcast import BEState, LevelState, Stage
from sasim.harness import generate_graph
from sasim.leader import (
    DETECTION,
    ELIMINATION,
    SIGMA0,
    Decision,
    DoubleDecision,
    LeaderState,
    ProtocolParams,
    _Hood,
    _set_decision,
    decide,
    detection_step,
    kls_automaton,
    leader_transition,
    phase_reset,
)
from sasim.model import CounterRNG, build_graph, run_synchronous

P3 = ProtocolParams(3)


def hood(parents=(), children=(), same=(), foreign=(), all_detecting=True):
    return _Hood(list(parents), list(children), list(same), list(foreign), all_detecting)


def node(level, *, phase=DETECTION, root=False, it=1, stage=Stage.BCAST, **kw):
    return LeaderState(phase=phase, lv=LevelState(level, root, 0, False), be=BEState(it, stage), **kw)


def test_params_validation():
    with pytest.raises(ValueError):
        ProtocolParams(0)
    with pytest.raises(ValueError):
        ProtocolParams(2, symbol_space_size=1)
    assert ProtocolParams(3).m == 8 and ProtocolParams(3).last_iteration == 6


def test_initial_states_and_outputs():
    spec = kls_automaton(3)
    assert decide(spec.initial_state(False)) == "non-leader"
    assert decide(spec.initial_state(True)) is None
    assert decide(SIGMA0) == "non-leader"
    assert not SIGMA0.leveled and SIGMA0.phase == DETECTION


def test_decisions_are_irrevocable():
    s = LeaderState(candidate=True)
    s = _set_decision(s, Decision.NON_LEADER)
    assert _set_decision(s, Decision.NON_LEADER) == s
    with pytest.raises(DoubleDecision):
        _set_decision(s, Decision.LEADER)


def test_leader_state_is_terminal():
    s = node(1, root=True, candidate=True, decision=Decision.LEADER)
    assert leader_transition(s, frozenset({node(3)}), CounterRNG(0, 0, 1), P3) is s


# detection


def test_root_emits_a_fresh_symbol():
    pre = node(1, root=True, it=2, candidate=True)
    symbol, proceed = detection_step(pre, pre.be, hood(), CounterRNG(9, 4, 17), P3)
    assert symbol == CounterRNG(9, 4, 17).randbelow(16)
    assert not proceed


def test_root_is_silent_outside_the_streaming_iterations():
    pre = node(1, root=True, it=0, candidate=True)
    assert detection_step(pre, pre.be, hood(), CounterRNG(0, 0, 1), P3)[0] is None


def test_non_root_forwards_unanimous_parent_symbol():
    pre = node(3)
    parents = [node(2, symbol=5), node(2, symbol=5)]
    assert detection_step(pre, pre.be, hood(parents), CounterRNG(0, 0, 1), P3) == (5, False)


def test_disagreeing_parents_raise_proceed():
    pre = node(3)
    parents = [node(2, symbol=5), node(2, symbol=6)]
    assert detection_step(pre, pre.be, hood(parents), CounterRNG(0, 0, 1), P3) == (None, True)


def test_same_level_symbol_mismatch_uses_last_round_symbol():
    pre = node(3, symbol=4)
    assert detection_step(pre, pre.be, hood(same=[node(3, symbol=4)]), CounterRNG(0, 0, 1), P3)[1] is False
    assert detection_step(pre, pre.be, hood(same=[node(3, symbol=2)]), CounterRNG(0, 0, 1), P3)[1] is True


def test_boundary_detection_waits_for_a_detecting_neighborhood():
    pre = node(3)
    far = node(6)
    assert detection_step(pre, pre.be, hood(foreign=[far], all_detecting=True), CounterRNG(0, 0, 1), P3)[1]
    assert not detection_step(pre, pre.be, hood(foreign=[far], all_detecting=False), CounterRNG(0, 0, 1), P3)[1]


def test_proceed_rides_up_with_echo():
    pre = node(3)
    child = node(4, it=1, stage=Stage.ECHO, proceed=True)
    assert detection_step(pre, pre.be, hood(children=[child]), CounterRNG(0, 0, 1), P3)[1]
    quiet = child._replace(be=BEState(1, Stage.BDONE))
    assert not detection_step(pre, pre.be, hood(children=[quiet]), CounterRNG(0, 0, 1), P3)[1]


def test_geometric_delay_frequency():
    """A lone node echo ready in iteration k is held one extra round per tail."""
    p = ProtocolParams(2)
    start = node(3, it=p.k, stage=Stage.EREADY)
    trials = 100_000
    long_waits = 0
    for seed in range(trials):
        s = start
        rounds = 0
        while not s.be.sending_echo:
            s = leader_transition(s, frozenset(), CounterRNG(seed, 0, rounds + 1), p)
            rounds += 1
        if rounds - 1 >= 5:
            long_waits += 1
    assert abs(long_waits / trials - 1 / 32) <= 0.01


def test_geometric_condition_only_in_detection_iteration_k():
    p = ProtocolParams(2)
    for it in (1, 3):
        s = node(3, it=it, stage=Stage.EREADY)
        assert leader_transition(s, frozenset(), CounterRNG(0, 0, 1), p).be.sending_echo
    s = node(3, phase=ELIMINATION, it=p.k, stage=Stage.EREADY, priority=1)
    assert leader_transition(s, frozenset(), CounterRNG(0, 0, 1), p).be.sending_echo


# elimination and phase switches


def growball(level, phase, priority=None):
    return LeaderState(phase=phase, lv=LevelState(level, True, level % 2, True), priority=priority, candidate=True)


def test_higher_priority_growball_consumes_a_root():
    root = node(1, phase=ELIMINATION, root=True, it=0, stage=Stage.WAIT, candidate=True, priority=2)
    new = leader_transition(root, frozenset({growball(0, ELIMINATION, 3)}), CounterRNG(0, 0, 1), P3)
    assert new.withdrawn and new.decision == Decision.NON_LEADER
    assert (new.lv.level, new.lv.is_root, new.priority) == (1, False, 3)


def test_lower_priority_growball_is_ignored():
    v = node(4, phase=ELIMINATION, it=0, stage=Stage.WAIT, priority=3)
    new = leader_transition(v, frozenset({growball(0, ELIMINATION, 2)}), CounterRNG(0, 0, 1), P3)
    assert new.lv.level == 4 and new.priority == 3


def test_phase_reset_clears_phase_variables():
    v = node(3, proceed=True, symbol=7)
    out = phase_reset(v, ELIMINATION)
    assert out.phase == ELIMINATION and not out.proceed and out.symbol is None
    assert out.lv.level is None and out.be == BEState()


def test_next_phase_growball_takes_over():
    v = node(3, it=4, stage=Stage.ECHO, proceed=True)
    new = leader_transition(v, frozenset({growball(1, ELIMINATION, 2)}), CounterRNG(0, 0, 1), P3)
    assert new.phase == ELIMINATION and new.lv.level == 2 and not new.proceed and new.priority == 2


def test_live_root_of_old_phase_withdraws_on_takeover():
    v = node(1, root=True, it=2, stage=Stage.BCAST, candidate=True)
    new = leader_transition(v, frozenset({growball(1, ELIMINATION, 1)}), CounterRNG(0, 0, 1), P3)
    assert new.withdrawn and decide(new) == "non-leader"


def test_own_growball_over_a_self_loop_is_harmless():
    p = ProtocolParams(2)
    root = LeaderState(candidate=True, lv=LevelState(None, False, 1, False))
    started = leader_transition(root, frozenset({SIGMA0}), CounterRNG(0, 0, 1), p)
    assert started.live_root and started.lv.growball
    again = leader_transition(started, frozenset({started}), CounterRNG(0, 0, 2), p)
    assert again.live_root and not again.withdrawn


def test_root_finishing_detection_with_proceed_starts_elimination():
    p = ProtocolParams(2)
    v = node(1, root=True, it=p.last_iteration, stage=Stage.DONE, candidate=True, proceed=True)
    new = leader_transition(v, frozenset(), CounterRNG(0, 0, 1), p)
    assert new.phase == ELIMINATION and new.live_root and new.priority in (1, 2)


def test_root_finishing_detection_without_proceed_is_leader():
    p = ProtocolParams(2)
    v = node(1, root=True, it=p.last_iteration, stage=Stage.DONE, candidate=True)
    assert decide(leader_transition(v, frozenset(), CounterRNG(0, 0, 1), p)) == "leader"


def test_root_finishing_elimination_starts_detection():
    p = ProtocolParams(2)
    v = node(1, phase=ELIMINATION, root=True, it=p.last_iteration, stage=Stage.DONE, candidate=True, priority=2)
    new = leader_transition(v, frozenset(), CounterRNG(0, 0, 1), p)
    assert new.phase == DETECTION and new.live_root and new.priority is None


# full runs


@pytest.mark.parametrize("graph", ["path:5", "grid:3x3", "cycle:7"])
def test_k1_single_candidate(graph):
    family, size = graph.split(":")
    g = generate_graph(family, size, "all")
    tr = run_synchronous(g, kls_automaton(1), [v == 2 for v in range(g.n)], 0, 10_000)
    tv = oracle.TraceView.from_trace(tr)
    assert oracle.verify_outcome(tv).metrics["leader"] == 2
    assert not oracle.proceed_ever_set(tv)


def test_k3_six_cycle_three_candidates():
    g = build_graph([(i, (i + 1) % 6) for i in range(6)])
    spec = kls_automaton(3)
    for seed in range(100):
        tr = run_synchronous(g, spec, [v % 2 == 0 for v in range(6)], seed, 200_000)
        verdict = oracle.verify_outcome(oracle.TraceView.from_trace(tr))
        assert verdict.ok, (seed, verdict.clause)
        assert verdict.metrics["leader"] in (0, 2, 4)


def test_domains_cover_a_run():
    spec = kls_automaton(2, symbol_space_size=4)
    g = generate_graph("grid", "3x3", "all")
    tr = run_synchronous(g, spec, [v in (0, 8) for v in range(9)], 1, 100_000)
    for sid in tr.distinct_state_ids():
        for key, value in spec.fields(tr.table[sid]).items():
            assert value in spec.domains[key], key
