"""Brute-force verifiers for recorded traces.

Nothing here imports the protocol modules. The oracles read the serialized
node states of a trace (nested dicts with ``lv.level``, ``lv.is_root``,
``lv.growball``, ``be.it``, ``be.stage`` and, for the leader automaton,
``phase``, ``priority``, ``candidate``, ``withdrawn``, ``decision``) and
recompute every property from the graph with networkx.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Sequence

import networkx as nx

# stage codes of the serialized broadcast & echo state
ST_WAIT, ST_BREADY, ST_BCAST, ST_BDONE, ST_EREADY, ST_ECHO, ST_DONE = range(7)
LEADER, NON_LEADER = 1, 2


class UnleveledNode(Exception):
    pass


class OutcomeError(Exception):
    kind = "Outcome"


class MultiLeader(OutcomeError):
    kind = "MultiLeader"


class NoLeader(OutcomeError):
    kind = "NoLeader"


class NonCandidateLeader(OutcomeError):
    kind = "NonCandidateLeader"


class Undecided(OutcomeError):
    kind = "Undecided"


class FlippedDecision(OutcomeError):
    kind = "FlippedDecision"


OUTCOME_ERRORS = {cls.kind: cls for cls in (MultiLeader, NoLeader, NonCandidateLeader, Undecided, FlippedDecision)}


@dataclass
class Verdict:
    check: str
    ok: bool
    clause: Optional[str] = None
    witness: Optional[dict] = None
    metrics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, default=jsonable)

    def raise_if_failed(self) -> None:
        if self.ok:
            return
        exc = OUTCOME_ERRORS.get(self.clause or "", AssertionError)
        raise exc(f"{self.check} failed ({self.clause}): {self.witness}")


def jsonable(x: Any) -> Any:
    if isinstance(x, (set, frozenset)):
        return sorted(x)
    if isinstance(x, Fraction):
        return str(x)
    raise TypeError(type(x).__name__)


# --------------------------------------------------------------------------
# trace access


class TraceView:
    """Round-indexed node states of a synchronous run as plain dicts.

    ``ids[t][v]`` indexes ``decode``; t = 0 holds the initial states.
    """

    def __init__(
        self,
        n: int,
        edges: Iterable[Sequence[int]],
        ids: Sequence[Sequence[int]],
        decode: Callable[[int], dict],
        params: dict,
        inputs: Sequence[Any] = (),
        terminal_status: str = "",
    ) -> None:
        self.n = n
        self.graph = nx.Graph()
        self.graph.add_nodes_from(range(n))
        self.graph.add_edges_from((u, v) for u, v in edges if u != v)
        self.ids = ids
        self._decode = decode
        self._cache: dict[int, dict] = {}
        self.params = dict(params)
        self.inputs = list(inputs)
        self.terminal_status = terminal_status

    @classmethod
    def from_trace(cls, trace: Any) -> TraceView:
        if trace.schedule_kind != "synchronous":
            raise ValueError("oracles read synchronous traces")
        return cls(
            trace.graph.n, trace.graph.edges(), trace.states, trace.fields,
            dict(trace.spec.params), trace.inputs, trace.terminal_status,
        )

    @classmethod
    def from_jsonl(cls, path: str | Path) -> TraceView:
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("schedule_kind") != "synchronous":
                raise ValueError("oracles read synchronous traces")
            n = header["n"]
            table: list[dict] = []
            index: dict[str, int] = {}

            def intern(d: dict) -> int:
                key = json.dumps(d, sort_keys=True)
                i = index.get(key)
                if i is None:
                    i = index[key] = len(table)
                    table.append(d)
                return i

            ids: list[list[int]] = [[intern(d) for d in header["initial"]]]
            for line in fh:
                rec = json.loads(line)
                t, v = rec["t"], rec["node"]
                while len(ids) <= t:
                    ids.append(list(ids[-1]))
                ids[t][v] = intern(rec["state"])
        return cls(
            n, header["edges"], ids, table.__getitem__, header.get("params", {}),
            header.get("inputs", []), header.get("terminal_status", ""),
        )

    @property
    def rounds(self) -> int:
        return len(self.ids) - 1

    @property
    def diameter(self) -> int:
        return nx.diameter(self.graph) if self.n > 1 else 0

    @property
    def k(self) -> int:
        return int(self.params["k"])

    @property
    def m(self) -> int:
        return 2 * self.k + 2

    def state(self, t: int, v: int) -> dict:
        sid = self.ids[t][v]
        d = self._cache.get(sid)
        if d is None:
            d = self._cache[sid] = _digest(self._decode(sid))
        return d


def _digest(raw: dict) -> dict:
    """Flat record of the fields the oracles need."""
    lv = raw.get("lv", {})
    be = raw.get("be", {})
    return {
        "phase": raw.get("phase", 0),
        "level": lv.get("level"),
        "root": bool(lv.get("is_root")),
        "gb": bool(lv.get("growball")),
        "it": be.get("it", 0),
        "stage": be.get("stage", 0),
        "priority": raw.get("priority"),
        "candidate": raw.get("candidate", True),
        "withdrawn": bool(raw.get("withdrawn")),
        "decision": raw.get("decision", 0),
        "proceed": bool(raw.get("proceed")),
    }


def _live_root(s: dict) -> bool:
    return s["root"] and s["level"] is not None and not s["withdrawn"]


# --------------------------------------------------------------------------
# balls and their shortest-path property


def bfs_distances(graph: Any) -> dict[int, dict[int, int]]:
    """All-pairs hop distances; self-loops are ignored."""
    g = _as_nx(graph)
    g.remove_edges_from(list(nx.selfloop_edges(g)))
    return {u: dict(d) for u, d in nx.all_pairs_shortest_path_length(g)}


def _as_nx(graph: Any) -> nx.Graph:
    if isinstance(graph, nx.Graph):
        return graph.copy()
    g = nx.Graph()
    if hasattr(graph, "adjacency") and not callable(graph.adjacency):
        g.add_nodes_from(range(len(graph.adjacency)))
        g.add_edges_from(graph.edges())
    else:
        g.add_edges_from(graph)
    return g


@dataclass
class BallDecomposition:
    balls: dict[int, frozenset]
    boundary: frozenset
    locally_observable: frozenset
    membership: dict[int, frozenset]

    def to_dict(self) -> dict:
        return {
            "balls": {str(r): sorted(b) for r, b in sorted(self.balls.items())},
            "boundary": sorted(self.boundary),
            "locally_observable": sorted(self.locally_observable),
        }


def _incrementing_succ(g: nx.Graph, levels: Sequence[Optional[int]], m: int, u: int) -> list[int]:
    nxt = (levels[u] + 1) % m
    return [w for w in g[u] if w != u and levels[w] == nxt]


def extract_balls(graph: Any, levels: Sequence[Optional[int]], roots: Iterable[int], m: int) -> BallDecomposition:
    g = _as_nx(graph)
    unleveled = [v for v in g if levels[v] is None]
    if unleveled:
        raise UnleveledNode(f"nodes without level: {unleveled[:5]}")
    balls: dict[int, frozenset] = {}
    for r in roots:
        seen = {r}
        stack = [r]
        while stack:
            u = stack.pop()
            for w in _incrementing_succ(g, levels, m, u):
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        balls[r] = frozenset(seen)
    membership = {v: frozenset(r for r, b in balls.items() if v in b) for v in g}
    boundary = set()
    for v in g:
        owners = membership[v]
        if len(owners) >= 2:
            boundary.add(v)
        elif len(owners) == 1:
            (r,) = owners
            if any(w not in balls[r] for w in g[v] if w != v):
                boundary.add(v)
    local = {
        v for v in g
        if any((levels[w] - levels[v]) % m not in (0, 1, m - 1) for w in g[v] if w != v)
    }
    return BallDecomposition(balls, frozenset(boundary), frozenset(local), membership)


def _enumerate_incrementing_paths(g: nx.Graph, levels: Sequence[int], m: int, dist: dict):
    """Yield the first incrementing path that is not a shortest path, if any."""
    for src in g:
        stack = [(src, [src])]
        while stack:
            u, path = stack.pop()
            if dist[src].get(u) != len(path) - 1:
                yield path
                return
            for w in _incrementing_succ(g, levels, m, u):
                if w in path:
                    yield path + [w]
                    return
                stack.append((w, path + [w]))


def check_lemma1(
    graph: Any,
    decomposition: BallDecomposition,
    levels: Sequence[int],
    m: int,
    exhaustive: Optional[bool] = None,
) -> Verdict:
    """Incrementing paths are shortest, roots own exactly their ball, full cover.

    The path clause is checked through the local condition "distance from the
    root grows by one along every incrementing edge inside its ball", which
    together with coverage implies it; graphs with at most 12 nodes are also
    checked by enumerating every incrementing path.
    """
    g = _as_nx(graph)
    dist = bfs_distances(g)
    balls = decomposition.balls
    for r, ball in sorted(balls.items()):
        for u in sorted(ball):
            for w in _incrementing_succ(g, levels, m, u):
                if dist[r][w] != dist[r][u] + 1:
                    return Verdict("lemma1", False, "shortest-path",
                                   {"root": r, "edge": [u, w], "dist": [dist[r][u], dist[r][w]]})
    for r in balls:
        owners = decomposition.membership[r]
        if owners != {r}:
            return Verdict("lemma1", False, "root-single-ball", {"root": r, "balls": sorted(owners)})
    uncovered = [v for v in g if not decomposition.membership[v]]
    if uncovered:
        return Verdict("lemma1", False, "coverage", {"nodes": uncovered[:10]})
    if exhaustive is None:
        exhaustive = g.number_of_nodes() <= 12
    if exhaustive:
        bad = next(_enumerate_incrementing_paths(g, levels, m, dist), None)
        if bad is not None:
            return Verdict("lemma1", False, "shortest-path-exhaustive", {"path": bad})
    dag = nx.DiGraph()
    dag.add_nodes_from(g)
    dag.add_edges_from((u, w) for u in g for w in _incrementing_succ(g, levels, m, u))
    if not nx.is_directed_acyclic_graph(dag):
        return Verdict("lemma1", False, "dag", {"cycle": nx.find_cycle(dag)})
    return Verdict("lemma1", True, metrics={"roots": len(balls), "exhaustive": bool(exhaustive)})


def check_boundary_existence(decomposition: BallDecomposition) -> Verdict:
    """With several roots every ball holds a boundary node, and every locally
    observable boundary node is a boundary node."""
    extra = decomposition.locally_observable - decomposition.boundary
    if extra:
        return Verdict("boundary", False, "locally-observable", {"nodes": sorted(extra)})
    if len(decomposition.balls) >= 2:
        for r, ball in sorted(decomposition.balls.items()):
            if not ball & decomposition.boundary:
                return Verdict("boundary", False, "ball-without-boundary", {"root": r})
    return Verdict("boundary", True)


# --------------------------------------------------------------------------
# snapshots of finished ball growing


@dataclass
class Snapshot:
    round: int
    phase: int
    levels: list
    roots: list


def ball_snapshots(tv: TraceView) -> list[Snapshot]:
    """Configurations at the first clean round after each dirty period."""
    out = []
    dirty_before = False
    for t in range(1, tv.rounds + 1):
        states = [tv.state(t, v) for v in range(tv.n)]
        dirty = any(s["gb"] for s in states)
        if dirty_before and not dirty:
            phases = {s["phase"] for s in states}
            levels = [s["level"] for s in states]
            roots = [v for v, s in enumerate(states) if _live_root(s)]
            out.append(Snapshot(t, phases.pop() if len(phases) == 1 else -1, levels, roots))
        dirty_before = dirty
    return out


def check_ball_growing(tv: TraceView, exhaustive: Optional[bool] = None) -> Verdict:
    """Ball decomposition, boundary existence and the parity rule over a whole trace."""
    snaps = ball_snapshots(tv)
    for snap in snaps:
        if snap.phase < 0:
            return Verdict("lemma1", False, "mixed-phases", {"round": snap.round})
        if not snap.roots:
            continue
        try:
            dec = extract_balls(tv.graph, snap.levels, snap.roots, tv.m)
        except UnleveledNode as exc:
            return Verdict("lemma1", False, "coverage", {"round": snap.round, "error": str(exc)})
        v = check_lemma1(tv.graph, dec, snap.levels, tv.m, exhaustive)
        if not v.ok:
            v.witness = {**(v.witness or {}), "round": snap.round}
            return v
        b = check_boundary_existence(dec)
        if not b.ok:
            b.witness = {**(b.witness or {}), "round": snap.round}
            return b
    parity = check_level_parity(tv)
    if not parity.ok:
        return parity
    return Verdict("lemma1", True, metrics={"snapshots": len(snaps)})


def check_level_parity(tv: TraceView) -> Verdict:
    """A node's level is even iff the round it took the level is even."""
    for v in range(tv.n):
        joined = None
        for t in range(1, tv.rounds + 1):
            s = tv.state(t, v)
            if s["level"] is not None and s["gb"]:
                joined = t
            elif s["level"] is None:
                joined = None
            if joined is not None and (s["level"] % 2) != (joined % 2):
                return Verdict("parity", False, "parity", {"node": v, "round": t, "joined": joined, "level": s["level"]})
    return Verdict("parity", True)


# --------------------------------------------------------------------------
# broadcast & echo timing and ball-growing run time


@dataclass
class _Segment:
    node: int
    phase_index: int
    phase: int
    level: int
    root: bool
    priority: Any
    start: int
    end: int = -1
    times: dict = field(default_factory=dict)  # iteration -> [b0, b1, e0, e1]


def _segments(tv: TraceView) -> list[_Segment]:
    """Per node, maximal stretches with a fixed (phase, level, root, priority)."""
    segs: list[_Segment] = []
    for v in range(tv.n):
        phase_index = 1
        cur: Optional[_Segment] = None
        last_phase = tv.state(0, v)["phase"]
        for t in range(1, tv.rounds + 1):
            s = tv.state(t, v)
            if s["phase"] != last_phase:
                phase_index += 1
                last_phase = s["phase"]
            key = (phase_index, s["level"], s["root"], s["priority"])
            if cur is not None and (s["gb"] or key != (cur.phase_index, cur.level, cur.root, cur.priority)):
                cur.end = t - 1
                cur = None
            if cur is None and s["level"] is not None:
                cur = _Segment(v, phase_index, s["phase"], s["level"], s["root"], s["priority"], t)
                segs.append(cur)
            if cur is None:
                continue
            it, stage = s["it"], s["stage"]
            slot = cur.times.setdefault(it, [None, None, None, None])
            for j, reached in enumerate((stage >= ST_BREADY, stage >= ST_BDONE, stage >= ST_EREADY, stage == ST_DONE)):
                if reached and slot[j] is None:
                    slot[j] = t
        if cur is not None:
            cur.end = tv.rounds
    return segs


def check_be_timing(tv: TraceView, skip: Callable[[int, int], bool] = lambda phase, it: False) -> Verdict:
    """Broadcast & echo orderings and monotonicity, plus run-time constants.

    ``metrics`` reports ``c1`` (ball growing rounds per D, from the first
    initiation) and ``c2`` (max over processes of the rounds from the last
    root initiation to the last root's echo stop, per D). Iterations for which
    ``skip(phase, it)`` holds are left out of ``c2``.
    """
    segs = _segments(tv)
    for sg in segs:
        for it, (b0, b1, e0, e1) in sorted(sg.times.items()):
            seq = [x for x in (b0, b1, e0, e1)]
            present = [x is not None for x in seq]
            if present != sorted(present, reverse=True):
                return Verdict("lemma2", False, "missing-time", {"node": sg.node, "iteration": it, "times": seq})
            got = [x for x in seq if x is not None]
            strict = [True, False, True]
            for j in range(len(got) - 1):
                if got[j] > got[j + 1] or (strict[j] and got[j] == got[j + 1]):
                    return Verdict("lemma2", False, "order", {"node": sg.node, "iteration": it, "times": seq})

    m = tv.m
    by_node: dict[int, list[_Segment]] = {}
    for sg in segs:
        by_node.setdefault(sg.node, []).append(sg)
    for u, w in tv.graph.edges():
        for su in by_node.get(u, ()):
            for sw in by_node.get(w, ()):
                if su.phase != sw.phase or su.priority != sw.priority:
                    continue
                if su.start > sw.end or sw.start > su.end:
                    continue
                if (sw.level - su.level) % m == 1:
                    par, ch = su, sw
                elif (su.level - sw.level) % m == 1:
                    par, ch = sw, su
                else:
                    continue
                bad = _monotone(par, ch)
                if bad:
                    return Verdict("lemma2", False, "monotone", {"parent": par.node, "child": ch.node, **bad})

    d = max(tv.diameter, 1)
    c1 = 0.0
    c2 = 0.0
    worst = None
    root_segs = [sg for sg in segs if sg.root and sg.times]
    groups: dict[int, list[_Segment]] = {}
    for sg in root_segs:
        groups.setdefault(sg.phase_index, []).append(sg)
    for pidx, group in sorted(groups.items()):
        first = min(sg.start for sg in group)
        last_gb = _last_dirty_round(tv, first)
        c1 = max(c1, (last_gb - first) / d)
        iters = sorted({it for sg in group for it in sg.times})
        for it in iters:
            if skip(group[0].phase, it):
                continue
            done = [sg.times[it] for sg in group if it in sg.times and sg.times[it][3] is not None]
            if not done:
                continue
            last_init = max(x[0] for x in done)
            finish = max(x[3] for x in done)
            ratio = (finish - last_init) / d
            if ratio > c2:
                c2, worst = ratio, {"phase_index": pidx, "iteration": it}
    return Verdict("lemma2", True, metrics={"c1": c1, "c2": c2, "c2_at": worst, "diameter": tv.diameter})


def _monotone(par: _Segment, ch: _Segment) -> Optional[dict]:
    for it in set(par.times) & set(ch.times):
        p, c = par.times[it], ch.times[it]
        for j in (0, 1):
            if p[j] is not None and c[j] is not None and not p[j] < c[j]:
                return {"iteration": it, "which": f"b{j}", "times": [p[j], c[j]]}
        for j in (2, 3):
            if p[j] is not None and c[j] is not None and not p[j] > c[j]:
                return {"iteration": it, "which": f"e{j - 2}", "times": [p[j], c[j]]}
    return None


def _last_dirty_round(tv: TraceView, start: int) -> int:
    last = start
    for t in range(start, tv.rounds + 1):
        if any(tv.state(t, v)["gb"] for v in range(tv.n)):
            last = t
        else:
            break
    return last


# --------------------------------------------------------------------------
# phase synchrony between roots


@dataclass
class TraceAnnotation:
    k: int
    sigma: list[dict[int, int]]  # per round: live root -> sequence number
    dirty: list[tuple[bool, bool]]  # per round: (0-dirty, 1-dirty)


def annotate(tv: TraceView) -> TraceAnnotation:
    k = tv.k
    phase_index = [1] * tv.n
    last_phase = [tv.state(0, v)["phase"] for v in range(tv.n)]
    sigma: list[dict[int, int]] = [{}]
    dirty: list[tuple[bool, bool]] = [(False, False)]
    for t in range(1, tv.rounds + 1):
        row: dict[int, int] = {}
        d0 = d1 = False
        for v in range(tv.n):
            s = tv.state(t, v)
            if s["phase"] != last_phase[v]:
                phase_index[v] += 1
                last_phase[v] = s["phase"]
            if s["gb"]:
                if s["phase"] == 0:
                    d0 = True
                else:
                    d1 = True
            if _live_root(s) and s["decision"] != LEADER:
                row[v] = (phase_index[v] - 1) * (2 * k + 1) + s["it"] + 1
        sigma.append(row)
        dirty.append((d0, d1))
    return TraceAnnotation(k, sigma, dirty)


def check_phase_sync(ann: TraceAnnotation) -> Verdict:
    gap = 0
    for t, row in enumerate(ann.sigma):
        if len(row) >= 2:
            spread = max(row.values()) - min(row.values())
            gap = max(gap, spread)
            if spread > ann.k - 1:
                return Verdict("phase-sync", False, "root-gap", {"round": t, "sigma": {str(v): s for v, s in row.items()}})
    pending = None  # kind of the dirty rounds since the last clean round
    for t, (d0, d1) in enumerate(ann.dirty):
        if d0 and d1:
            return Verdict("phase-sync", False, "clean-round", {"round": t, "reason": "both phases dirty"})
        if not (d0 or d1):
            pending = None
            continue
        kind = 0 if d0 else 1
        if pending is not None and pending != kind:
            return Verdict("phase-sync", False, "clean-round", {"round": t, "reason": "no clean round in between"})
        pending = kind
    return Verdict("phase-sync", True, metrics={"max_gap": gap})


# --------------------------------------------------------------------------
# outcome


def verify_outcome(tv: TraceView, candidates: Optional[Iterable[int]] = None) -> Verdict:
    if candidates is None:
        candidates = [v for v, x in enumerate(tv.inputs) if x]
    cands = set(candidates)
    first: dict[int, int] = {}
    for t in range(tv.rounds + 1):
        for v in range(tv.n):
            dec = tv.state(t, v)["decision"]
            if dec:
                if v in first and first[v] != dec:
                    return Verdict("outcome", False, "FlippedDecision", {"node": v, "round": t})
                first.setdefault(v, dec)
    final = [tv.state(tv.rounds, v)["decision"] for v in range(tv.n)]
    leaders = [v for v, d in enumerate(final) if d == LEADER]
    if len(leaders) > 1:
        return Verdict("outcome", False, "MultiLeader", {"leaders": leaders})
    undecided = [v for v, d in enumerate(final) if not d]
    if not leaders:
        return Verdict("outcome", False, "NoLeader", {"undecided": undecided[:10]})
    if leaders[0] not in cands:
        return Verdict("outcome", False, "NonCandidateLeader", {"leader": leaders[0]})
    if undecided:
        return Verdict("outcome", False, "Undecided", {"nodes": undecided[:10]})
    return Verdict("outcome", True, metrics={"leader": leaders[0]})


def proceed_ever_set(tv: TraceView) -> bool:
    return any(tv.state(t, v)["proceed"] for t in range(tv.rounds + 1) for v in range(tv.n))


def unique_max_prob(k: int, c: int) -> Fraction:
    """P(the maximum of c iid uniform draws from {1..k} is attained once)."""
    if not 1 <= c <= k <= 8:
        raise ValueError("need 1 <= c <= k <= 8")
    hits = 0
    for draw in itertools.product(range(1, k + 1), repeat=c):
        if draw.count(max(draw)) == 1:
            hits += 1
    return Fraction(hits, k**c)


# --------------------------------------------------------------------------
# synchronizer


def pulse_sequences(async_trace: Any) -> list[list[tuple[dict, dict]]]:
    """Per node, the serialized inner (state, message) after each pulse."""
    n = async_trace.graph.n
    out: list[list[tuple[dict, dict]]] = [[] for _ in range(n)]
    enc = async_trace.fields
    for e in async_trace.events:
        before, after = enc(e.before), enc(e.after)
        if before["sync"]["pulse"] != after["sync"]["pulse"]:
            out[e.node].append((after["inner"], enc(e.sent)["inner"]))
    return out


def check_pulse_equivalence(sync_trace: Any, async_trace: Any, pulses: Optional[int] = None) -> Verdict:
    seqs = pulse_sequences(async_trace)
    n = sync_trace.graph.n
    limit = sync_trace.rounds if pulses is None else min(pulses, sync_trace.rounds)
    for v in range(n):
        if len(seqs[v]) < limit:
            return Verdict("pulse-equivalence", False, "too-few-pulses", {"node": v, "pulses": len(seqs[v])})
        for t in range(1, limit + 1):
            want_state = sync_trace.fields(sync_trace.states[t][v])
            want_msg = sync_trace.fields(sync_trace.sent[t][v])
            got_state, got_msg = seqs[v][t - 1]
            if got_state != want_state or got_msg != want_msg:
                return Verdict("pulse-equivalence", False, "divergence",
                               {"node": v, "pulse": t, "sync": want_state, "async": got_state})
    overhead = async_trace.end_time / limit if limit else 0.0
    return Verdict("pulse-equivalence", True, metrics={"pulses": limit, "overhead": overhead})


def check_pulse_gap(async_trace: Any) -> Verdict:
    """Neighbors never drift more than one pulse apart."""
    g = async_trace.graph
    count = [0] * g.n
    enc = async_trace.fields
    for e in async_trace.events:
        if enc(e.before)["sync"]["pulse"] != enc(e.after)["sync"]["pulse"]:
            count[e.node] += 1
            for u in g.adjacency[e.node]:
                if abs(count[u] - count[e.node]) > 1:
                    return Verdict("pulse-gap", False, "gap", {"node": e.node, "neighbor": u, "time": e.time})
    return Verdict("pulse-gap", True, metrics={"pulses": count})
