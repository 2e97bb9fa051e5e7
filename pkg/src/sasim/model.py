"""Machine model: graphs with ports, presence-only port views, randomized
transitions and the two schedulers (synchronous rounds, asynchronous FIFO
events).

States and messages are arbitrary hashable values. The runners intern every
distinct value into a per-automaton table so traces are compact arrays of ids
and deterministic transitions can be memoized on ``(state, view)``.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import struct
import weakref
from array import array
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Hashable, Iterable, Iterator, Mapping, NamedTuple, Sequence

_MASK64 = (1 << 64) - 1


class SimulationError(Exception):
    pass


class GraphError(SimulationError):
    pass


class DisconnectedGraph(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class DanglingNodeId(GraphError):
    pass


class FileParseError(SimulationError):
    pass


class EmptyTransitionSet(SimulationError):
    pass


class UnboundedStateField(SimulationError):
    pass


class MaxRoundsExceeded(SimulationError):
    pass


class MaxEventsExceeded(SimulationError):
    pass


# --------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class Graph:
    """Connected undirected graph. ``adjacency[v]`` lists v's ports in id
    order; ``v`` itself appears there when v carries a self-loop."""

    adjacency: tuple[tuple[int, ...], ...]
    diameter: int

    @property
    def node_count(self) -> int:
        return len(self.adjacency)

    @property
    def n(self) -> int:
        return len(self.adjacency)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def has_self_loop(self, v: int) -> bool:
        return v in self.adjacency[v]

    def neighbors(self, v: int) -> tuple[int, ...]:
        """Neighbors of ``v`` excluding ``v`` itself."""
        return tuple(u for u in self.adjacency[v] if u != v)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u <= v]

    @property
    def self_loops(self) -> tuple[int, ...]:
        return tuple(v for v in range(self.n) if self.has_self_loop(v))


def _eccentricity(adj: Sequence[Sequence[int]], src: int) -> tuple[int, int]:
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if w not in dist:
                dist[w] = dist[u] + 1
                queue.append(w)
    return len(dist), max(dist.values())


def build_graph(
    edge_list: Iterable[tuple[int, int]],
    self_loops: str | Iterable[int] = "none",
    node_count: int | None = None,
) -> Graph:
    """Validate an edge list and build a :class:`Graph`.

    ``self_loops`` is ``"none"``, ``"all"`` or an iterable of node ids that get
    a loop. Pairs ``(v, v)`` inside ``edge_list`` always declare a loop.
    """
    edges = [(int(u), int(v)) for u, v in edge_list]
    if not edges and not node_count:
        raise GraphError("edge list is empty")
    ids = {x for e in edges for x in e}
    if any(x < 0 for x in ids):
        raise DanglingNodeId(f"negative node id in {sorted(ids)[:3]}")
    n = node_count if node_count is not None else (max(ids) + 1 if ids else 0)
    if n < 1:
        raise GraphError("graph needs at least one node")
    missing = [x for x in range(n) if x not in ids]
    if any(x >= n for x in ids):
        raise DanglingNodeId(f"node id {max(ids)} outside 0..{n - 1}")
    if missing and n > 1:
        raise DanglingNodeId(f"node ids not dense, missing {missing[:5]}")

    seen: set[tuple[int, int]] = set()
    nbrs: list[set[int]] = [set() for _ in range(n)]
    for u, v in edges:
        key = (min(u, v), max(u, v))
        if key in seen:
            raise DuplicateEdge(f"edge {key} listed twice")
        seen.add(key)
        nbrs[u].add(v)
        nbrs[v].add(u)

    if self_loops == "all":
        loops: Iterable[int] = range(n)
    elif self_loops in ("none", None):
        loops = ()
    elif isinstance(self_loops, str):
        raise GraphError(f"unknown self-loop policy {self_loops!r}")
    else:
        loops = self_loops
    for v in loops:
        if not 0 <= v < n:
            raise DanglingNodeId(f"self-loop on unknown node {v}")
        nbrs[v].add(v)

    plain = [[w for w in nbrs[v] if w != v] for v in range(n)]
    reached, _ = _eccentricity(plain, 0)
    if reached != n:
        raise DisconnectedGraph(f"only {reached} of {n} nodes reachable from node 0")
    diameter = max(_eccentricity(plain, v)[1] for v in range(n))
    return Graph(tuple(tuple(sorted(s)) for s in nbrs), diameter)


def read_edge_list(path: str | Path, self_loops: str | Iterable[int] = "none") -> Graph:
    """Parse the ``u v`` per line edge-list format (``v v`` is a self-loop)."""
    edges = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise FileParseError(f"{path}:{lineno}: expected 'u v', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if not edges:
        raise FileParseError(f"{path}: no edges")
    return build_graph(edges, self_loops)


def write_edge_list(graph: Graph, path: str | Path) -> None:
    lines = [f"{u} {v}" for u, v in graph.edges()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# ports and randomness

PortView = frozenset


def port_view(ports: Mapping[int, Hashable] | Iterable[Hashable]) -> frozenset:
    """Presence set of the messages currently written in a node's ports."""
    values = ports.values() if isinstance(ports, Mapping) else ports
    return frozenset(values)


class CounterRNG:
    """Counter-based stream keyed by ``(seed, node, index)``.

    Draw ``j`` is a pure function of the key and ``j``, so the order in which a
    scheduler visits nodes never changes what a node draws.
    """

    __slots__ = ("seed", "node", "index", "draws")

    def __init__(self, seed: int, node: int, index: int) -> None:
        self.seed = seed
        self.node = node
        self.index = index
        self.draws = 0

    def rekey(self, index: int) -> CounterRNG:
        return CounterRNG(self.seed, self.node, index)

    def _next64(self) -> int:
        key = struct.pack(
            "<4Q", self.seed & _MASK64, self.node & _MASK64, self.index & _MASK64, self.draws
        )
        self.draws += 1
        return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")

    def randbelow(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randbelow needs n >= 1")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self._next64()
            if x < limit:
                return x % n

    def coin(self) -> int:
        return self._next64() & 1

    def choice(self, seq: Sequence[Any]) -> Any:
        return seq[self.randbelow(len(seq))]

    def uniform_open_closed(self) -> float:
        """Uniform on (0, 1]."""
        return ((self._next64() >> 11) + 1) / float(1 << 53)


# --------------------------------------------------------------------------
# automata


def default_serialize(state: Any) -> Any:
    if hasattr(state, "_asdict"):
        return {k: default_serialize(v) for k, v in state._asdict().items()}
    if isinstance(state, (list, tuple)):
        return [default_serialize(x) for x in state]
    if isinstance(state, frozenset):
        return sorted((default_serialize(x) for x in state), key=repr)
    if hasattr(state, "value") and hasattr(state, "name"):  # enums
        return state.value
    return state


def flatten_fields(data: Any, prefix: str = "") -> dict[str, Any]:
    """Flatten nested dicts into dotted keys; non-dict values become ``value``."""
    if not isinstance(data, dict):
        return {prefix or "value": data}
    out: dict[str, Any] = {}
    for k, v in data.items():
        key = f"{prefix}.{k}" if prefix else k
        if isinstance(v, dict):
            out.update(flatten_fields(v, key))
        else:
            out[key] = v
    return out


Transition = Callable[[Any, frozenset, CounterRNG], "tuple[Any, Any]"]


@dataclass(eq=False)
class AutomatonSpec:
    """A randomized finite automaton.

    ``transition(state, view, rng)`` returns ``(next_state, message)`` and may
    only draw randomness from ``rng``. ``output`` decodes Q_out (``None`` means
    undecided). ``domains`` maps every flattened serialized field to its finite
    set of admissible values.
    """

    name: str
    initial_state: Callable[[Any], Any]
    transition: Transition
    initial_message: Any
    output: Callable[[Any], Any] = lambda s: None
    domains: Mapping[str, Any] | None = None
    serialize: Callable[[Any], Any] = default_serialize
    memoize: bool = True
    params: Mapping[str, Any] = field(default_factory=dict)

    def fields(self, state: Any) -> dict[str, Any]:
        return flatten_fields(self.serialize(state))

    def domain_bound(self) -> int | None:
        if self.domains is None:
            return None
        bound = 1
        for values in self.domains.values():
            bound *= len(values)
        return bound


def relation_transition(tau: Callable[[Any, frozenset], Sequence[tuple[Any, Any]]]) -> Transition:
    """Turn a set-valued τ(q, χ) into a transition picking uniformly from it."""

    def transition(state: Any, view: frozenset, rng: CounterRNG) -> tuple[Any, Any]:
        options = tau(state, view)
        if not options:
            raise EmptyTransitionSet(f"τ({state!r}, ·) is empty")
        options = list(options)
        if len(options) == 1:
            return options[0]
        return options[rng.randbelow(len(options))]

    return transition


def step_node(spec: AutomatonSpec, state: Any, view: frozenset, rng: CounterRNG) -> tuple[Any, Any]:
    return spec.transition(state, view, rng)


class _Runtime:
    """Intern table plus transition memo for one automaton."""

    MEMO_LIMIT = 2_000_000

    def __init__(self, spec: AutomatonSpec) -> None:
        self.spec = spec
        self.ids: dict[Any, int] = {}
        self.table: list[Any] = []
        self.memo: dict[tuple[int, frozenset], tuple[int, int]] = {}
        self._decided: list[bool] = []

    def intern(self, value: Any) -> int:
        i = self.ids.get(value)
        if i is None:
            i = len(self.table)
            self.ids[value] = i
            self.table.append(value)
            self._decided.append(self.spec.output(value) is not None)
        return i

    def decided(self, i: int) -> bool:
        return self._decided[i]

    def step(self, sid: int, view: frozenset, seed: int, node: int, index: int) -> tuple[int, int, bool]:
        """Returns (next id, message id, used randomness)."""
        key = (sid, view)
        hit = self.memo.get(key)
        if hit is not None:
            return hit[0], hit[1], False
        rng = CounterRNG(seed, node, index)
        table = self.table
        state, msg = self.spec.transition(table[sid], frozenset(table[i] for i in view), rng)
        res = (self.intern(state), self.intern(msg))
        if rng.draws == 0 and self.spec.memoize:
            if len(self.memo) >= self.MEMO_LIMIT:
                self.memo.clear()
            self.memo[key] = res
        return res[0], res[1], rng.draws > 0


_RUNTIMES: "weakref.WeakKeyDictionary[AutomatonSpec, _Runtime]" = weakref.WeakKeyDictionary()


def runtime(spec: AutomatonSpec) -> _Runtime:
    rt = _RUNTIMES.get(spec)
    if rt is None:
        rt = _RUNTIMES[spec] = _Runtime(spec)
    return rt


# --------------------------------------------------------------------------
# traces


class TraceRecord(NamedTuple):
    t: float
    node: int
    before: Any
    after: Any
    sent: Any
    view: frozenset


class Delivery(NamedTuple):
    time: float
    src: int
    dst: int
    msg: int
    send_seq: int


class AsyncEvent(NamedTuple):
    time: float
    node: int
    before: int
    after: int
    sent: int
    view: tuple[int, ...]


@dataclass(eq=False)
class Trace:
    """Replayable execution record.

    Synchronous traces keep one id array per round: ``states[t][v]`` is v's
    state after round t (``t = 0`` holds the initial states) and ``sent[t][v]``
    the message v sent in round t (``sent[0]`` is σ₀ everywhere). Asynchronous
    traces keep activation ``events`` and message ``deliveries``.
    """

    schedule_kind: str
    graph: Graph
    spec: AutomatonSpec
    seed: int
    table: list[Any]
    inputs: list[Any]
    terminal_status: str = "max-steps"
    states: list[array] = field(default_factory=list)
    sent: list[array] = field(default_factory=list)
    events: list[AsyncEvent] = field(default_factory=list)
    deliveries: list[Delivery] = field(default_factory=list)
    end_time: float = 0.0
    _field_cache: dict[int, dict] = field(default_factory=dict, repr=False)

    @property
    def rounds(self) -> int:
        return len(self.states) - 1

    def state(self, t: int, v: int) -> Any:
        return self.table[self.states[t][v]]

    def message(self, t: int, v: int) -> Any:
        return self.table[self.sent[t][v]]

    def fields(self, sid: int) -> dict:
        """Serialized (nested dict) form of interned value ``sid``, cached."""
        f = self._field_cache.get(sid)
        if f is None:
            f = self._field_cache[sid] = self.spec.serialize(self.table[sid])
        return f

    def view_ids(self, t: int, v: int) -> frozenset:
        prev = self.sent[t - 1]
        return frozenset(prev[u] for u in self.graph.adjacency[v])

    def records(self) -> Iterator[TraceRecord]:
        tab = self.table
        if self.schedule_kind == "synchronous":
            for t in range(1, len(self.states)):
                for v in range(self.graph.n):
                    yield TraceRecord(
                        t,
                        v,
                        tab[self.states[t - 1][v]],
                        tab[self.states[t][v]],
                        tab[self.sent[t][v]],
                        frozenset(tab[i] for i in self.view_ids(t, v)),
                    )
        else:
            for e in self.events:
                yield TraceRecord(
                    e.time, e.node, tab[e.before], tab[e.after], tab[e.sent],
                    frozenset(tab[i] for i in e.view),
                )

    def outputs(self) -> list[Any]:
        if self.schedule_kind == "synchronous":
            last = self.states[-1]
        else:
            last = self.final_state_ids()
        return [self.spec.output(self.table[i]) for i in last]

    def final_state_ids(self) -> list[int]:
        if self.schedule_kind == "synchronous":
            return list(self.states[-1])
        final = [self.spec_initial_ids[v] for v in range(self.graph.n)]
        for e in self.events:
            final[e.node] = e.after
        return final

    @property
    def spec_initial_ids(self) -> list[int]:
        if self.states:
            return list(self.states[0])
        rt = runtime(self.spec)
        return [rt.intern(self.spec.initial_state(x)) for x in self.inputs]

    def distinct_state_ids(self) -> set[int]:
        if self.schedule_kind == "synchronous":
            out: set[int] = set()
            for row in self.states:
                out.update(row)
            return out
        out = set(self.spec_initial_ids)
        out.update(e.after for e in self.events)
        return out

    def raise_for_status(self) -> None:
        if self.terminal_status == "max-steps":
            if self.schedule_kind == "synchronous":
                raise MaxRoundsExceeded(f"no halt within {self.rounds} rounds")
            raise MaxEventsExceeded(f"no halt within {len(self.events)} activations")

    def _encode(self, value: Any) -> Any:
        return self.spec.serialize(value)

    def dump_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.iter_jsonl():
                fh.write(line)
                fh.write("\n")

    def iter_jsonl(self) -> Iterator[str]:
        header = {
            "kind": "header",
            "schedule_kind": self.schedule_kind,
            "automaton": self.spec.name,
            "params": dict(self.spec.params),
            "seed": self.seed,
            "n": self.graph.n,
            "edges": [list(e) for e in self.graph.edges()],
            "inputs": self.inputs,
            "terminal_status": self.terminal_status,
            "initial": [self.fields(i) for i in self.spec_initial_ids],
        }
        yield json.dumps(header, sort_keys=True)
        enc = self.fields
        if self.schedule_kind == "synchronous":
            for t in range(1, len(self.states)):
                for v in range(self.graph.n):
                    view = sorted(
                        (json.dumps(enc(i), sort_keys=True) for i in self.view_ids(t, v))
                    )
                    rec = {
                        "t": t,
                        "node": v,
                        "state": enc(self.states[t][v]),
                        "sent": enc(self.sent[t][v]),
                        "view": [json.loads(x) for x in view],
                    }
                    yield json.dumps(rec, sort_keys=True)
        else:
            for e in self.events:
                view = sorted(json.dumps(enc(i), sort_keys=True) for i in e.view)
                rec = {
                    "t": e.time,
                    "node": e.node,
                    "state": enc(e.after),
                    "sent": enc(e.sent),
                    "view": [json.loads(x) for x in view],
                }
                yield json.dumps(rec, sort_keys=True)


# --------------------------------------------------------------------------
# synchronous scheduler


def run_synchronous(
    graph: Graph,
    spec: AutomatonSpec,
    inputs: Sequence[Any] | None,
    seed: int,
    max_rounds: int,
    halt_on_decided: bool = True,
    message_is_state: bool = False,
) -> Trace:
    """Run lock-step rounds: in round t each node reads the messages sent in
    round t-1 (σ₀ in round 1), updates and sends one message to all ports.

    Halts on a global fixed point, once every node has decided, or after
    ``max_rounds`` (reported as ``terminal_status = "max-steps"``).
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    n = graph.n
    inputs = list(inputs) if inputs is not None else [None] * n
    if len(inputs) != n:
        raise ValueError(f"expected {n} inputs, got {len(inputs)}")
    rt = runtime(spec)
    adj = graph.adjacency
    cur = array("i", (rt.intern(spec.initial_state(x)) for x in inputs))
    prev_sent = array("i", [rt.intern(spec.initial_message)] * n)
    trace = Trace("synchronous", graph, spec, seed, rt.table, inputs)
    trace.states.append(cur)
    trace.sent.append(prev_sent)
    decided = rt.decided
    step = rt.step
    status = "max-steps"
    for t in range(1, max_rounds + 1):
        nxt = array("i", cur)
        out = nxt if message_is_state else array("i", prev_sent)
        random_used = False
        for v in range(n):
            view = frozenset([prev_sent[u] for u in adj[v]])
            sid, mid, used = step(cur[v], view, seed, v, t)
            nxt[v] = sid
            if not message_is_state:
                out[v] = mid
            random_used |= used
        trace.states.append(nxt)
        trace.sent.append(out)
        fixed = not random_used and nxt == cur and out == prev_sent
        cur, prev_sent = nxt, out
        if halt_on_decided and all(decided(i) for i in cur):
            status = "all-decided"
            break
        if fixed:
            status = "quiesced"
            break
    trace.terminal_status = status
    return trace


# --------------------------------------------------------------------------
# asynchronous scheduler


class Scheduler:
    """Latency policy. All activation gaps and delays lie in (0, 1]."""

    name = "abstract"

    def first_activation(self, rng: CounterRNG, v: int, n: int) -> float:
        return self.gap(rng, v, n)

    def gap(self, rng: CounterRNG, v: int, n: int) -> float:
        raise NotImplementedError

    def delay(self, rng: CounterRNG, u: int, v: int, n: int) -> float:
        raise NotImplementedError


class UniformRandomDelay(Scheduler):
    name = "uniform-random-delay"

    def gap(self, rng, v, n):
        return rng.uniform_open_closed()

    def delay(self, rng, u, v, n):
        return rng.uniform_open_closed()


class RoundRobin(Scheduler):
    """Nodes fire in id order, one every 1/n time units; messages land in half
    that spacing so each activation sees everything sent before it."""

    name = "round-robin"

    def first_activation(self, rng, v, n):
        return (v + 1) / n

    def gap(self, rng, v, n):
        return 1.0

    def delay(self, rng, u, v, n):
        return 0.5 / n


class AdversarialLag(Scheduler):
    """Listed nodes always take ``factor`` time units to act and to deliver;
    everyone else draws uniformly from (0, 1]."""

    name = "adversarial-lag"

    def __init__(self, nodes: Iterable[int], factor: float = 1.0) -> None:
        if not 0 < factor <= 1:
            raise ValueError("lag factor must lie in (0, 1]")
        self.nodes = frozenset(nodes)
        self.factor = factor

    def gap(self, rng, v, n):
        return self.factor if v in self.nodes else rng.uniform_open_closed()

    def delay(self, rng, u, v, n):
        return self.factor if u in self.nodes else rng.uniform_open_closed()


def parse_scheduler(text: str) -> Scheduler:
    """``uniform-random-delay`` | ``round-robin`` | ``adversarial-lag:1,2[:factor]``."""
    name, _, rest = text.partition(":")
    if name == UniformRandomDelay.name:
        return UniformRandomDelay()
    if name == RoundRobin.name:
        return RoundRobin()
    if name == AdversarialLag.name:
        nodes_text, _, factor = rest.partition(":")
        nodes = [int(x) for x in nodes_text.split(",") if x]
        return AdversarialLag(nodes, float(factor) if factor else 1.0)
    raise ValueError(f"unknown scheduler {text!r}")


def run_asynchronous(
    graph: Graph,
    spec: AutomatonSpec,
    inputs: Sequence[Any] | None,
    seed: int,
    scheduler: Scheduler | str,
    max_events: int,
    until: Callable[[int, int, int], bool] | None = None,
    halt_on_decided: bool = True,
    rng_index: Callable[[int, int], int] | None = None,
) -> Trace:
    """Event-driven run with per-link FIFO channels.

    ``until(node, before_id, after_id)`` is called after every activation and
    stops the run when it returns true. Node randomness is keyed by
    ``rng_index(node, activation_count)`` (default: the activation count);
    scheduler randomness uses a separate key.
    """
    if isinstance(scheduler, str):
        scheduler = parse_scheduler(scheduler)
    n = graph.n
    inputs = list(inputs) if inputs is not None else [None] * n
    rt = runtime(spec)
    adj = graph.adjacency
    sigma0 = rt.intern(spec.initial_message)
    cur = [rt.intern(spec.initial_state(x)) for x in inputs]
    ports: list[dict[int, int]] = [{u: sigma0 for u in adj[v]} for v in range(n)]
    last_sent = [sigma0] * n
    link_clock: dict[tuple[int, int], float] = {}
    activations = [0] * n
    sched_rng = CounterRNG(seed, -1, 0)
    trace = Trace("asynchronous", graph, spec, seed, rt.table, inputs)

    heap: list[tuple[float, int, int, int, int, int]] = []
    seq = 0
    for v in range(n):
        heapq.heappush(heap, (scheduler.first_activation(sched_rng, v, n), seq, 0, v, 0, 0))
        seq += 1
    pending = 0
    unstable = set(range(n))
    status = "max-steps"
    now = 0.0
    undecided = sum(1 for i in cur if not rt.decided(i))
    while heap:
        now, s, kind, a, b, c = heapq.heappop(heap)
        if kind == 1:
            src, dst, msg = a, b, c
            ports[dst][src] = msg
            pending -= 1
            unstable.add(dst)
            trace.deliveries.append(Delivery(now, src, dst, msg, s))
            continue
        v = a
        if len(trace.events) >= max_events:
            break
        activations[v] += 1
        view = frozenset(ports[v].values())
        before = cur[v]
        index = activations[v] if rng_index is None else rng_index(v, activations[v])
        sid, mid, used = rt.step(before, view, seed, v, index)
        cur[v] = sid
        trace.events.append(AsyncEvent(now, v, before, sid, mid, tuple(sorted(view))))
        undecided += rt.decided(before) - rt.decided(sid)
        changed = sid != before or mid != last_sent[v]
        if mid != last_sent[v]:
            last_sent[v] = mid
            for u in adj[v]:
                at = now + scheduler.delay(sched_rng, v, u, n)
                at = max(at, link_clock.get((v, u), 0.0))
                link_clock[(v, u)] = at
                heapq.heappush(heap, (at, seq, 1, v, u, mid))
                seq += 1
                pending += 1
        if changed or used:
            unstable.add(v)
        else:
            unstable.discard(v)
        heapq.heappush(heap, (now + scheduler.gap(sched_rng, v, n), seq, 0, v, 0, 0))
        seq += 1
        if until is not None and until(v, before, sid):
            status = "until"
            break
        if halt_on_decided and undecided == 0:
            status = "all-decided"
            break
        if not unstable and pending == 0:
            status = "quiesced"
            break
    trace.end_time = now
    trace.terminal_status = status
    return trace


# --------------------------------------------------------------------------
# state-space audit


@dataclass
class AuditReport:
    per_n: dict[int, int]
    field_values: dict[int, dict[str, set]]
    domain_bound: int | None
    passed: bool
    escaped_fields: dict[str, list]

    def to_dict(self) -> dict:
        return {
            "distinct_states_per_n": {str(k): v for k, v in sorted(self.per_n.items())},
            "field_cardinality_per_n": {
                str(k): {f: len(vals) for f, vals in sorted(fv.items())}
                for k, fv in sorted(self.field_values.items())
            },
            "domain_bound": self.domain_bound,
            "passed": self.passed,
            "escaped_fields": self.escaped_fields,
        }


def _freeze(x: Any) -> Any:
    if isinstance(x, list):
        return tuple(_freeze(y) for y in x)
    return x


def audit_state_space(traces: Iterable[Trace], spec: AutomatonSpec) -> AuditReport:
    """Collect distinct serialized states per graph size and check them against
    the declared finite domains.

    Raises :class:`UnboundedStateField` for any value outside its domain. The
    audit passes when, in addition, every field's value set at the largest size
    is already covered by the smaller sizes.
    """
    if spec.domains is None:
        raise UnboundedStateField(f"{spec.name} declares no state domains")
    domains = {k: set(v) for k, v in spec.domains.items()}
    per_n: dict[int, set] = {}
    field_values: dict[int, dict[str, set]] = {}
    for trace in traces:
        if trace.spec is not spec and trace.spec.params != spec.params:
            raise ValueError("audit mixes traces of different automata")
        n = trace.graph.n
        bucket = per_n.setdefault(n, set())
        fv = field_values.setdefault(n, {})
        for sid in trace.distinct_state_ids():
            flat = flatten_fields(trace.fields(sid))
            for key, value in flat.items():
                value = _freeze(value)
                if key not in domains:
                    raise UnboundedStateField(f"field {key!r} has no declared domain")
                if value not in domains[key]:
                    raise UnboundedStateField(f"field {key!r} value {value!r} outside its domain")
                fv.setdefault(key, set()).add(value)
            bucket.add(json.dumps(flat, sort_keys=True))
    sizes = sorted(per_n)
    escaped: dict[str, list] = {}
    if len(sizes) > 1:
        small: dict[str, set] = {}
        for n in sizes[:-1]:
            for key, vals in field_values[n].items():
                small.setdefault(key, set()).update(vals)
        for key, vals in field_values[sizes[-1]].items():
            extra = vals - small.get(key, set())
            if extra:
                escaped[key] = sorted(map(repr, extra))
    return AuditReport(
        per_n={k: len(v) for k, v in per_n.items()},
        field_values=field_values,
        domain_bound=spec.domain_bound(),
        passed=not escaped,
        escaped_fields=escaped,
    )
