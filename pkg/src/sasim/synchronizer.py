"""Pulse synchronizer: runs a synchronous automaton under the asynchronous
scheduler so that the inner actions of pulse t equal those of round t.

Each wrapped message carries the inner message of the sender's latest pulse,
the one before it, and the pulse number mod 3. A node at pulse t may fire
pulse t+1 once every port shows pulse t or t+1; it then rebuilds the round-t
inner view by taking the current component from senders at pulse t and the
previous component from senders already at t+1. σ₀ ports read as pulse 0, which
is how a node notices neighbors that have not been activated yet.
"""

from __future__ import annotations

from typing import Any, NamedTuple, Sequence

from .model import (
    AutomatonSpec,
    CounterRNG,
    Graph,
    Scheduler,
    Trace,
    run_asynchronous,
    runtime,
)


class SyncMsg(NamedTuple):
    cur: Any
    prev: Any
    pulse: int


class PulseState(NamedTuple):
    inner: Any
    pulse: int  # pulse index mod 3
    last: Any  # inner message sent at the latest pulse
    prev: Any  # inner message sent at the pulse before


def next_pulse_ready(state: PulseState, view: frozenset) -> bool:
    """True iff every port shows the node's pulse or the one after it."""
    ahead = (state.pulse + 1) % 3
    return all(m.pulse == state.pulse or m.pulse == ahead for m in view)


def inner_view(state: PulseState, view: frozenset) -> frozenset:
    ahead = (state.pulse + 1) % 3
    return frozenset(m.cur if m.pulse == state.pulse else m.prev for m in view if m.pulse in (state.pulse, ahead))


def synchronize(spec: AutomatonSpec) -> AutomatonSpec:
    """Wrap a synchronous automaton into an asynchronous one.

    The wrapper passes its randomness handle straight to the inner transition,
    so the caller decides the key; :func:`run_pulses` keys it by pulse number,
    which reproduces the synchronous round-t stream exactly.
    """
    sigma0 = spec.initial_message

    def initial_state(x: Any) -> PulseState:
        return PulseState(spec.initial_state(x), 0, sigma0, sigma0)

    def transition(state: PulseState, view: frozenset, rng: CounterRNG):
        if not next_pulse_ready(state, view):
            return state, SyncMsg(state.last, state.prev, state.pulse)
        nxt, msg = spec.transition(state.inner, inner_view(state, view), rng)
        new = PulseState(nxt, (state.pulse + 1) % 3, msg, state.last)
        return new, SyncMsg(msg, state.last, new.pulse)

    domains = None
    if spec.domains is not None:
        domains = {f"inner.{k}": v for k, v in spec.domains.items()}
        domains["sync.pulse"] = frozenset(range(3))

    def serialize(state: Any) -> Any:
        if isinstance(state, PulseState):
            return {"inner": spec.serialize(state.inner), "sync": {"pulse": state.pulse}}
        return {
            "inner": spec.serialize(state.cur),
            "sync": {"pulse": state.pulse, "prev": spec.serialize(state.prev)},
        }

    return AutomatonSpec(
        name=f"sync({spec.name})",
        initial_state=initial_state,
        transition=transition,
        initial_message=SyncMsg(sigma0, sigma0, 0),
        output=lambda s: spec.output(s.inner) if isinstance(s, PulseState) else None,
        domains=domains,
        serialize=serialize,
        params={**spec.params, "synchronized": True},
    )


def run_pulses(
    graph: Graph,
    wrapped: AutomatonSpec,
    inputs: Sequence[Any] | None,
    seed: int,
    scheduler: Scheduler | str,
    pulses: int,
    max_events: int = 10_000_000,
    halt_on_decided: bool = False,
    keyed_by_pulse: bool = True,
) -> Trace:
    """Run a synchronized automaton until every node completed ``pulses`` pulses.

    The absolute pulse count is the simulator's bookkeeping (the automaton only
    holds it mod 3); it keys node randomness when ``keyed_by_pulse`` is set.
    Without it, draws are keyed by activation count, which is only useful as a
    negative control.
    """
    n = graph.n
    done = [0] * n
    finished = [0]
    table = runtime(wrapped).table

    def until(v: int, before: int, after: int) -> bool:
        if table[after].pulse != table[before].pulse:
            done[v] += 1
            if done[v] == pulses:
                finished[0] += 1
        return finished[0] == n

    return run_asynchronous(
        graph, wrapped, inputs, seed, scheduler, max_events, until=until,
        halt_on_decided=halt_on_decided,
        rng_index=(lambda v, _act: done[v] + 1) if keyed_by_pulse else None,
    )


def absolute_pulses(trace: Trace) -> list[list[tuple[float, int]]]:
    """Per node, the (time, absolute pulse) after each pulse advance."""
    out: list[list[tuple[float, int]]] = [[] for _ in range(trace.graph.n)]
    count = [0] * trace.graph.n
    for e in trace.events:
        if e.before != e.after and trace.fields(e.before)["sync"]["pulse"] != trace.fields(e.after)["sync"]["pulse"]:
            count[e.node] += 1
            out[e.node].append((e.time, count[e.node]))
    return out
