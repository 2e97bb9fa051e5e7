"""The k-leader-selection automaton.

Phases alternate between detection (``phase == 0``) and elimination
(``phase == 1``). Each phase grows balls from the surviving candidates and then
runs 2k back-to-back broadcast & echo iterations over the resulting DAG.

Detection: roots stream random symbols down their DAG; a node raises the
proceed flag when it sees disagreeing parents, a same-level neighbor whose
symbol differs from its own, or a neighbor level outside its window. The flag
travels back to the root with Echo. A root that finishes the phase without the
flag declares itself leader; otherwise it starts an elimination phase.

Elimination: each root draws a priority in {1..k} and attaches it to GrowBall.
Higher priority balls overwrite lower ones and a root overwritten this way
withdraws. The survivors start the next detection phase.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Any, NamedTuple, Optional

from .ballcast import (
    BEState,
    LevelState,
    Neighborhood,
    Stage,
    broadcast_step,
    echo_step,
    modulus,
    select_level,
    sync_aux_broadcast,
    sync_aux_echo,
)
from .model import AutomatonSpec, CounterRNG

DETECTION = 0
ELIMINATION = 1


class Decision(IntEnum):
    UNDECIDED = 0
    LEADER = 1
    NON_LEADER = 2


class DoubleDecision(AssertionError):
    pass


@dataclass(frozen=True)
class ProtocolParams:
    k: int
    symbol_space_size: int = 16

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.symbol_space_size < 2:
            raise ValueError("symbol space needs at least 2 symbols")

    @property
    def m(self) -> int:
        return modulus(self.k)

    @property
    def last_iteration(self) -> int:
        return 2 * self.k


class LeaderState(NamedTuple):
    phase: int = DETECTION
    lv: LevelState = LevelState()
    be: BEState = BEState()
    candidate: bool = False
    withdrawn: bool = False
    priority: Optional[int] = None
    symbol: Optional[int] = None  # symbol emitted this round, None for ⊥
    proceed: bool = False
    geo: bool = False  # geometric coin already came up 1 in this phase
    decision: Decision = Decision.UNDECIDED

    @property
    def leveled(self) -> bool:
        return self.lv.level is not None

    @property
    def live_root(self) -> bool:
        return self.lv.is_root and self.candidate and not self.withdrawn


SIGMA0 = LeaderState(decision=Decision.NON_LEADER)


def decide(state: LeaderState) -> Optional[str]:
    if state.decision == Decision.LEADER:
        return "leader"
    if state.decision == Decision.NON_LEADER:
        return "non-leader"
    return None


def _set_decision(state: LeaderState, decision: Decision) -> LeaderState:
    if state.decision not in (Decision.UNDECIDED, decision):
        raise DoubleDecision(f"{state.decision.name} -> {decision.name}")
    return state._replace(decision=decision)


def _withdraw(state: LeaderState) -> LeaderState:
    if state.candidate and not state.withdrawn:
        state = _set_decision(state._replace(withdrawn=True), Decision.NON_LEADER)
    return state


def phase_reset(state: LeaderState, new_phase: int) -> LeaderState:
    """Clear every per-phase variable; a live candidate withdraws."""
    state = _withdraw(state)
    return state._replace(
        phase=new_phase,
        lv=LevelState(None, False, state.lv.parity, False),
        be=BEState(),
        priority=None,
        symbol=None,
        proceed=False,
        geo=False,
    )


def _join(state: LeaderState, growballs: list[LeaderState], m: int) -> LeaderState:
    """Join as a non-root using the GrowBall messages of the winning priority."""
    if state.phase == ELIMINATION:
        top = max(u.priority for u in growballs)
        growballs = [u for u in growballs if u.priority == top]
    else:
        top = None
    level = select_level({u.lv.level for u in growballs}, m)
    return state._replace(
        lv=LevelState(level, False, state.lv.parity, True),
        be=BEState(),
        priority=top,
        symbol=None,
    )


def _start_phase(state: LeaderState, phase: int, rng: CounterRNG, k: int) -> LeaderState:
    """A surviving root signaled for ``phase`` starts growing its ball."""
    state = state._replace(
        phase=phase,
        lv=LevelState(state.lv.parity, True, state.lv.parity, True),
        be=BEState(),
        priority=rng.randbelow(k) + 1 if phase == ELIMINATION else None,
        symbol=None,
        proceed=False,
        geo=False,
    )
    return state


class _Hood(NamedTuple):
    """A leveled node's view split by neighbor class (full neighbor states)."""

    parents: list
    children: list
    same: list
    foreign: list
    all_detecting: bool  # every port shows a leveled detection-phase state

    def be_neighborhood(self) -> Neighborhood:
        return Neighborhood(
            [u.be for u in self.parents],
            [u.be for u in self.children],
            [u.be for u in self.same],
            [u.be for u in self.foreign],
        )


def classify_view(state: LeaderState, view: frozenset, m: int) -> _Hood:
    """Classify the neighbor states taking part in the node's ball structure.

    Only states of the node's own phase that carry a level count; during
    elimination they must also carry the node's priority.
    """
    own = state.lv.level
    phase = state.phase
    parents: list = []
    children: list = []
    same: list = []
    foreign: list = []
    ready = True
    for u in view:
        level = u.lv.level
        if u.phase != phase or level is None or u.decision == Decision.LEADER:
            ready = False
            continue
        if phase == ELIMINATION and u.priority != state.priority:
            continue
        d = (level - own) % m
        if d == 0:
            same.append(u)
        elif d == 1:
            children.append(u)
        elif d == m - 1:
            parents.append(u)
        else:
            foreign.append(u)
    return _Hood(parents, children, same, foreign, ready and phase == DETECTION)


def _be_update(state: LeaderState, hood: _Hood, rng: CounterRNG, p: ProtocolParams) -> tuple[BEState, bool]:
    nb = hood.be_neighborhood()
    geo = state.geo
    geometric = state.phase == DETECTION

    def echo_aux(be: BEState, nbh: Neighborhood) -> bool:
        nonlocal geo
        if geometric and be.it == p.k and not geo:
            if not rng.coin():
                return False
            geo = True
        return sync_aux_echo(be, nbh)

    be = broadcast_step(state.be, nb, state.lv.is_root, p.last_iteration, sync_aux_broadcast)
    be = echo_step(be, nb, echo_aux)
    return be, geo


def detection_step(
    pre: LeaderState, be: BEState, hood: _Hood, rng: CounterRNG, p: ProtocolParams
) -> tuple[Optional[int], bool]:
    """Symbol emitted this round and the updated proceed flag.

    ``pre`` is the node's state at the start of the round (its symbol is the
    one sent last round), ``be`` its broadcast & echo state after this round.
    """
    proceed = pre.proceed
    if hood.foreign and hood.all_detecting:
        proceed = True
    parent_symbols = {u.symbol for u in hood.parents}
    if len(parent_symbols) > 1:
        proceed = True
    own = pre.symbol
    if not proceed:
        for u in hood.same:
            if u.symbol != own:
                proceed = True
                break
    if not proceed:
        for u in hood.children:
            if u.proceed and u.be.stage == Stage.ECHO:
                proceed = True
                break

    if pre.lv.is_root:
        symbol = rng.randbelow(p.symbol_space_size) if 1 <= be.it <= p.last_iteration else None
    elif len(parent_symbols) == 1:
        (symbol,) = parent_symbols
    else:
        symbol = None
    return symbol, proceed


def elimination_step(pre: LeaderState, hood: _Hood, rng: CounterRNG, p: ProtocolParams) -> LeaderState:
    """Elimination iterations run plain broadcast & echo with iteration synchrony."""
    be, _ = _be_update(pre, hood, rng, p)
    return pre._replace(lv=pre.lv._replace(parity=1 - pre.lv.parity, growball=False), be=be)


def leader_transition(state: LeaderState, view: frozenset, rng: CounterRNG, p: ProtocolParams) -> LeaderState:
    if state.decision == Decision.LEADER:
        return state
    m = p.m
    phase = state.phase
    other: list = []
    same_gb: list = []
    for u in view:
        if u.lv.growball:
            (same_gb if u.phase == phase else other).append(u)

    if other or state.lv.level is None or same_gb or state.live_root:
        # rare paths: joining, phase switches, root signals
        stepped = state._replace(lv=state.lv._replace(parity=1 - state.lv.parity, growball=False))
        if other:
            stepped = phase_reset(stepped, other[0].phase)
            return _join(stepped, other, m)
        if stepped.lv.level is None:
            if same_gb:
                return _join(_withdraw(stepped), same_gb, m)
            if stepped.candidate and not stepped.withdrawn and phase == DETECTION:
                return _start_phase(stepped, DETECTION, rng, p.k)
            return stepped
        if phase == ELIMINATION and same_gb and max(u.priority for u in same_gb) > stepped.priority:
            return _join(_withdraw(stepped), same_gb, m)
        if stepped.live_root and stepped.be == (p.last_iteration, Stage.DONE):
            if phase == ELIMINATION:
                return _start_phase(stepped, DETECTION, rng, p.k)
            if stepped.proceed:
                return _start_phase(stepped, ELIMINATION, rng, p.k)
            return _set_decision(stepped, Decision.LEADER)

    hood = classify_view(state, view, m)
    if phase == ELIMINATION:
        return elimination_step(state, hood, rng, p)
    be, geo = _be_update(state, hood, rng, p)
    symbol, proceed = detection_step(state, be, hood, rng, p)
    lv = state.lv
    return LeaderState(
        phase, LevelState(lv.level, lv.is_root, 1 - lv.parity, False), be,
        state.candidate, state.withdrawn, state.priority, symbol, proceed, geo, state.decision,
    )


def kls_automaton(params: ProtocolParams | int, symbol_space_size: int = 16) -> AutomatonSpec:
    """Input per node: truthy for a candidate. Output: ``leader``/``non-leader``."""
    if not isinstance(params, ProtocolParams):
        params = ProtocolParams(int(params), symbol_space_size)
    p = params

    def initial_state(x: Any) -> LeaderState:
        if x:
            return LeaderState(candidate=True)
        return LeaderState(decision=Decision.NON_LEADER)

    def transition(state: LeaderState, view: frozenset, rng: CounterRNG):
        new = leader_transition(state, view, rng, p)
        return new, new

    bools = frozenset([False, True])
    domains = {
        "phase": frozenset([DETECTION, ELIMINATION]),
        "lv.level": frozenset([None, *range(p.m)]),
        "lv.is_root": bools,
        "lv.parity": frozenset([0, 1]),
        "lv.growball": bools,
        "be.it": frozenset(range(p.last_iteration + 1)),
        "be.stage": frozenset(int(s) for s in Stage),
        "candidate": bools,
        "withdrawn": bools,
        "priority": frozenset([None, *range(1, p.k + 1)]),
        "symbol": frozenset([None, *range(p.symbol_space_size)]),
        "proceed": bools,
        "geo": bools,
        "decision": frozenset(int(d) for d in Decision),
    }
    return AutomatonSpec(
        name="kls",
        initial_state=initial_state,
        transition=transition,
        initial_message=SIGMA0,
        output=decide,
        domains=domains,
        params={"k": p.k, "symbols": p.symbol_space_size},
    )
