"""Ball growing, the parent/child DAG it induces, and broadcast & echo over it.

Everything here is a pure per-node function. Neighbor information comes from
the states a node sees in its ports; a neighbor is classified by comparing its
level with the node's own level modulo ``M = 2k + 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Callable, Iterable, NamedTuple, Optional

from .model import AutomatonSpec, CounterRNG


class NoValidLevel(Exception):
    """Raised when no level satisfies both selection conditions."""


class NeighborClass(IntEnum):
    PARENT = 0
    CHILD = 1
    SAME = 2
    FOREIGN = 3


class Stage(IntEnum):
    WAIT = 0  # joined, waiting to become broadcast ready for iteration 0
    BREADY = 1  # broadcast ready, held back by an auxiliary condition
    BCAST = 2  # sending Broadcast
    BDONE = 3  # broadcast over, waiting for children's Echo
    EREADY = 4  # echo ready, held back by an auxiliary condition
    ECHO = 5  # sending Echo
    DONE = 6  # echo over for this iteration


class LevelState(NamedTuple):
    level: Optional[int] = None
    is_root: bool = False
    parity: int = 0
    growball: bool = False  # sending GrowBall(level) this round


class BEState(NamedTuple):
    """Broadcast & echo bookkeeping for one node."""

    it: int = 0
    stage: Stage = Stage.WAIT

    @property
    def b_ready(self) -> bool:
        return self.stage >= Stage.BREADY

    @property
    def e_ready(self) -> bool:
        return self.stage >= Stage.EREADY

    @property
    def sending_broadcast(self) -> bool:
        return self.stage == Stage.BCAST

    @property
    def sending_echo(self) -> bool:
        return self.stage == Stage.ECHO

    @property
    def aux_blocked(self) -> bool:
        return self.stage in (Stage.BREADY, Stage.EREADY)


def modulus(k: int) -> int:
    return 2 * k + 2


def select_level(levels: Iterable[int], m: int) -> int:
    """Smallest ℓ with ℓ-1 mod m among ``levels`` and ℓ+1 mod m not among them."""
    present = set(levels)
    if not present:
        raise NoValidLevel("no GrowBall levels received")
    for cand in range(m):
        if (cand - 1) % m in present and (cand + 1) % m not in present:
            return cand
    raise NoValidLevel(f"no level fits L={sorted(present)} with M={m}")


def classify_neighbor(own_level: int, neighbor_level: int, m: int) -> NeighborClass:
    diff = (neighbor_level - own_level) % m
    if diff == 0:
        return NeighborClass.SAME
    if diff == 1:
        return NeighborClass.CHILD
    if diff == m - 1:
        return NeighborClass.PARENT
    return NeighborClass.FOREIGN


def is_locally_observable_boundary(own_level: int, neighbor_levels: Iterable[int], m: int) -> bool:
    return any((lv - own_level) % m not in (0, 1, m - 1) for lv in neighbor_levels)


@dataclass
class Neighborhood:
    """Neighbor B&E states grouped by their relation to the node."""

    parents: list[BEState] = field(default_factory=list)
    children: list[BEState] = field(default_factory=list)
    same: list[BEState] = field(default_factory=list)
    foreign: list[BEState] = field(default_factory=list)

    @classmethod
    def build(cls, own_level: int, neighbors: Iterable[tuple[int, BEState]], m: int) -> Neighborhood:
        nb = cls()
        buckets = (nb.parents, nb.children, nb.same, nb.foreign)
        for level, be in neighbors:
            buckets[classify_neighbor(own_level, level, m)].append(be)
        return nb

    @property
    def non_children(self) -> list[BEState]:
        return self.parents + self.same + self.foreign

    @property
    def non_parents(self) -> list[BEState]:
        return self.children + self.same + self.foreign


Aux = Callable[[BEState, Neighborhood], bool]


def no_aux(be: BEState, nb: Neighborhood) -> bool:
    return True


def sync_aux_broadcast(be: BEState, nb: Neighborhood) -> bool:
    """Hold Broadcast while some non-child neighbor is still busy one iteration back.

    A neighbor that already finished the previous echo does not block: it may
    be waiting for its own parents, which in turn may be held by this node's
    ball, and blocking on it can close a wait cycle across two balls.
    """
    if be.it == 0:
        return True
    prev = be.it - 1
    return not any(u.it == prev and u.stage != Stage.DONE for u in nb.non_children)


def sync_aux_echo(be: BEState, nb: Neighborhood) -> bool:
    """Hold Echo while some non-parent neighbor is still one iteration back."""
    if be.it == 0:
        return True
    return not any(u.it == be.it - 1 for u in nb.non_parents)


def _all_sending(group: list[BEState], it: int, stage: Stage) -> bool:
    return all(u.it == it and u.stage == stage for u in group)


def _any_sending(group: list[BEState], it: int, stage: Stage) -> bool:
    return any(u.it == it and u.stage == stage for u in group)


def broadcast_step(
    be: BEState, nb: Neighborhood, is_root: bool, last_iteration: int, aux: Aux = no_aux
) -> BEState:
    """Broadcast half of one round.

    Roots become ready one round after they joined (iteration 0) or one round
    after their echo of the previous iteration stopped; non-roots become ready
    once every parent sends Broadcast of the next iteration. A sending node
    stops in the first later round in which all children send Broadcast and no
    parent does; a leaf turns echo ready in that very round.
    """
    it, stage = be
    if stage == Stage.WAIT:
        if is_root or (nb.parents and _all_sending(nb.parents, 0, Stage.BCAST)):
            be = BEState(0, Stage.BREADY)
    elif stage == Stage.DONE and it < last_iteration:
        if is_root or (nb.parents and _all_sending(nb.parents, it + 1, Stage.BCAST)):
            be = BEState(it + 1, Stage.BREADY)
    elif stage == Stage.BCAST:
        if _all_sending(nb.children, it, Stage.BCAST) and not _any_sending(nb.parents, it, Stage.BCAST):
            return BEState(it, Stage.EREADY if not nb.children else Stage.BDONE)
        return be
    if be.stage == Stage.BREADY and aux(be, nb):
        be = BEState(be.it, Stage.BCAST)
    return be


def echo_step(be: BEState, nb: Neighborhood, aux: Aux = no_aux) -> BEState:
    """Echo half of one round (mirror image of :func:`broadcast_step`).

    Must run after :func:`broadcast_step` of the same round: a node reaching
    ``ECHO`` here cannot also stop in the same round.
    """
    it, stage = be
    if stage == Stage.ECHO:
        if _all_sending(nb.parents, it, Stage.ECHO) and not _any_sending(nb.children, it, Stage.ECHO):
            return BEState(it, Stage.DONE)
        return be
    if stage == Stage.BDONE and nb.children and _all_sending(nb.children, it, Stage.ECHO):
        be = BEState(it, Stage.EREADY)
    if be.stage == Stage.EREADY and aux(be, nb):
        be = BEState(be.it, Stage.ECHO)
    return be


def growball_step(
    state: LevelState,
    growball_levels: Iterable[int],
    signaled: bool,
    m: int,
) -> tuple[LevelState, Optional[int], bool]:
    """One round of ball growing for a single node.

    ``state.parity`` must already hold the current round's parity. Returns the
    new level state, the GrowBall argument sent this round (or ``None``), and
    whether a signaled candidate withdrew because GrowBall reached it first.
    """
    levels = set(growball_levels)
    if state.level is not None:
        return state._replace(growball=False), None, False
    if signaled and not levels:
        lvl = state.parity
        return LevelState(lvl, True, state.parity, True), lvl, False
    if levels:
        lvl = select_level(levels, m)
        return LevelState(lvl, False, state.parity, True), lvl, signaled
    return state._replace(growball=False), None, False


# --------------------------------------------------------------------------
# stand-alone acknowledged ball growing + back-to-back B&E iterations


class BallNode(NamedTuple):
    lv: LevelState = LevelState()
    be: BEState = BEState()
    countdown: Optional[int] = None  # rounds left until a candidate's signal
    withdrawn: bool = False


BALL_SIGMA0 = BallNode(countdown=None, be=BEState(0, Stage.WAIT), withdrawn=True)


def ballcast_automaton(
    k: int, iterations: int = 0, iteration_sync: bool = True, max_delay: int = 8
) -> AutomatonSpec:
    """Acknowledged ball growing followed by ``iterations`` B&E iterations.

    Input per node: ``None`` for a non-candidate, or the signal delay ``d``
    (0..max_delay) of a candidate signaled in round ``1 + d``. A node's output
    is ``"done"`` once it finished the last iteration's echo.
    """
    m = modulus(k)
    aux_b = sync_aux_broadcast if iteration_sync else no_aux
    aux_e = sync_aux_echo if iteration_sync else no_aux

    def initial_state(x: Any) -> BallNode:
        if x is None:
            return BallNode()
        if not 0 <= x <= max_delay:
            raise ValueError(f"signal delay {x} outside 0..{max_delay}")
        return BallNode(countdown=x)

    def transition(s: BallNode, view: frozenset, rng: CounterRNG):
        parity = 1 - s.lv.parity
        lv = s.lv._replace(parity=parity)
        gb_levels = [u.lv.level for u in view if u.lv.growball]
        countdown = s.countdown
        signaled = countdown == 0
        if countdown is not None and countdown > 0 and lv.level is None:
            countdown -= 1
        if lv.level is None:
            new_lv, _, withdrew = growball_step(lv, gb_levels, signaled, m)
            if new_lv.level is not None:
                countdown = None
            new = BallNode(new_lv, BEState(0, Stage.WAIT), countdown, s.withdrawn or withdrew)
            return new, new
        lv = lv._replace(growball=False)
        nb = Neighborhood.build(
            lv.level, ((u.lv.level, u.be) for u in view if u.lv.level is not None), m
        )
        be = broadcast_step(s.be, nb, lv.is_root, iterations, aux_b)
        be = echo_step(be, nb, aux_e)
        new = BallNode(lv, be, None, s.withdrawn)
        return new, new

    def output(s: BallNode) -> Any:
        if s.lv.level is not None and s.be.it == iterations and s.be.stage == Stage.DONE:
            return "done"
        return None

    levels = frozenset([None, *range(m)])
    domains = {
        "lv.level": levels,
        "lv.is_root": frozenset([False, True]),
        "lv.parity": frozenset([0, 1]),
        "lv.growball": frozenset([False, True]),
        "be.it": frozenset(range(iterations + 1)),
        "be.stage": frozenset(int(s) for s in Stage),
        "countdown": frozenset([None, *range(max_delay + 1)]),
        "withdrawn": frozenset([False, True]),
    }
    return AutomatonSpec(
        name="ballcast",
        initial_state=initial_state,
        transition=transition,
        initial_message=BALL_SIGMA0,
        output=output,
        domains=domains,
        params={"k": k, "iterations": iterations, "iteration_sync": iteration_sync},
    )
