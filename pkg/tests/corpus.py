"""Seeded run corpora shared by the acceptance and property tests."""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import lru_cache

from sasim.ballcast import ballcast_automaton
from sasim.harness import generate_graph, place_candidates
from sasim.model import Graph, Trace, run_synchronous

FAMILIES = ("path", "cycle", "grid", "gnp-connected")
SIZES = {
    "path": ("4", "6", "8", "12", "16", "32", "64", "128", "256"),
    "cycle": ("4", "5", "8", "12", "24", "64", "128", "256"),
    "grid": ("2x2", "3x3", "3x4", "4x4", "6x6", "8x8", "8x16", "16x16"),
    "gnp-connected": ("8", "12", "32", "64", "128", "256"),
}
BALL_ITERATIONS = 2


@dataclass(frozen=True)
class BallCase:
    index: int
    family: str
    size: str
    k: int
    seed: int
    self_loops: str


def ball_cases(count: int = 500, seed: int = 2024) -> list[BallCase]:
    rng = random.Random(seed)
    out = []
    for i in range(count):
        family = FAMILIES[i % len(FAMILIES)]
        size = rng.choice(SIZES[family])
        loops = "all" if rng.random() < 0.25 else "none"
        out.append(BallCase(i, family, size, rng.choice((2, 3, 4)), rng.randrange(1 << 30), loops))
    return out


def case_graph(case: BallCase) -> Graph:
    return generate_graph(case.family, case.size, case.self_loops, case.seed)


@lru_cache(maxsize=None)
def ball_spec(k: int):
    return ballcast_automaton(k, iterations=BALL_ITERATIONS)


def run_ball_case(case: BallCase) -> Trace:
    graph = case_graph(case)
    rng = random.Random(case.seed)
    roots = place_candidates(graph, rng.randint(1, case.k), "random", case.seed, case.k)
    inputs = [rng.randint(0, 3) if v in roots else None for v in range(graph.n)]
    return run_synchronous(graph, ball_spec(case.k), inputs, case.seed, 100_000)
