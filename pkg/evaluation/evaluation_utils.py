from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from flow.config import SimConfig
from flow.engine import simulate
from game.errors import AmbiguityError, FictitiousPlayError
from game.game_core import random_state
from orbits.orbit_analysis import shapley_game
from transitions.transition_graph import Step, itinerary_steps


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)
    error: str = ""


def run_check(name: str, fn: Callable[[], Tuple[bool, dict]]) -> CheckResult:
    """Runs one invariant; library errors count as a failure of that invariant only."""
    try:
        passed, detail = fn()
    except FictitiousPlayError as e:
        return CheckResult(name, False, error=f"{type(e).__name__}: {e}")
    return CheckResult(name, bool(passed), detail)


def avg(lst):
    return sum(lst) / len(lst) if lst else 0.0


def simulate_itineraries(beta: float, count: int, events: int, rng: np.random.Generator,
                         config: Optional[SimConfig] = None) -> Tuple[List[List[Step]], int]:
    """Itineraries of random interior starts; starts that run into an ambiguous line are counted and dropped."""
    game = shapley_game(beta)
    config = config or SimConfig(max_events=events)
    itineraries, ambiguous = [], 0
    for _ in range(count):
        try:
            trajectory = simulate(game, random_state(3, rng), config)
        except AmbiguityError:
            ambiguous += 1
            continue
        itineraries.append(itinerary_steps(trajectory))
    return itineraries, ambiguous
