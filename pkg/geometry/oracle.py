import logging
from collections import Counter

import numpy as np

from flow.config import SimConfig
from flow.engine import EventKind, FlowEngine, simulate
from game.errors import AmbiguityError, ClassificationError
from game.game_core import BimatrixGame, StateP, utilities
from geometry.indifference import Codim2Case, RestrictedGame2x2

logger = logging.getLogger(__name__)

GRID_OFFSET = 0.37
NEAR_CORNER = (1e-3, 1.0 - 1e-3)
CONDITIONING = 0.05


def _starts(size: int):
    grid = [(i + GRID_OFFSET) / size for i in range(size)]
    # a saddle basin can miss every grid point, never its own corner
    return [(x, y) for x in grid for y in grid] + [(x, y) for x in NEAR_CORNER for y in NEAR_CORNER]


def oracle_case(rg: RestrictedGame2x2, grid: int = 10, max_events: int = 200) -> Codim2Case:
    """
    Brute-force classification: run the 2x2 best-response flow of the restricted game
    from a grid of interior starts and look at where the orbits go.
    """
    game = BimatrixGame(rg.Asub, rg.Bsub, allow_singular=True)
    config = SimConfig(codim2_policy="abort", max_events=max_events)
    corners = Counter()
    contracting = 0
    runs = 0
    equilibrium = FlowEngine(game, config).equilibrium
    for x, y in _starts(grid):
        init = StateP.from_arrays([x, 1 - x], [y, 1 - y])
        try:
            trajectory = simulate(game, init, config)
        except AmbiguityError:
            continue
        runs += 1
        last = trajectory.segments[-1] if trajectory.segments else None
        stop = trajectory.stop_event
        if last is not None and last.is_pure and stop.kind == EventKind.TRUNCATED \
                and stop.note.startswith("targets reached"):
            corners[(last.labelA, last.labelB)] += 1
            continue
        if equilibrium is None:
            continue
        start = utilities(game, init)
        if trajectory.final_state.distance(equilibrium) <= 0.5 * start.distance(equilibrium):
            contracting += 1
    logger.debug(f"oracle on A{rg.indexA} B{rg.indexB}: corners {dict(corners)}, contracting {contracting}/{runs}")
    if len(corners) >= 2:
        return Codim2Case.SADDLE
    if len(corners) == 1 and sum(corners.values()) == runs:
        return Codim2Case.CROSSING
    if not corners and runs and contracting == runs:
        return Codim2Case.SPIRAL
    raise ClassificationError(f"oracle inconclusive for restricted game A{rg.indexA} B{rg.indexB}: "
                              f"corners {dict(corners)}, {contracting} of {runs} runs contracting")


def random_restricted_game(rng: np.random.Generator) -> RestrictedGame2x2:
    """Uniform 2x2 game whose preference differences all stay away from zero."""
    while True:
        Asub = rng.uniform(-1.0, 1.0, size=(2, 2))
        Bsub = rng.uniform(-1.0, 1.0, size=(2, 2))
        rg = RestrictedGame2x2(Asub, Bsub, (1, 2), (1, 2))
        dA, dB = rg.preference_differences()
        if np.all(np.abs(dA) > CONDITIONING) and np.all(np.abs(dB) > CONDITIONING):
            return rg
