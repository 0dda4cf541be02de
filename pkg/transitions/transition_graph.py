import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from flow.config import SimConfig
from flow.engine import simulate
from game.errors import ClassificationError, FictitiousPlayError, ParameterError, SearchError
from game.game_core import StateP, make_shapley
from geometry.indifference import (J_LEGS, T_LEGS, Codim2Case, JLeg, RegionLabel, classify_codim2,
                                   consistent_quadrants, restricted_game)

logger = logging.getLogger(__name__)

Arc = Tuple[RegionLabel, RegionLabel]
Step = Union[RegionLabel, JLeg, None]


class Regime(str, Enum):
    NEGATIVE = "beta_negative"
    ZERO = "beta_zero"
    POSITIVE = "beta_positive"


class CornerType(str, Enum):
    SPIRAL = "spiral"
    TRANSVERSAL = "transversal"
    SADDLE = "saddle"
    DEGENERATE = "degenerate"


CORNER_OF_CASE = {
    Codim2Case.SPIRAL: CornerType.SPIRAL,
    Codim2Case.CROSSING: CornerType.TRANSVERSAL,
    Codim2Case.SADDLE: CornerType.SADDLE,
}


class NamedPattern(NamedTuple):
    name: str
    sequence: Tuple[RegionLabel, ...]


SHAPLEY = NamedPattern("Shapley", tuple(RegionLabel(i, j) for i, j in
                                        ((1, 2), (2, 2), (2, 3), (3, 3), (3, 1), (1, 1))))
ANTI_SHAPLEY = NamedPattern("AntiShapley", tuple(RegionLabel(i, j) for i, j in
                                                 ((1, 3), (1, 2), (3, 2), (3, 1), (2, 1), (2, 3))))
PATTERNS = {p.name: p for p in (SHAPLEY, ANTI_SHAPLEY)}


def region_number(label: RegionLabel) -> Optional[int]:
    """Position 1..6 of a region along Shapley's cycle, None for the three off-cycle regions."""
    try:
        return SHAPLEY.sequence.index(label) + 1
    except ValueError:
        return None


def regime_of(beta: float) -> Regime:
    if beta < 0:
        return Regime.NEGATIVE
    if beta == 0:
        return Regime.ZERO
    return Regime.POSITIVE


@dataclass(frozen=True)
class TransitionDiagram:
    """
    Allowed moves between the nine open regions (i, j). Ordinary arcs cross one indifference face;
    corner arcs pass through a transversal codimension-two corner. Ambiguous faces are those on
    which the moving player's two strategies gain at equal rates, so no crossing is defined.
    """
    regime: Regime
    beta: float
    arcs: FrozenSet[Arc]
    corner_arcs: FrozenSet[Arc] = frozenset()
    corner_types: Dict[str, CornerType] = field(default_factory=dict)
    ambiguous_faces: FrozenSet[Arc] = frozenset()

    @property
    def all_arcs(self) -> FrozenSet[Arc]:
        return self.arcs | self.corner_arcs

    def has_arc(self, source: RegionLabel, target: RegionLabel) -> bool:
        return (source, target) in self.all_arcs

    def graph(self) -> nx.DiGraph:
        G = nx.DiGraph(regime=self.regime.value, beta=self.beta)
        G.add_nodes_from(RegionLabel(i, j) for i in range(1, 4) for j in range(1, 4))
        G.add_edges_from(self.arcs, kind="face")
        G.add_edges_from(self.corner_arcs, kind="corner")
        return G

    def realizes(self, pattern: NamedPattern) -> bool:
        seq = pattern.sequence
        return all(self.has_arc(seq[k], seq[(k + 1) % len(seq)]) for k in range(len(seq)))

    def payload(self) -> dict:
        def fmt(arcs):
            return sorted([str(a), str(b)] for a, b in arcs)

        return {
            "regime": self.regime.value,
            "beta": self.beta,
            "arcs": fmt(self.all_arcs),
            "corner_arcs": fmt(self.corner_arcs),
            "ambiguous_faces": fmt(self.ambiguous_faces),
            "corner_types": {name: kind.value for name, kind in self.corner_types.items()},
        }


def _arcs(*pairs) -> FrozenSet[Arc]:
    return frozenset((RegionLabel(*a), RegionLabel(*b)) for a, b in pairs)


def _both_ways(arcs: FrozenSet[Arc]) -> FrozenSet[Arc]:
    return arcs | frozenset((b, a) for a, b in arcs)


# literal arc sets of the three regime diagrams
FACE_ARCS: Dict[Regime, FrozenSet[Arc]] = {
    Regime.NEGATIVE: _arcs(
        ((1, 2), (2, 2)), ((2, 2), (2, 3)), ((2, 3), (3, 3)), ((3, 3), (3, 1)), ((3, 1), (1, 1)), ((1, 1), (1, 2)),
        ((2, 1), (1, 1)), ((2, 1), (3, 1)), ((2, 1), (2, 2)), ((2, 1), (2, 3)),
        ((3, 2), (2, 2)), ((3, 2), (1, 2)), ((3, 2), (3, 3)), ((3, 2), (3, 1)),
        ((1, 3), (3, 3)), ((1, 3), (2, 3)), ((1, 3), (1, 1)), ((1, 3), (1, 2)),
    ),
    Regime.ZERO: _arcs(
        ((1, 2), (2, 2)), ((2, 2), (2, 3)), ((2, 3), (3, 3)), ((3, 3), (3, 1)), ((3, 1), (1, 1)), ((1, 1), (1, 2)),
        ((2, 1), (1, 1)), ((2, 1), (2, 3)),
        ((3, 2), (2, 2)), ((3, 2), (3, 1)),
        ((1, 3), (3, 3)), ((1, 3), (1, 2)),
    ),
    Regime.POSITIVE: _arcs(
        ((1, 2), (2, 2)), ((2, 2), (2, 3)), ((2, 3), (3, 3)), ((3, 3), (3, 1)), ((3, 1), (1, 1)), ((1, 1), (1, 2)),
        ((1, 3), (1, 2)), ((1, 2), (3, 2)), ((3, 2), (3, 1)), ((3, 1), (2, 1)), ((2, 1), (2, 3)), ((2, 3), (1, 3)),
        ((2, 1), (1, 1)), ((3, 2), (2, 2)), ((1, 3), (3, 3)),
        ((1, 1), (1, 3)), ((2, 2), (2, 1)), ((3, 3), (3, 2)),
    ),
}
# transversal T corners, entered from the quadrant opposite their exit
CORNER_ARCS: Dict[Regime, FrozenSet[Arc]] = {
    Regime.NEGATIVE: frozenset(),
    Regime.ZERO: frozenset(),
    Regime.POSITIVE: _arcs(((3, 2), (2, 1)), ((1, 3), (3, 2)), ((2, 1), (1, 3))),
}
# dashed faces: the mover's two strategies gain at the same rate
AMBIGUOUS_FACES: Dict[Regime, FrozenSet[Arc]] = {
    Regime.NEGATIVE: frozenset(),
    Regime.ZERO: _both_ways(_arcs(
        ((2, 1), (3, 1)), ((1, 2), (3, 2)), ((1, 3), (2, 3)),
        ((1, 1), (1, 3)), ((2, 1), (2, 2)), ((3, 2), (3, 3)),
    )),
    Regime.POSITIVE: frozenset(),
}
# at beta = 1 there is no exit in the horizontal direction out of these regions
DEGENERATE_EXITS = _arcs(((2, 1), (1, 1)), ((3, 2), (2, 2)), ((1, 3), (3, 3)))


def _face_arcs(A: np.ndarray, B: np.ndarray, tol: float) -> Tuple[set, set]:
    arcs, ambiguous = set(), set()
    for i in range(3):
        for j in range(3):
            here = RegionLabel(i + 1, j + 1)
            for k in range(3):
                if k == i:
                    continue
                # A moves from i to k while B plays j
                gain = A[k, j] - A[i, j]
                there = RegionLabel(k + 1, j + 1)
                if gain > tol:
                    arcs.add((here, there))
                elif abs(gain) <= tol:
                    ambiguous.add((here, there))
                # B moves from j to k while A plays i
                gain = B[i, k] - B[i, j]
                there = RegionLabel(i + 1, k + 1)
                if gain > tol:
                    arcs.add((here, there))
                elif abs(gain) <= tol:
                    ambiguous.add((here, there))
    return arcs, ambiguous


def _incoming_quadrants(rg) -> List[Tuple[int, int]]:
    """Quadrants from which both players' other tied strategy is gaining, so orbits run into the corner."""
    dA, dB = rg.preference_differences()
    quadrants = []
    for r in (0, 1):
        for c in (0, 1):
            favoured_row = 0 if dA[c] > 0 else 1
            favoured_col = 0 if dB[r] > 0 else 1
            if favoured_row != r and favoured_col != c:
                quadrants.append((r, c))
    return quadrants


def _corner_types(game) -> Dict[str, CornerType]:
    corner_types = {}
    for leg in J_LEGS + T_LEGS:
        try:
            case = classify_codim2(restricted_game(game, leg.pairA, leg.pairB))
        except ClassificationError:
            corner_types[leg.name] = CornerType.DEGENERATE
            continue
        corner_types[leg.name] = CORNER_OF_CASE[case]
    return corner_types


def derive_diagram(beta: float, tol: float = 1e-12) -> TransitionDiagram:
    """
    The diagram recomputed from the payoff signs: a face is crossed where the moving player's
    new strategy gains, a transversal corner adds the arc from its incoming quadrant.
    """
    if not -1.0 < beta <= 1.0:
        raise ParameterError(f"beta={beta} outside (-1, 1]")
    game = make_shapley(beta)
    arcs, ambiguous = _face_arcs(game.A, game.B, tol)
    corner_arcs = set()
    corner_types = _corner_types(game)
    for leg in J_LEGS + T_LEGS:
        if corner_types[leg.name] != CornerType.TRANSVERSAL:
            continue
        rg = restricted_game(game, leg.pairA, leg.pairB)
        r, c = consistent_quadrants(rg)[0]
        target = RegionLabel(rg.indexA[r], rg.indexB[c])
        for r_in, c_in in _incoming_quadrants(rg):
            source = RegionLabel(rg.indexA[r_in], rg.indexB[c_in])
            if (source, target) not in arcs:
                corner_arcs.add((source, target))
    return TransitionDiagram(regime_of(beta), beta, frozenset(arcs), frozenset(corner_arcs), corner_types,
                             frozenset(ambiguous))


def diagram_for(beta: float) -> TransitionDiagram:
    """The transcribed diagram of beta's regime; beta = 1 loses the degenerate exits."""
    if not -1.0 < beta <= 1.0:
        raise ParameterError(f"beta={beta} outside (-1, 1]")
    regime = regime_of(beta)
    arcs, corner_arcs, ambiguous = FACE_ARCS[regime], CORNER_ARCS[regime], AMBIGUOUS_FACES[regime]
    if beta == 1.0:
        arcs = arcs - DEGENERATE_EXITS
        corner_arcs = frozenset()
        ambiguous = _both_ways(DEGENERATE_EXITS)
    diagram = TransitionDiagram(regime, beta, arcs, corner_arcs, _corner_types(make_shapley(beta)), ambiguous)
    logger.debug(f"diagram at beta={beta}: {len(arcs)} face arcs, {len(corner_arcs)} corner arcs, "
                 f"{len(ambiguous)} ambiguous faces")
    return diagram


class ValidationResult(NamedTuple):
    ok: bool
    index: Optional[int] = None
    reason: str = ""


def itinerary_steps(trajectory) -> List[Step]:
    """Region of every pure segment of a trajectory, the J leg for segments on J."""
    return [seg.region if seg.region is not None else seg.leg for seg in trajectory.segments]


def _touches(region: RegionLabel, leg: JLeg) -> bool:
    return region.i in leg.pairA and region.j in leg.pairB


def validate_itinerary(itinerary: Sequence[Step], diagram: TransitionDiagram) -> ValidationResult:
    """
    Every move between consecutive regions must be an arc of the diagram. A stretch on J must be
    entered from, and left into, regions adjacent to the legs it starts and ends on.
    """
    previous: Optional[RegionLabel] = None
    previous_index = None
    entry_leg: Optional[JLeg] = None
    last_leg: Optional[JLeg] = None
    for index, step in enumerate(itinerary):
        if isinstance(step, JLeg):
            if entry_leg is None:
                entry_leg = step
                if previous is not None and not _touches(previous, step):
                    return ValidationResult(False, index, f"{previous} is not adjacent to {step.name}")
            last_leg = step
            continue
        if step is None:
            # J stretch of unknown leg
            previous = None
            continue
        if entry_leg is not None:
            if not _touches(step, last_leg):
                return ValidationResult(False, index, f"{step} is not adjacent to {last_leg.name}")
            entry_leg = last_leg = None
        elif previous is not None and step != previous and not diagram.has_arc(previous, step):
            return ValidationResult(False, index, f"no arc {previous} -> {step} (after step {previous_index})")
        previous, previous_index = step, index
    return ValidationResult(True)


def pattern_match(itinerary: Sequence[Step], pattern: NamedPattern, min_repeats: int = 3) -> bool:
    """True iff the itinerary ends with the pattern repeated at least min_repeats times, up to a cyclic shift."""
    period = len(pattern.sequence)
    window = period * min_repeats
    if min_repeats < 1 or len(itinerary) < window:
        return False
    tail = list(itinerary[-window:])
    for shift in range(period):
        if all(tail[k] == pattern.sequence[(shift + k) % period] for k in range(window)):
            return True
    return False


def witness_coverage(diagram: TransitionDiagram, itineraries: Iterable[Sequence[Step]]) -> Tuple[set, set]:
    """Arcs seen in simulated itineraries, and arcs of the diagram never seen."""
    seen = set()
    for itinerary in itineraries:
        for a, b in zip(itinerary, itinerary[1:]):
            if isinstance(a, RegionLabel) and isinstance(b, RegionLabel) and a != b and diagram.has_arc(a, b):
                seen.add((a, b))
    return seen, set(diagram.all_arcs) - seen


WITNESS_STEP = 1e-5


def _tie_segment(M: np.ndarray, pair: Tuple[int, int]) -> Tuple[np.ndarray, np.ndarray]:
    """End points of the line (M p)_a = (M p)_b across the simplex."""
    D = M[pair[0]] - M[pair[1]]
    n = D.size
    ends = [np.eye(n)[u] for u in range(n) if abs(D[u]) < 1e-15]
    for u in range(n):
        for w in range(u + 1, n):
            if D[u] * D[w] < 0:
                t = D[w] / (D[w] - D[u])
                ends.append(t * np.eye(n)[u] + (1.0 - t) * np.eye(n)[w])
    if len(ends) < 2:
        raise SearchError(f"indifference line of {pair} misses the simplex")
    return ends[0], ends[1]


def _witness_point(M: np.ndarray, keep: Tuple[int, ...], need: int, margin: float = 1e-3) -> np.ndarray:
    """
    A simplex point whose utilities M p put exactly the strategies `keep` on top, by at least
    `margin` over the rest, with enough weight on strategy `need` to step back from it.
    """
    n = M.shape[0]
    rest = [k for k in range(n) if k not in keep]
    if len(keep) == 2:
        P1, P2 = _tie_segment(M, keep)
        for t in np.linspace(0.02, 0.98, 97):
            p = (1.0 - t) * P1 + t * P2
            u = M @ p
            if p[need] >= 2 * WITNESS_STEP and min(u[list(keep)]) > max(u[rest]) + margin:
                return p
        raise SearchError(f"no point of the indifference line of {keep} keeps them on top")
    grid = [np.array([a, b, 20 - a - b]) / 20.0 for a in range(21) for b in range(21 - a)]
    best, best_margin = None, margin
    for p in grid:
        if p[need] < 0.05:
            continue
        u = M @ p
        gap = u[keep[0]] - max(u[rest])
        if gap > best_margin:
            best, best_margin = p, gap
    if best is None:
        raise SearchError(f"strategy {keep[0] + 1} is never strictly preferred")
    return best


def _step_back(p: np.ndarray, toward: int, a: float) -> np.ndarray:
    # inverse of p -> (1 - a) p + a e_toward
    e = np.zeros_like(p)
    e[toward] = 1.0
    return (p - a * e) / (1.0 - a)


def witness_arc(beta: float, arc: Arc, config: Optional[SimConfig] = None) -> bool:
    """
    Simulates a start placed just before the face (or corner) of `arc` and reports whether the
    flow leaves the source region straight into the target region.
    """
    source, target = arc
    game = make_shapley(beta)
    keepA = tuple(sorted({source.i - 1, target.i - 1}))
    keepB = tuple(sorted({source.j - 1, target.j - 1}))
    try:
        pB = _witness_point(game.A, keepA, source.j - 1)
        pA = _witness_point(game.B.T, keepB, source.i - 1)
        init = StateP.from_arrays(_step_back(pA, source.i - 1, WITNESS_STEP),
                                  _step_back(pB, source.j - 1, WITNESS_STEP))
        trajectory = simulate(game, init, config or SimConfig(max_events=2))
    except FictitiousPlayError as e:
        logger.debug(f"no witness for {source}->{target} at beta={beta}: {e}")
        return False
    return itinerary_steps(trajectory)[:2] == [source, target]


def witnessed_arcs(diagram: TransitionDiagram) -> Tuple[set, set]:
    """Arcs of the diagram confirmed by a constructed simulation, and arcs that were not."""
    seen = {arc for arc in diagram.all_arcs if witness_arc(diagram.beta, arc)}
    return seen, set(diagram.all_arcs) - seen
