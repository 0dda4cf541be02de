import logging
from dataclasses import dataclass
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np

from game.errors import ClassificationError, ParameterError
from game.game_core import TIE_TOL, BimatrixGame, StateV, best_response_set

logger = logging.getLogger(__name__)


class RegionLabel(NamedTuple):
    """Open region S_ij: A strictly prefers i, B strictly prefers j."""
    i: int
    j: int

    def __str__(self):
        return f"{self.i},{self.j}"


@dataclass(frozen=True)
class TieReport:
    tiesA: Tuple[int, ...]
    tiesB: Tuple[int, ...]
    n: int = 3

    @property
    def at_equilibrium(self) -> bool:
        return len(self.tiesA) == self.n and len(self.tiesB) == self.n

    @property
    def in_z_star(self) -> bool:
        return len(self.tiesA) > 1 and len(self.tiesB) > 1

    def describe(self) -> str:
        parts = []
        for player, ties in (("A", self.tiesA), ("B", self.tiesB)):
            if len(ties) > 1:
                parts.append(f"player {player} ties {{{','.join(map(str, ties))}}}")
            else:
                parts.append(f"{player} strict {ties[0]}")
        return ", ".join(parts)


class Codim2Case(str, Enum):
    CROSSING = "Crossing"
    SPIRAL = "SpiralStable"
    SADDLE = "Saddle"


@dataclass(frozen=True)
class JLeg:
    """One product piece Z^B_{pairB} x Z^A_{pairA} of Z*, either on J (spiral) or on T (crossing)."""
    kind: str
    index: int
    pairB: Tuple[int, int]
    pairA: Tuple[int, int]

    @property
    def name(self) -> str:
        return f"{self.kind} leg {self.index} (B{self.pairB[0]}{self.pairB[1]},A{self.pairA[0]}{self.pairA[1]})"

    def matches(self, pairA, pairB) -> bool:
        return set(pairA) == set(self.pairA) and set(pairB) == set(self.pairB)


# cyclic visiting order of the continuous extension on J
J_LEGS = (
    JLeg("J", 1, (1, 2), (3, 1)),
    JLeg("J", 2, (1, 2), (1, 2)),
    JLeg("J", 3, (2, 3), (1, 2)),
    JLeg("J", 4, (2, 3), (2, 3)),
    JLeg("J", 5, (3, 1), (2, 3)),
    JLeg("J", 6, (3, 1), (3, 1)),
)
T_LEGS = (
    JLeg("T", 1, (1, 2), (2, 3)),
    JLeg("T", 2, (2, 3), (3, 1)),
    JLeg("T", 3, (3, 1), (1, 2)),
)


def leg_for_pairs(pairA, pairB) -> Optional[JLeg]:
    for leg in J_LEGS + T_LEGS:
        if leg.matches(pairA, pairB):
            return leg
    return None


@dataclass(frozen=True)
class IndifferenceLocus:
    """Anchor point of an indifference line: the line Z^{player}_{pair}, drawn in the opponent's simplex."""
    name: str
    player: str
    pair: Tuple[int, int]
    simplex: str
    point: Tuple[float, ...]


@dataclass(frozen=True, eq=False)
class RestrictedGame2x2:
    """
    The 2x2 game seen near a codimension-two point.
    Rows are A's tied pair, columns are B's tied pair, in both matrices.
    """
    Asub: np.ndarray
    Bsub: np.ndarray
    indexA: Tuple[int, int]
    indexB: Tuple[int, int]

    def preference_differences(self) -> Tuple[np.ndarray, np.ndarray]:
        """dA[c]: A's gain of its first row over its second against column c; dB[r] likewise for B."""
        dA = self.Asub[0, :] - self.Asub[1, :]
        dB = self.Bsub[:, 0] - self.Bsub[:, 1]
        return dA, dB


def region_of(state: StateV, tol: float = TIE_TOL) -> Union[RegionLabel, TieReport]:
    brA = best_response_set(state.vA, tol, "A")
    brB = best_response_set(state.vB, tol, "B")
    if brA.is_strict and brB.is_strict:
        return RegionLabel(brA.best, brB.best)
    return TieReport(brA.indices, brB.indices, n=len(state.vA))


def _cyclic(point: np.ndarray, shift: int) -> Tuple[float, ...]:
    return tuple(float(x) for x in np.roll(point, shift))


def _cyclic_pair(pair: Tuple[int, int], shift: int) -> Tuple[int, int]:
    return tuple((k - 1 + shift) % 3 + 1 for k in pair)


def indifference_anchors(beta: float) -> List[IndifferenceLocus]:
    """
    Endpoints of the indifference lines of the Shapley family.

    The R points are where Z^A_{i,j} (in Sigma_B) and Z^B_{k,l} (in Sigma_A) meet
    the boundary of the simplex; the Q points are the Q^A_{12}, Q^B_{13} anchors
    and their cyclic images.
    """
    if not -1.0 < beta <= 1.0:
        raise ParameterError(f"beta={beta} outside (-1, 1]")
    denominators = {"2-beta": 2.0 - beta, "2+beta": 2.0 + beta, "1+2beta": 1.0 + 2.0 * beta, "1+beta": 1.0 + beta}
    for label, value in denominators.items():
        if abs(value) < 1e-14:
            raise ParameterError(f"anchor denominator {label} vanishes at beta={beta}")

    seeds = [
        ("R^B", "A", (1, 2), "B", np.array([1.0, 1.0 - beta, 0.0]) / (2.0 - beta)),
        ("R^A", "B", (2, 3), "A", np.array([1.0 + beta, 1.0, 0.0]) / (2.0 + beta)),
        ("Q^A", "B", (1, 2), "A", np.array([beta, 1.0 + beta, 0.0]) / (1.0 + 2.0 * beta)),
        ("Q^B", "A", (1, 3), "B", np.array([beta, 1.0, 0.0]) / (1.0 + beta)),
    ]
    anchors = []
    for prefix, player, pair, simplex, point in seeds:
        for shift in range(3):
            moved = tuple(sorted(_cyclic_pair(pair, shift)))
            anchors.append(IndifferenceLocus(
                name=f"{prefix}_{moved[0]}{moved[1]}",
                player=player,
                pair=moved,
                simplex=simplex,
                point=_cyclic(point, shift),
            ))
    return anchors


def _check_pair(pair, n: int, label: str) -> Tuple[int, int]:
    pair = tuple(int(k) for k in pair)
    if len(pair) != 2 or pair[0] == pair[1] or not all(1 <= k <= n for k in pair):
        raise ParameterError(f"invalid index pair {pair} for {label}")
    return pair


def restricted_game(game: BimatrixGame, pairA, pairB) -> RestrictedGame2x2:
    pairA = _check_pair(pairA, game.n, "player A")
    pairB = _check_pair(pairB, game.n, "player B")
    rows = [k - 1 for k in pairA]
    cols = [k - 1 for k in pairB]
    return RestrictedGame2x2(
        Asub=game.A[np.ix_(rows, cols)].copy(),
        Bsub=game.B[np.ix_(rows, cols)].copy(),
        indexA=pairA,
        indexB=pairB,
    )


def consistent_quadrants(rg: RestrictedGame2x2) -> List[Tuple[int, int]]:
    """Pure profiles (row, col) of the restricted game in which both players best-respond, 0-based."""
    dA, dB = rg.preference_differences()
    quadrants = []
    for r in (0, 1):
        for c in (0, 1):
            row_ok = (dA[c] > 0) == (r == 0)
            col_ok = (dB[r] > 0) == (c == 0)
            if row_ok and col_ok:
                quadrants.append((r, c))
    return quadrants


def classify_codim2(rg: RestrictedGame2x2) -> Codim2Case:
    dA, dB = rg.preference_differences()
    if np.any(np.abs(dA) < TIE_TOL) or np.any(np.abs(dB) < TIE_TOL):
        raise ClassificationError(
            f"non-generic restricted game for A pair {rg.indexA}, B pair {rg.indexB}: zero preference difference")
    sA = np.sign(dA)
    sB = np.sign(dB)
    if sA[0] == sA[1] or sB[0] == sB[1]:
        return Codim2Case.CROSSING
    if sA[0] * sB[0] < 0:
        return Codim2Case.SPIRAL
    return Codim2Case.SADDLE


def j_leg_of(state: StateV, tol: float = TIE_TOL) -> Optional[JLeg]:
    report = region_of(state, tol)
    if isinstance(report, RegionLabel) or report.at_equilibrium:
        return None
    if len(report.tiesA) != 2 or len(report.tiesB) != 2:
        return None
    return leg_for_pairs(report.tiesA, report.tiesB)
