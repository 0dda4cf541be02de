import json
import logging
import math
from dataclasses import dataclass
from typing import List, Literal, NamedTuple, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from game.errors import DomainError, ParameterError, StructuralError

logger = logging.getLogger(__name__)

# golden mean: zero-sum equivalence and degeneration of both symmetric orbits
SIGMA = (math.sqrt(5.0) - 1.0) / 2.0

TIE_TOL = 1e-9
SIMPLEX_TOL = 1e-12
SUM_TOL = 1e-10
NONSINGULAR_TOL = 1e-12


def _readonly(values) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


def is_nonsingular(matrix: np.ndarray, tol: float = NONSINGULAR_TOL) -> bool:
    """Scale-aware check |det M| > tol * (max |m_ij|)^n."""
    scale = float(np.max(np.abs(matrix)))
    if scale == 0.0:
        return False
    return abs(float(np.linalg.det(matrix))) > tol * scale ** matrix.shape[0]


@dataclass(frozen=True, eq=False)
class BimatrixGame:
    """
    Two-player game with n pure strategies each.
    A holds the row player's payoffs, B the column player's payoffs.
    Strategy labels are 1-based in every public accessor.
    """
    A: np.ndarray
    B: np.ndarray
    beta: Optional[float] = None
    allow_singular: bool = False

    def __post_init__(self):
        A = _readonly(self.A)
        B = _readonly(self.B)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
            raise StructuralError(f"payoff matrices must be square and of equal shape, got {A.shape} and {B.shape}")
        if A.shape[0] < 2:
            raise StructuralError("a game needs at least two strategies per player")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if not self.allow_singular:
            for name, matrix in (("A", A), ("B", B)):
                if not is_nonsingular(matrix):
                    raise StructuralError(f"payoff matrix {name} is singular")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def column_of_A(self, j: int) -> np.ndarray:
        """Utility target A_j of player A when player B plays j."""
        return self.A[:, j - 1]

    def row_of_B(self, i: int) -> np.ndarray:
        """Utility target B_i of player B when player A plays i."""
        return self.B[i - 1, :]

    def utility_sums(self) -> Optional[Tuple[float, float]]:
        """Constant sums of v^A and v^B when column sums of A and row sums of B are constant."""
        col_sums = self.A.sum(axis=0)
        row_sums = self.B.sum(axis=1)
        if np.ptp(col_sums) > SUM_TOL or np.ptp(row_sums) > SUM_TOL:
            return None
        return float(col_sums[0]), float(row_sums[0])


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    components: np.ndarray

    def __post_init__(self):
        p = np.array(self.components, dtype=float).ravel()
        if p.size == 0:
            raise StructuralError("empty probability vector")
        if np.any(p < -SIMPLEX_TOL) or abs(p.sum() - 1.0) > SUM_TOL:
            raise DomainError(f"not a probability vector: {p.tolist()}", solution=p)
        p = np.clip(p, 0.0, None)
        object.__setattr__(self, "components", _readonly(p / p.sum()))

    @classmethod
    def pure(cls, n: int, i: int) -> "SimplexPoint":
        p = np.zeros(n)
        p[i - 1] = 1.0
        return cls(p)

    @classmethod
    def barycenter(cls, n: int) -> "SimplexPoint":
        return cls(np.full(n, 1.0 / n))

    def __len__(self):
        return self.components.size

    def __getitem__(self, index):
        return self.components[index]


@dataclass(frozen=True, eq=False)
class StateP:
    pA: SimplexPoint
    pB: SimplexPoint

    @classmethod
    def from_arrays(cls, pA, pB) -> "StateP":
        return cls(SimplexPoint(pA), SimplexPoint(pB))


@dataclass(frozen=True, eq=False)
class StateV:
    vA: np.ndarray
    vB: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vA", _readonly(self.vA))
        object.__setattr__(self, "vB", _readonly(self.vB))

    def distance(self, other: "StateV") -> float:
        """Max-norm distance between two utility states."""
        return float(max(np.max(np.abs(self.vA - other.vA)), np.max(np.abs(self.vB - other.vB))))

    def rolled(self, shift: int) -> "StateV":
        """Cyclic relabelling of strategies, applied to both players."""
        return StateV(np.roll(self.vA, shift), np.roll(self.vB, shift))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.vA, self.vB])


@dataclass(frozen=True)
class BestResponseSet:
    player: Literal["A", "B"]
    indices: Tuple[int, ...]
    margin: float

    @property
    def is_strict(self) -> bool:
        return len(self.indices) == 1

    @property
    def best(self) -> int:
        return self.indices[0]


class Violation(NamedTuple):
    matrix: str
    line: int
    pair: Tuple[int, int]


def make_shapley(beta: float) -> BimatrixGame:
    """
    Shapley's one-parameter family of 3x3 games.

    Args:
        beta: parameter in (-1, 1].

    Returns:
        the game with A = [[1,0,b],[b,1,0],[0,b,1]] and B = [[-b,1,0],[0,-b,1],[1,0,-b]].
    """
    if not math.isfinite(beta) or not -1.0 < beta <= 1.0:
        raise ParameterError(f"beta={beta} outside the Shapley family range (-1, 1]")
    b = float(beta)
    A = [[1.0, 0.0, b], [b, 1.0, 0.0], [0.0, b, 1.0]]
    B = [[-b, 1.0, 0.0], [0.0, -b, 1.0], [1.0, 0.0, -b]]
    singular = not (is_nonsingular(np.array(A)) and is_nonsingular(np.array(B)))
    if singular:
        logger.warning(f"Shapley game at beta={b} has a singular payoff matrix; bordered solves are used")
    return BimatrixGame(A=A, B=B, beta=b, allow_singular=singular)


def utilities(game: BimatrixGame, state: StateP) -> StateV:
    """v^A = A p^B and v^B = p^A B."""
    if len(state.pA) != game.n or len(state.pB) != game.n:
        raise StructuralError(f"state of dimension ({len(state.pA)}, {len(state.pB)}) for a game with n={game.n}")
    return StateV(game.A @ state.pB.components, state.pA.components @ game.B)


def best_response_set(v, tol: float = TIE_TOL, player: Literal["A", "B"] = "A") -> BestResponseSet:
    v = np.asarray(v, dtype=float)
    top = float(np.max(v))
    indices = tuple(int(i) + 1 for i in np.flatnonzero(v >= top - tol))
    if len(indices) > 1:
        return BestResponseSet(player=player, indices=indices, margin=0.0)
    ordered = np.sort(v)
    return BestResponseSet(player=player, indices=indices, margin=float(ordered[-1] - ordered[-2]))


def _equal_utility_point(M: np.ndarray, label: str) -> np.ndarray:
    # solves M x = c * 1 with sum(x) = 1
    n = M.shape[0]
    if is_nonsingular(M):
        raw = np.linalg.solve(M, np.ones(n))
        if abs(raw.sum()) < NONSINGULAR_TOL:
            raise DomainError(f"no normalizable equal-utility point for {label}", solution=raw)
        x = raw / raw.sum()
    else:
        bordered = np.zeros((n + 1, n + 1))
        bordered[:n, :n] = M
        bordered[:n, n] = -1.0
        bordered[n, :n] = 1.0
        rhs = np.zeros(n + 1)
        rhs[n] = 1.0
        sol, *_ = np.linalg.lstsq(bordered, rhs, rcond=None)
        raw = sol[:n]
        if np.linalg.norm(bordered @ sol - rhs) > 1e-9:
            raise DomainError(f"{label} has no point with equal utilities", solution=raw)
        x = raw
    if np.any(x <= 0.0):
        raise DomainError(f"equal-utility point of {label} lies outside the open simplex: {x.tolist()}", solution=raw)
    return x


def interior_equilibrium(game: BimatrixGame) -> StateP:
    """
    The interior point E where both players are indifferent between all strategies.
    Raises DomainError (carrying the unnormalized solution) if it does not exist.
    """
    eB = _equal_utility_point(game.A, "player A's payoff matrix")
    eA = _equal_utility_point(game.B.T, "player B's payoff matrix")
    return StateP.from_arrays(eA, eB)


def check_transversality(game: BimatrixGame, tol: float = SIMPLEX_TOL) -> Tuple[bool, List[Violation]]:
    """
    Sufficient condition for transversality: pairwise distinct entries within
    every column of A and within every row of B.
    """
    violations = []
    n = game.n
    for matrix_name, lines in (("A", game.A.T), ("B", game.B)):
        for line_index, line in enumerate(lines, start=1):
            for a in range(n):
                for b in range(a + 1, n):
                    if abs(line[a] - line[b]) <= tol:
                        violations.append(Violation(matrix_name, line_index, (a + 1, b + 1)))
    return not violations, violations


def zero_sum_certificate(beta: float) -> float:
    """Max-norm residual of A + sigma (B - 1); zero exactly when the game is zero-sum equivalent."""
    game = make_shapley(beta)
    ones = np.ones_like(game.B)
    return float(np.max(np.abs(game.A + SIGMA * (game.B - ones))))


def random_state(n: int, rng: np.random.Generator) -> StateP:
    """Uniform sample on the product simplex via normalized exponential variates."""
    pA = rng.exponential(size=n)
    pB = rng.exponential(size=n)
    return StateP.from_arrays(pA / pA.sum(), pB / pB.sum())


class GameSpec(BaseModel):
    """Game specification as read from JSON."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    family: Optional[Literal["shapley"]] = None
    beta: Optional[float] = None
    A: Optional[List[List[float]]] = None
    B: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _one_form(self):
        family_form = self.family is not None or self.beta is not None
        matrix_form = self.A is not None or self.B is not None
        if family_form == matrix_form:
            raise ValueError('use either {"family":"shapley","beta":x} or {"A":[[...]],"B":[[...]]}')
        if family_form and (self.family is None or self.beta is None):
            raise ValueError('the family form needs both "family" and "beta"')
        if matrix_form and (self.A is None or self.B is None):
            raise ValueError('the matrix form needs both "A" and "B"')
        return self

    def build(self) -> BimatrixGame:
        if self.family == "shapley":
            return make_shapley(self.beta)
        return BimatrixGame(A=self.A, B=self.B)


def load_game(source: Union[str, dict]) -> BimatrixGame:
    """Builds a game from a JSON file path, a JSON string or an already parsed dict."""
    if isinstance(source, dict):
        payload = source
    elif source.lstrip().startswith("{"):
        payload = json.loads(source)
    else:
        with open(source, "r", encoding="utf-8") as f:
            payload = json.load(f)
    try:
        spec = GameSpec.model_validate(payload)
    except ValueError as err:
        raise ParameterError(f"invalid game spec: {err}") from err
    return spec.build()
