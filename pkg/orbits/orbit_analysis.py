import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from flow.config import SimConfig
from flow.engine import FlowEngine, Segment
from game.errors import ExistenceError, InvariantError, ParameterError
from game.game_core import SIGMA, BimatrixGame, StateV, make_shapley
from orbits.cubics import anticlockwise_cubic, bracketed_root, clockwise_cubic, isolate_roots

logger = logging.getLogger(__name__)

CLOSURE_TOL = 1e-8
FORMULA_TOL = 1e-9


class OrbitKind(str, Enum):
    CLOCKWISE = "Clockwise"
    ANTICLOCKWISE = "Anticlockwise"
    J = "JOrbit"


# cyclic relabelling that maps the section onto the state reached after one third of the orbit
THIRD_SHIFT = {OrbitKind.CLOCKWISE: 1, OrbitKind.ANTICLOCKWISE: -1}


@dataclass(frozen=True, eq=False)
class PeriodicOrbitSpec:
    kind: OrbitKind
    beta: float
    section_n: np.ndarray
    section_m: np.ndarray
    durations: Tuple[float, float]
    full_path: List[Segment] = field(default_factory=list)
    diameter: float = 0.0
    root: Optional[float] = None
    closure_residual: float = 0.0

    @property
    def section_state(self) -> StateV:
        return StateV(self.section_n, self.section_m)

    @property
    def period_s(self) -> float:
        return float(sum(seg.duration_s for seg in self.full_path))


@lru_cache(maxsize=128)
def shapley_game(beta: float) -> BimatrixGame:
    """Cached Shapley game; the arrays are read-only so sharing is safe."""
    return make_shapley(beta)


def equilibrium_state(beta: float) -> StateV:
    return StateV(np.full(3, (1.0 + beta) / 3.0), np.full(3, (1.0 - beta) / 3.0))


def orbit_engine(beta: float) -> FlowEngine:
    return FlowEngine(shapley_game(beta), SimConfig(codim2_policy="abort"))


def one_third(engine: FlowEngine, section: StateV) -> Tuple[Segment, Segment]:
    """Two region crossings from a section state: one third of a symmetric orbit."""
    first = engine.step(section)
    second = engine.step(first.end)
    return first, second


def _trace(kind: OrbitKind, beta: float, section: StateV, t1: float, t2: float) -> Tuple[List[Segment], float]:
    engine = orbit_engine(beta)
    shift = THIRD_SHIFT[kind]
    path: List[Segment] = []
    state = section
    for third in range(3):
        first, second = one_third(engine, state)
        expected = state.rolled(shift)
        if second.end.distance(expected) > CLOSURE_TOL:
            raise InvariantError(f"{kind.value} orbit at beta={beta}: third {third + 1} does not return to the "
                                 f"relabelled section (distance {second.end.distance(expected):.3e})")
        if abs(first.duration_s - t1) > FORMULA_TOL or abs(second.duration_s - t2) > FORMULA_TOL:
            raise InvariantError(f"{kind.value} orbit at beta={beta}: simulated durations "
                                 f"({first.duration_s}, {second.duration_s}) differ from ({t1}, {t2})")
        path += [first, second]
        state = second.end
    residual = state.distance(section)
    if residual > CLOSURE_TOL:
        raise InvariantError(f"{kind.value} orbit at beta={beta} does not close: residual {residual:.3e}")
    return path, residual


def clockwise_section(beta: float, nu: float) -> Tuple[np.ndarray, np.ndarray]:
    b = beta
    n1 = nu
    n2 = -(-2 * b ** 2 - b ** 3 + 2 * nu * b ** 3 - 3 * nu * b - 2 * nu + 3 * nu ** 2
           + 3 * nu ** 2 * b ** 2 + 3 * nu ** 2 * b) / (1 + b + b ** 2)
    n3 = 1 + b - n1 - n2
    m12 = 1 - nu - nu * b
    m3 = -b + 2 * nu * b - 1 + 2 * nu
    return np.array([n1, n2, n3]), np.array([m12, m12, m3])


def clockwise_durations(n: np.ndarray, m: np.ndarray, beta: float) -> Tuple[float, float]:
    t1 = (n[0] - n[1]) / (n[0] - n[1] + 1.0)
    delta = (m[1] - m[2]) + (n[0] - n[1])
    t2 = delta / (delta + (1.0 + beta) * (1.0 + n[0] - n[1]))
    return float(t1), float(t2)


def clockwise_orbit(beta: float) -> PeriodicOrbitSpec:
    """
    Shapley's symmetric orbit: on the section B is indifferent between 1 and 2 and
    A strictly prefers 1; A then copies B while B plays one ahead.
    """
    if beta <= -1.0:
        raise ParameterError(f"beta={beta} outside (-1, 1]")
    if beta >= SIGMA:
        raise ExistenceError(f"clockwise orbit: this periodic orbit no longer exists for beta={beta} >= sigma")
    nu = bracketed_root(clockwise_cubic(beta), 0.0, 1.0)
    n, m = clockwise_section(beta, nu)
    if abs(n.sum() - (1 + beta)) > FORMULA_TOL or abs(m.sum() - (1 - beta)) > FORMULA_TOL:
        raise InvariantError(f"clockwise orbit at beta={beta}: section sums are off")
    if not (n[0] > n[1] and n[0] > n[2] and m[1] > m[2]):
        raise InvariantError(f"clockwise orbit at beta={beta}: section inequalities fail for n={n}, m={m}")
    if beta > 0 and (n[0] - n[2]) / (n[0] - n[2] + beta) <= (n[0] - n[1]) / (n[0] - n[1] + 1.0):
        raise InvariantError(f"clockwise orbit at beta={beta}: strategy 3 of A catches up first")
    t1, t2 = clockwise_durations(n, m, beta)
    section = StateV(n, m)
    path, residual = _trace(OrbitKind.CLOCKWISE, beta, section, t1, t2)
    spec = PeriodicOrbitSpec(OrbitKind.CLOCKWISE, beta, n, m, (t1, t2), path,
                             diameter=section.distance(equilibrium_state(beta)), root=nu, closure_residual=residual)
    logger.info(f"clockwise orbit at beta={beta}: nu={nu:.12g}, diameter={spec.diameter:.6g}")
    return spec


def anticlockwise_section(beta: float, mu: float) -> Tuple[np.ndarray, np.ndarray]:
    b = beta
    n1 = b - mu * b
    n2 = (2 * b ** 2 + 1 - 3 * mu * b ** 3 - 5 * mu * b ** 2 - 2 * mu * b - 2 * mu + 3 * mu ** 2 * b ** 2
          + 3 * mu ** 2 * b + 3 * mu ** 2 * b ** 3) / (b + 1 + b ** 2)
    n3 = 1 + b - n1 - n2
    return np.array([n1, n2, n3]), np.array([1 - b - 2 * mu, mu, mu])


def anticlockwise_inequalities(n: np.ndarray, m: np.ndarray, beta: float) -> bool:
    return bool(m[1] > m[0] and n[0] > n[1] and n[0] > n[2] and (n[0] - n[1]) * beta > n[0] - n[2])


def anticlockwise_durations(n: np.ndarray, m: np.ndarray, beta: float) -> Tuple[float, float]:
    t1 = (n[0] - n[2]) / (n[0] - n[2] + beta)
    delta = beta * (m[1] - m[0]) + (1.0 + beta) * (n[0] - n[2])
    t2 = delta / (delta + beta + n[0] - n[2])
    return float(t1), float(t2)


def anticlockwise_fixed_section(beta: float) -> Tuple[float, np.ndarray, np.ndarray]:
    """The root mu of the anticlockwise cubic whose section satisfies the strict inequalities, with (n, m)."""
    if beta > 1.0:
        raise ParameterError(f"beta={beta} outside (-1, 1]")
    if beta <= SIGMA:
        raise ExistenceError(f"anticlockwise orbit exists only for beta > sigma, got beta={beta}")
    roots = isolate_roots(anticlockwise_cubic(beta))
    admissible = []
    for mu in roots:
        n, m = anticlockwise_section(beta, mu)
        if anticlockwise_inequalities(n, m, beta):
            admissible.append((mu, n, m))
    if not admissible:
        raise ExistenceError(f"anticlockwise orbit at beta={beta}: no root of the cubic satisfies the section "
                             f"inequalities (roots {roots})")
    if len(admissible) > 1:
        raise InvariantError(f"anticlockwise orbit at beta={beta}: {len(admissible)} admissible roots")
    return admissible[0]


def anticlockwise_orbit(beta: float) -> PeriodicOrbitSpec:
    """
    The anti-Shapley orbit: on the section B is indifferent between 2 and 3 and
    A strictly prefers 1; both players then play one ahead of the other.
    """
    mu, n, m = anticlockwise_fixed_section(beta)
    t1, t2 = anticlockwise_durations(n, m, beta)
    section = StateV(n, m)
    path, residual = _trace(OrbitKind.ANTICLOCKWISE, beta, section, t1, t2)
    spec = PeriodicOrbitSpec(OrbitKind.ANTICLOCKWISE, beta, n, m, (t1, t2), path,
                             diameter=section.distance(equilibrium_state(beta)), root=mu, closure_residual=residual)
    logger.info(f"anticlockwise orbit at beta={beta}: mu={mu:.12g}, diameter={spec.diameter:.6g}")
    return spec


def orbit_for(kind: str, beta: float) -> PeriodicOrbitSpec:
    if kind == "clockwise":
        return clockwise_orbit(beta)
    elif kind == "anticlockwise":
        return anticlockwise_orbit(beta)
    raise ParameterError(f"Orbit kind {kind} not recognized.")


def orbit_payload(spec: PeriodicOrbitSpec) -> dict:
    return {
        "kind": spec.kind.value,
        "beta": spec.beta,
        "root": spec.root,
        "n": spec.section_n,
        "m": spec.section_m,
        "t1": spec.durations[0],
        "t2": spec.durations[1],
        "diameter": spec.diameter,
        "closure_residual": spec.closure_residual,
        "path": [{"A": seg.labelA, "B": seg.labelB, "duration_s": seg.duration_s} for seg in spec.full_path],
    }
