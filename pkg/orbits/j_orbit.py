import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from flow.config import SimConfig
from flow.engine import j_flow_step
from game.errors import ExistenceError, InvariantError, ParameterError
from game.game_core import SIGMA, StateV
from orbits.orbit_analysis import OrbitKind, PeriodicOrbitSpec, equilibrium_state

logger = logging.getLogger(__name__)

J_CLOSURE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class JOrbitReport:
    orbit: PeriodicOrbitSpec
    X: float
    ratios: Tuple[float, float]
    measured_ratios: Tuple[float, float]
    endpoints: List[StateV]


def _check_beta(beta: float) -> None:
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"the map on J is defined for beta in (0, 1], got {beta}")


def j_map_F(beta: float, X: float) -> float:
    """Gap between A's tied pair and its third utility after two legs on J, starting from gap X."""
    _check_beta(beta)
    if X < 0:
        raise ParameterError(f"X must be non-negative, got {X}")
    b = beta
    shape = 1 - b + b ** 2
    return X * (1 + b) * (1 + 2 * b) * shape / ((2 - b) * (3 * (1 + b) ** 2 * X + (2 + b) * shape))


def j_map_derivative0(beta: float) -> float:
    _check_beta(beta)
    return (2 * beta ** 2 + 3 * beta + 1) / (4 - beta ** 2)


def j_fixed_point(beta: float) -> float:
    _check_beta(beta)
    if beta <= SIGMA:
        return 0.0
    b = beta
    return (1 + b ** 2 - b) * (b ** 2 + b - 1) / ((2 - b) * (1 + b) ** 2)


def j_section_state(beta: float, X: float) -> StateV:
    """B indifferent between all three strategies, A indifferent between 2 and 3 with gap X above strategy 1."""
    n1 = (1 + beta - 2 * X) / 3
    return StateV(np.array([n1, n1 + X, n1 + X]), np.full(3, (1 - beta) / 3))


def j_gap(state: StateV) -> float:
    return float(np.max(state.vA) - np.min(state.vA))


def j_map_simulated(beta: float, X: float, config: Optional[SimConfig] = None) -> float:
    """F(X) measured by following the flow on J for two legs."""
    state = j_section_state(beta, X)
    for _ in range(2):
        state = j_flow_step(beta, state, config).end
    return j_gap(state)


def diameter_ratios(beta: float) -> Tuple[float, float]:
    b = beta
    return (b ** 2 + b - 1) / (2 * b + 1), (b ** 2 + b - 1) / (1 + b) ** 2


def measured_ratios(beta: float, n1: float) -> Tuple[float, float]:
    b = beta
    centre = (1 + b) / 3
    return ((centre - n1) / ((1 + b ** 2) / (1 + b) - n1),
            (centre - n1) / (centre - (b - b ** 2) / (2 - b)))


def j_orbit(beta: float, config: Optional[SimConfig] = None) -> JOrbitReport:
    """The periodic orbit on J born at beta = sigma, followed leg by leg from its fixed gap X*."""
    if beta > 1.0:
        raise ParameterError(f"beta={beta} outside (-1, 1]")
    if beta <= SIGMA:
        raise ExistenceError(f"orbit on J degenerates to the interior equilibrium for beta={beta} <= sigma")
    X = j_fixed_point(beta)
    start = j_section_state(beta, X)
    path = []
    state = start
    for _ in range(6):
        segment = j_flow_step(beta, state, config)
        path.append(segment)
        state = segment.end
    residual = state.distance(start)
    if residual > J_CLOSURE_TOL:
        raise InvariantError(f"orbit on J at beta={beta} does not close after six legs: residual {residual:.3e}")
    orbit = PeriodicOrbitSpec(OrbitKind.J, beta, start.vA, start.vB,
                              (path[0].duration_s, path[1].duration_s), path,
                              diameter=start.distance(equilibrium_state(beta)), root=X, closure_residual=residual)
    n1 = float(start.vA[0])
    report = JOrbitReport(orbit, X, diameter_ratios(beta), measured_ratios(beta, n1),
                          [segment.end for segment in path])
    logger.info(f"orbit on J at beta={beta}: X*={X:.12g}, ratios {report.ratios}")
    return report
