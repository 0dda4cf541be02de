import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from scipy.optimize import root_scalar

from game.errors import ExistenceError, InvariantError, ParameterError, SearchError
from game.game_core import SIGMA, StateV
from orbits.orbit_analysis import (THIRD_SHIFT, OrbitKind, PeriodicOrbitSpec, anticlockwise_fixed_section,
                                   anticlockwise_orbit, clockwise_orbit, one_third, orbit_engine)

logger = logging.getLogger(__name__)

UNIT_CIRCLE_TOL = 1e-9
CROSS_CHECK_TOL = 1e-8
JACOBIAN_STEP = 1e-6


class StabilityClass(str, Enum):
    ATTRACTING = "Attracting"
    SADDLE_TYPE = "SaddleType"
    NON_GENERIC = "NonGeneric"


@dataclass(frozen=True, eq=False)
class StabilityReport:
    """Linearization of the one-third return map in (eps1, eps2, eps3) coordinates."""
    beta: float
    kind: OrbitKind
    matrix: np.ndarray
    eigenvalues: np.ndarray
    classification: StabilityClass
    method: str
    closed_form: Optional[Tuple[complex, complex, complex]] = None

    @property
    def most_negative(self) -> float:
        return float(np.min(self.eigenvalues.real))


def printed_matrix(beta: float, n: np.ndarray) -> np.ndarray:
    b = beta
    n1, n2 = n[0], n[1]
    M = np.array([
        [b * (3 + 2 * b) - 2 * n1 * (2 + b), b * (1 - n1 + b) - 2 * n1, 3 * b ** 2 - 3 * n1 * b],
        [b - 2 * n2 * (2 + b), -n2 * (2 + b), -3 * n2 * b],
        [2 - 2 * (b - n1) * (2 + b) / b, 1 - (b - n1) * (2 + b) / b, 3 * n1 - 2 * b],
    ])
    return n2 / (n1 * b) * M


def closed_form_eigenvalues(beta: float, n: np.ndarray) -> Tuple[complex, complex, complex]:
    b = beta
    n1, n2 = n[0], n[1]
    delta = (10 * n1 * n2 * b + 4 * n1 * n2 - 4 * n2 * b ** 2 - 4 * n2 * b ** 3 - 8 * n1 * b ** 3 + 4 * b ** 4
             + 4 * n2 ** 2 + 4 * n2 ** 2 * b + 4 * n1 ** 2 * b ** 2 + 4 * n1 ** 2 * b + n2 ** 2 * b ** 2
             + 4 * n2 * b ** 2 * n1 - 8 * n1 * b ** 2 + n1 ** 2 - 4 * n2 * b - 8 * n1 * b + 4 * b ** 2 + 4 * b ** 3)
    root = np.emath.sqrt(delta)
    base = -2 * n1 * b - n1 - 2 * n2 - n2 * b + 2 * b ** 2
    scale = n2 / (2 * n1 * b)
    return complex(n2 / n1), complex(scale * (base + root)), complex(scale * (base - root))


def eigenvalues_3x3(M: np.ndarray) -> np.ndarray:
    """Roots of the characteristic polynomial, sorted by descending real part, then imaginary part."""
    roots = np.roots(np.poly(M)).astype(complex)
    order = sorted(range(len(roots)), key=lambda k: (-round(roots[k].real, 12), -roots[k].imag))
    return roots[order]


def classify(eigenvalues: np.ndarray) -> StabilityClass:
    moduli = np.abs(eigenvalues)
    if np.any(np.abs(moduli - 1.0) <= UNIT_CIRCLE_TOL):
        return StabilityClass.NON_GENERIC
    if np.all(moduli < 1.0):
        return StabilityClass.ATTRACTING
    return StabilityClass.SADDLE_TYPE


def perturbed_section(orbit: PeriodicOrbitSpec, eps) -> StateV:
    e1, e2, e3 = eps
    vA = orbit.section_n + np.array([e1, e2, -e1 - e2])
    if orbit.kind == OrbitKind.ANTICLOCKWISE:
        vB = orbit.section_m + np.array([-2 * e3, e3, e3])
    else:
        vB = orbit.section_m + np.array([e3, e3, -2 * e3])
    return StateV(vA, vB)


def section_coordinates(orbit: PeriodicOrbitSpec, state) -> np.ndarray:
    dA = state.vA - orbit.section_n
    dB = state.vB - orbit.section_m
    e3 = dB[1] if orbit.kind == OrbitKind.ANTICLOCKWISE else dB[0]
    return np.array([dA[0], dA[1], e3])


def third_map(orbit: PeriodicOrbitSpec) -> Callable[[np.ndarray], np.ndarray]:
    """One third of the orbit followed by the inverse relabelling, in perturbation coordinates."""
    engine = orbit_engine(orbit.beta)
    shift = THIRD_SHIFT[orbit.kind]

    def f(eps) -> np.ndarray:
        _, second = one_third(engine, perturbed_section(orbit, eps))
        return section_coordinates(orbit, second.end.rolled(-shift))

    return f


def numerical_jacobian(f: Callable[[np.ndarray], np.ndarray], h: float = JACOBIAN_STEP) -> np.ndarray:
    """Central differences at 0 with one Richardson extrapolation step."""
    def central(step):
        columns = []
        for k in range(3):
            e = np.zeros(3)
            e[k] = step
            columns.append((f(e) - f(-e)) / (2 * step))
        return np.column_stack(columns)

    return (4.0 * central(h / 2) - central(h)) / 3.0


def _kind_for(beta: float) -> OrbitKind:
    if abs(beta - SIGMA) < 1e-15:
        raise ExistenceError("both symmetric orbits degenerate to the interior equilibrium at beta = sigma")
    return OrbitKind.CLOCKWISE if beta < SIGMA else OrbitKind.ANTICLOCKWISE


def closed_form_gap(eigenvalues: np.ndarray, closed: Tuple[complex, ...]) -> float:
    return max(float(np.min(np.abs(eigenvalues - value))) for value in closed)


def _check_closed_form(beta: float, eigenvalues: np.ndarray, closed: Tuple[complex, ...]) -> None:
    ratio = closed[0]
    if float(np.min(np.abs(eigenvalues - ratio))) > CROSS_CHECK_TOL:
        raise InvariantError(f"anticlockwise stability at beta={beta}: n2/n1={ratio.real:.12g} "
                             f"is not in the spectrum {eigenvalues}")
    gap = closed_form_gap(eigenvalues, closed)
    if gap > CROSS_CHECK_TOL:
        logger.warning(f"anticlockwise stability at beta={beta}: closed-form eigenvalues {closed} "
                       f"are {gap:.3e} away from the spectrum")


def stability_matrix(beta: float, kind: Union[OrbitKind, str, None] = None, numeric: bool = False,
                     orbit: Optional[PeriodicOrbitSpec] = None) -> StabilityReport:
    """
    Linear part of the return map at the symmetric orbit existing at beta.
    The anticlockwise case evaluates the closed-form matrix unless numeric=True;
    the clockwise case is always obtained by perturbing the section through the simulator.
    An already constructed `orbit` of the same kind and beta is used instead of building it again.
    """
    kind = _kind_for(beta) if kind is None else OrbitKind(kind)
    if orbit is not None and (orbit.kind != kind or orbit.beta != beta):
        raise ParameterError(f"orbit {orbit.kind.value} at beta={orbit.beta} does not match {kind.value} "
                             f"at beta={beta}")
    if kind == OrbitKind.CLOCKWISE:
        orbit = orbit if orbit is not None else clockwise_orbit(beta)
        matrix = numerical_jacobian(third_map(orbit))
        eigenvalues = eigenvalues_3x3(matrix)
        report = StabilityReport(beta, kind, matrix, eigenvalues, classify(eigenvalues), "numeric")
    elif kind == OrbitKind.ANTICLOCKWISE:
        if numeric:
            orbit = orbit if orbit is not None else anticlockwise_orbit(beta)
            n = orbit.section_n
            matrix = numerical_jacobian(third_map(orbit))
        elif orbit is not None:
            n = orbit.section_n
            matrix = printed_matrix(beta, n)
        else:
            _, n, _ = anticlockwise_fixed_section(beta)
            matrix = printed_matrix(beta, n)
        eigenvalues = eigenvalues_3x3(matrix)
        closed = closed_form_eigenvalues(beta, n)
        if not numeric:
            _check_closed_form(beta, eigenvalues, closed)
        report = StabilityReport(beta, kind, matrix, eigenvalues, classify(eigenvalues),
                                 "numeric" if numeric else "closed form", closed_form=closed)
    else:
        raise ParameterError(f"Orbit kind {kind.value} not recognized.")
    logger.debug(f"{kind.value} stability at beta={beta}: eigenvalues {np.round(report.eigenvalues, 6)}")
    return report


def tau_gap(beta: float) -> float:
    """Most negative real part of the anticlockwise spectrum, plus one."""
    _, n, _ = anticlockwise_fixed_section(beta)
    return float(np.min(eigenvalues_3x3(printed_matrix(beta, n)).real)) + 1.0


def find_tau(bracket: Tuple[float, float] = (SIGMA + 0.01, 0.99), tol: float = 1e-6, full_output: bool = False):
    """Parameter where an anticlockwise return-map eigenvalue crosses -1, located by bisection."""
    lo, hi = bracket
    if not SIGMA < lo < hi <= 1.0:
        raise ParameterError(f"bracket {bracket} must lie inside (sigma, 1]")
    g_lo, g_hi = tau_gap(lo), tau_gap(hi)
    if np.sign(g_lo) == np.sign(g_hi):
        raise SearchError(f"no eigenvalue crossing -1 in {bracket}: g={g_lo:.6g} and {g_hi:.6g}")
    result = root_scalar(tau_gap, bracket=(lo, hi), method="bisect", xtol=tol * 1e-2)
    tau = float(result.root)
    logger.info(f"tau={tau:.9f} after {result.iterations} bisection steps")
    if full_output:
        return tau, result.iterations
    return tau


def critical_direction(report: StabilityReport) -> np.ndarray:
    """Real eigenvector of the eigenvalue closest to -1."""
    values, vectors = np.linalg.eig(report.matrix)
    k = int(np.argmin(np.abs(values + 1.0)))
    vector = np.real(vectors[:, k])
    return vector / np.linalg.norm(vector)


def period_doubling_residuals(beta: float, steps=(1e-3, 2e-3, 4e-3)) -> List[Tuple[float, float]]:
    """
    |P^2(x) - x| for points x at distance h from the fixed point along the critical eigenline,
    where P is the one-third map. At tau the second iterate is the identity on that line.
    """
    orbit = anticlockwise_orbit(beta)
    direction = critical_direction(stability_matrix(beta, kind=orbit.kind, orbit=orbit))
    f = third_map(orbit)
    residuals = []
    for h in steps:
        x = h * direction
        residuals.append((h, float(np.linalg.norm(f(f(x)) - x))))
    return residuals


def period_doubling_excess(beta: float, steps=(1e-3, 2e-3, 4e-3)) -> List[Tuple[float, float]]:
    """
    |P^2(x) - x| on the critical eigenline minus |lambda^2 - 1| h, the part owed to lambda missing -1.
    P maps lines through the orbit to lines, so on the eigenline it is linear fractional and nothing
    of order h^3 is left; a generic period doubling would leave c h^3 here.
    """
    values = np.linalg.eigvals(stability_matrix(beta, kind=OrbitKind.ANTICLOCKWISE).matrix)
    lam = float(np.real(values[int(np.argmin(np.abs(values + 1.0)))]))
    slope = abs(lam ** 2 - 1.0)
    return [(h, abs(r - slope * h)) for h, r in period_doubling_residuals(beta, steps)]
