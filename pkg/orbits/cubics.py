import logging
from dataclasses import dataclass
from typing import List, Literal, Tuple

import numpy as np
from scipy.optimize import root_scalar

from game.errors import InvariantError, SearchError

logger = logging.getLogger(__name__)

ROOT_RESIDUAL = 1e-14


@dataclass(frozen=True)
class CubicSpec:
    """f(Z) = c3 Z^3 + c2 Z^2 + c1 Z + c0 whose root fixes the symmetric orbit at parameter beta."""
    kind: Literal["clockwise", "anticlockwise"]
    beta: float
    coefficients: Tuple[float, float, float, float]

    def __call__(self, Z):
        return np.polyval(self.coefficients, Z)

    def derivative(self, Z):
        return np.polyval(np.polyder(self.coefficients), Z)


def clockwise_cubic(beta: float) -> CubicSpec:
    b = beta
    return CubicSpec("clockwise", b, (
        3 * b ** 2 + 3 * b + 3,
        2 * b ** 3 - 2 * b ** 2 - 5 * b - 4,
        -b ** 3 + 4 * b + 3,
        -1 - b,
    ))


def anticlockwise_cubic(beta: float) -> CubicSpec:
    b = beta
    return CubicSpec("anticlockwise", b, (
        3 * b ** 2 + 3 * b + 3 * b ** 3,
        -5 * b ** 3 - 7 * b ** 2 - 4 * b - 2,
        1 + b + 5 * b ** 2 + 2 * b ** 3,
        -b ** 2,
    ))


def bracketed_root(cubic: CubicSpec, lo: float, hi: float) -> float:
    """Brent's method inside a sign-change bracket, polished by Newton steps that stay in the bracket."""
    f_lo, f_hi = cubic(lo), cubic(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise SearchError(f"{cubic.kind} cubic has no sign change on ({lo}, {hi}) at beta={cubic.beta}")
    result = root_scalar(cubic, bracket=(lo, hi), method="brentq", xtol=1e-16, rtol=4 * np.finfo(float).eps)
    root = result.root
    for _ in range(3):
        slope = cubic.derivative(root)
        if slope == 0.0:
            break
        candidate = root - cubic(root) / slope
        if not lo < candidate < hi or abs(cubic(candidate)) >= abs(cubic(root)):
            break
        root = candidate
    scale = max(1.0, float(np.max(np.abs(cubic.coefficients))))
    if abs(cubic(root)) > ROOT_RESIDUAL * scale * 100:
        raise InvariantError(f"{cubic.kind} cubic root {root} has residual {cubic(root):.3e}")
    logger.debug(f"{cubic.kind} cubic at beta={cubic.beta}: root {root!r} after {result.iterations} iterations")
    return float(root)


def isolate_roots(cubic: CubicSpec) -> List[float]:
    """
    Real roots of the anticlockwise cubic, one per sign change on (0, 1/3), (1/3, 1) and (1, bound),
    where bound is the Cauchy bound of the polynomial.
    """
    c3 = cubic.coefficients[0]
    bound = 1.0 + max(abs(c / c3) for c in cubic.coefficients[1:])
    roots = []
    for lo, hi in ((0.0, 1.0 / 3.0), (1.0 / 3.0, 1.0), (1.0, bound)):
        if np.sign(cubic(lo)) != np.sign(cubic(hi)):
            roots.append(bracketed_root(cubic, lo, hi))
    return roots
