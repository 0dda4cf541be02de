import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from flow.config import SimConfig
from flow.engine import FlowEngine, p_from_v, simulate
from game.errors import AmbiguityError, DomainError, InvariantError, ModelError, ParameterError, PreconditionError
from game.game_core import TIE_TOL, BimatrixGame, StateV, random_state
from orbits.orbit_analysis import clockwise_orbit, equilibrium_state, shapley_game
from transitions.transition_graph import SHAPLEY, pattern_match

logger = logging.getLogger(__name__)

FIT_SAMPLES = 12
VERIFY_SAMPLES = 20
FIT_RESIDUAL = 1e-8
ATTRACTION_TOL = 1e-5


class SectionId(NamedTuple):
    """Face where `tied` is indifferent between `pair` while the other player strictly prefers `strict`."""
    tied: str
    pair: Tuple[int, int]
    strict: int

    @property
    def other(self) -> str:
        return "A" if self.tied == "B" else "B"

    def __str__(self):
        return f"{self.tied}{self.pair[0]}{self.pair[1]}|{self.other}{self.strict}"


def clockwise_sections() -> List[SectionId]:
    """Entry faces of the regions (1,2), (2,2), (2,3), (3,3), (3,1), (1,1) of Shapley's cycle."""
    return [
        SectionId("B", (1, 2), 1),
        SectionId("A", (1, 2), 2),
        SectionId("B", (2, 3), 2),
        SectionId("A", (2, 3), 3),
        SectionId("B", (3, 1), 3),
        SectionId("A", (3, 1), 1),
    ]


@dataclass(frozen=True, eq=False)
class ProjectiveMap:
    """z -> L(z)/f(z) on three-dimensional section coordinates, stored as a homogeneous 4x4 matrix."""
    H: np.ndarray
    source: Optional[SectionId] = None
    target: Optional[SectionId] = None
    residual: float = 0.0

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        if abs(H[-1, -1]) > 1e-14:
            H = H / H[-1, -1]
        object.__setattr__(self, "H", H)

    @classmethod
    def identity(cls, section: Optional[SectionId] = None) -> "ProjectiveMap":
        return cls(np.eye(4), section, section)

    def apply(self, z) -> np.ndarray:
        w = self.H @ np.append(np.asarray(z, dtype=float), 1.0)
        return w[:3] / w[3]

    def denominator(self, z) -> float:
        return float(self.H[3] @ np.append(np.asarray(z, dtype=float), 1.0))


def compose(T2: ProjectiveMap, T1: ProjectiveMap) -> ProjectiveMap:
    """T2 after T1."""
    if T1.target is not None and T2.source is not None and T1.target != T2.source:
        raise ParameterError(f"cannot compose a map into {T1.target} with a map from {T2.source}")
    return ProjectiveMap(T2.H @ T1.H, T1.source, T2.target, residual=T1.residual + T2.residual)


# --- section coordinates ------------------------------------------------------------


def _sums(game: BimatrixGame) -> Tuple[float, float]:
    sums = game.utility_sums()
    if sums is None:
        raise ParameterError("section coordinates need constant utility sums")
    return sums


def state_from_z(game: BimatrixGame, section: SectionId, z) -> StateV:
    sumA, sumB = _sums(game)
    sum_tied, sum_other = (sumA, sumB) if section.tied == "A" else (sumB, sumA)
    a, b = section.pair
    tied = np.full(3, sum_tied - 2.0 * z[0])
    tied[a - 1] = tied[b - 1] = z[0]
    other = np.array([z[1], z[2], sum_other - z[1] - z[2]])
    return StateV(tied, other) if section.tied == "A" else StateV(other, tied)


def z_from_state(section: SectionId, state: StateV) -> np.ndarray:
    tied, other = (state.vA, state.vB) if section.tied == "A" else (state.vB, state.vA)
    return np.array([tied[section.pair[0] - 1], other[0], other[1]])


def section_margin(game: BimatrixGame, section: SectionId, state: StateV) -> float:
    """
    How far a state on the section plane is inside the face: the smallest of the mixed-strategy
    components, the lead of the tied pair over the third strategy and the other player's lead.
    Negative or zero when the state is outside or on the boundary.
    """
    try:
        p = p_from_v(game, state)
    except DomainError:
        return -1.0
    tied, other = (state.vA, state.vB) if section.tied == "A" else (state.vB, state.vA)
    a, b = section.pair
    third = ({1, 2, 3} - {a, b}).pop()
    c = section.strict
    lead = other[c - 1] - max(other[k] for k in range(3) if k != c - 1)
    raw = _raw_simplex_margin(game, state)
    return float(min(raw, tied[a - 1] - tied[third - 1], lead, np.min(p.pA.components), np.min(p.pB.components)))


def _raw_simplex_margin(game: BimatrixGame, state: StateV) -> float:
    # p_from_v clips tiny negative components, so look at the unclipped solution
    rows = []
    for M, v in ((game.A, state.vA), (game.B.T, state.vB)):
        system = np.vstack([M, np.ones((1, 3))])
        p, *_ = np.linalg.lstsq(system, np.append(v, 1.0), rcond=None)
        rows.append(np.min(p))
    return float(min(rows))


def sample_section(game: BimatrixGame, section: SectionId, count: int, rng: np.random.Generator,
                   margin: float = 1e-3) -> List[np.ndarray]:
    """Rejection sampling of section coordinates inside the face."""
    A, B = game.A, game.B
    tied_M, other_M = (A, B) if section.tied == "A" else (B, A)
    lo = np.array([tied_M.min(), other_M.min(), other_M.min()])
    hi = np.array([tied_M.max(), other_M.max(), other_M.max()])
    samples = []
    attempts = 0
    while len(samples) < count:
        attempts += 1
        if attempts > 10_000 * count:
            raise PreconditionError(f"could not sample {count} points on section {section}")
        z = rng.uniform(lo, hi)
        if section_margin(game, section, state_from_z(game, section, z)) > margin:
            samples.append(z)
    return samples


# --- maps between sections ----------------------------------------------------------


def _on_section(state: StateV, section: SectionId, tol: float = TIE_TOL) -> bool:
    tied, other = (state.vA, state.vB) if section.tied == "A" else (state.vB, state.vA)
    a, b = section.pair
    return abs(tied[a - 1] - tied[b - 1]) <= tol and int(np.argmax(other)) + 1 == section.strict


def hit_map(engine: FlowEngine, source: SectionId, target: SectionId, z) -> np.ndarray:
    """Follows the flow from a section point through one region to the next section."""
    state = state_from_z(engine.game, source, z)
    end = engine.step(state).end
    if not _on_section(end, target):
        raise PreconditionError(f"orbit from {source} at z={np.round(z, 9).tolist()} does not hit {target} "
                                f"after one region")
    return z_from_state(target, end)


def _normalizer(points: np.ndarray) -> np.ndarray:
    centre = points.mean(axis=0)
    spread = np.sqrt(((points - centre) ** 2).sum(axis=1)).mean()
    scale = np.sqrt(3.0) / spread if spread > 0 else 1.0
    T = np.eye(4) * scale
    T[:3, 3] = -scale * centre
    T[3, 3] = 1.0
    return T


def fit_projective(sources: Sequence[np.ndarray], images: Sequence[np.ndarray]) -> np.ndarray:
    """Direct linear transform: the 4x4 matrix H with H [z;1] ~ [w;1], least squares over all samples."""
    Z = np.asarray(sources, dtype=float)
    W = np.asarray(images, dtype=float)
    Tz, Tw = _normalizer(Z), _normalizer(W)
    Zh = (Tz @ np.column_stack([Z, np.ones(len(Z))]).T).T
    Wh = (Tw @ np.column_stack([W, np.ones(len(W))]).T).T
    rows = []
    for z, w in zip(Zh, Wh):
        for r in range(3):
            row = np.zeros(16)
            row[4 * r:4 * r + 4] = w[3] * z
            row[12:16] = -w[r] * z
            rows.append(row)
    _, _, Vt = np.linalg.svd(np.asarray(rows))
    Hn = Vt[-1].reshape(4, 4)
    return np.linalg.inv(Tw) @ Hn @ Tz


def projective_from_samples(game: BimatrixGame, source: SectionId, target: SectionId,
                            rng: Optional[np.random.Generator] = None) -> ProjectiveMap:
    """
    Recovers the section-to-section map from simulated hits and checks it on held-out points.

    Five points in general position determine a projective map of three-space. The fit takes
    FIT_SAMPLES hits instead and solves the over-determined DLT system in the least-squares sense;
    the VERIFY_SAMPLES held-out hits must then agree within FIT_RESIDUAL.
    """
    if source == target:
        return ProjectiveMap.identity(source)
    rng = rng or np.random.default_rng(0)
    engine = FlowEngine(game, SimConfig(codim2_policy="abort"))
    points = sample_section(game, source, FIT_SAMPLES + VERIFY_SAMPLES, rng)
    images = [hit_map(engine, source, target, z) for z in points]
    H = fit_projective(points[:FIT_SAMPLES], images[:FIT_SAMPLES])
    candidate = ProjectiveMap(H, source, target)
    residual = max(float(np.max(np.abs(candidate.apply(z) - w)))
                   for z, w in zip(points[FIT_SAMPLES:], images[FIT_SAMPLES:]))
    if residual >= FIT_RESIDUAL:
        raise ModelError(f"map {source} -> {target} is not projective: held-out residual {residual:.3e}")
    logger.debug(f"projective map {source} -> {target}: residual {residual:.3e}")
    return ProjectiveMap(H, source, target, residual=residual)


def direct_return(engine: FlowEngine, z) -> np.ndarray:
    """First return to the first clockwise section by six region crossings of the simulator."""
    sections = clockwise_sections()
    for k, source in enumerate(sections):
        z = hit_map(engine, source, sections[(k + 1) % 6], z)
    return z


@dataclass(frozen=True, eq=False)
class FirstReturn:
    beta: float
    map: ProjectiveMap
    pieces: List[ProjectiveMap]
    fixed_point: np.ndarray

    @property
    def fixed_state(self) -> StateV:
        return state_from_z(shapley_game(self.beta), clockwise_sections()[0], self.fixed_point)


def equilibrium_z(beta: float) -> np.ndarray:
    """Section coordinates of the corner E of the first section."""
    return np.array([(1 - beta) / 3, (1 + beta) / 3, (1 + beta) / 3])


def _check_beta(beta: float) -> None:
    if not -1.0 < beta <= 0.0:
        raise ParameterError(f"first-return analysis covers beta in (-1, 0] only, got {beta}: "
                             f"routes multiply for beta > 0")


def first_return(beta: float, rng: Optional[np.random.Generator] = None) -> FirstReturn:
    """Composition of the six projective region maps of Shapley's cycle, with its interior fixed point."""
    _check_beta(beta)
    rng = rng or np.random.default_rng(0)
    game = shapley_game(beta)
    sections = clockwise_sections()
    pieces = [projective_from_samples(game, sections[k], sections[(k + 1) % 6], rng) for k in range(6)]
    P = pieces[0]
    for piece in pieces[1:]:
        P = compose(piece, P)

    engine = FlowEngine(game, SimConfig(codim2_policy="abort"))
    E = equilibrium_z(beta)
    candidates = []
    values, vectors = np.linalg.eig(P.H)
    for k in range(4):
        v = vectors[:, k]
        if abs(values[k].imag) > 1e-9 or abs(v[3]) < 1e-12:
            continue
        z = np.real(v[:3] / v[3])
        if np.max(np.abs(z - E)) < 1e-6:
            continue
        if section_margin(game, sections[0], state_from_z(game, sections[0], z)) > 0:
            candidates.append(z)
    if len(candidates) != 1:
        raise InvariantError(f"first-return map at beta={beta} has {len(candidates)} interior fixed points")
    z = candidates[0]
    for _ in range(50):
        nxt = direct_return(engine, z)
        if np.max(np.abs(nxt - z)) < 1e-14:
            z = nxt
            break
        z = nxt
    return FirstReturn(beta, P, pieces, z)


def orbit_section_z(beta: float) -> np.ndarray:
    orbit = clockwise_orbit(beta)
    return np.array([orbit.section_m[0], orbit.section_n[0], orbit.section_n[1]])


def check_fixed_point(result: FirstReturn, tol: float = 1e-8) -> float:
    """Distance between the fixed point of the first-return map and the clockwise orbit's section."""
    gap = float(np.max(np.abs(result.fixed_point - orbit_section_z(result.beta))))
    if gap > tol:
        raise InvariantError(f"first-return fixed point at beta={result.beta} is {gap:.3e} away from the "
                             f"clockwise orbit")
    return gap


def near_boundary_samples(result: FirstReturn, count: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Points just inside the first section, found by bisection along rays from the fixed point."""
    game = shapley_game(result.beta)
    section = clockwise_sections()[0]
    p = result.fixed_point
    samples = []
    for z in sample_section(game, section, count, rng):
        direction = z - p
        lo, hi = 0.0, 1.0
        while section_margin(game, section, state_from_z(game, section, p + hi * direction)) > 0:
            hi *= 2.0
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            if section_margin(game, section, state_from_z(game, section, p + mid * direction)) > 0:
                lo = mid
            else:
                hi = mid
        # stay clear of the tie tolerance so the engine still sees a single indifference
        samples.append(p + lo * (1.0 - 1e-5) * direction)
    return samples


def maps_into_interior(result: FirstReturn, count: int = 20, rng: Optional[np.random.Generator] = None) -> bool:
    """True when every near-boundary sample is sent strictly inside the first section."""
    rng = rng or np.random.default_rng(1)
    game = shapley_game(result.beta)
    section = clockwise_sections()[0]
    engine = FlowEngine(game, SimConfig(codim2_policy="abort"))
    for z in near_boundary_samples(result, count, rng):
        image = direct_return(engine, z)
        if section_margin(game, section, state_from_z(game, section, image)) <= 0:
            logger.info(f"boundary point {z} is not mapped into the interior: image {image}")
            return False
    return True



# --- structure of the first return ----------------------------------------------------


def section_equilibrium_z(beta: float, section: SectionId) -> np.ndarray:
    """Coordinates of E on any section of the cycle."""
    return z_from_state(section, equilibrium_state(beta))


def composition_gap(result: FirstReturn, count: int = 20, rng: Optional[np.random.Generator] = None) -> float:
    """Largest difference between the composed map and six simulated region crossings."""
    rng = rng or np.random.default_rng(2)
    game = shapley_game(result.beta)
    engine = FlowEngine(game, SimConfig(codim2_policy="abort"))
    points = sample_section(game, clockwise_sections()[0], count, rng)
    return max(float(np.max(np.abs(result.map.apply(z) - direct_return(engine, z)))) for z in points)


def cross_ratio(points: Sequence[np.ndarray]) -> float:
    """Cross-ratio of four collinear points, measured along the line from the first to the last."""
    a, b, c, d = (np.asarray(p, dtype=float) for p in points)
    direction = d - a
    t = [float((p - a) @ direction / (direction @ direction)) for p in (a, b, c, d)]
    return (t[2] - t[0]) * (t[3] - t[1]) / ((t[2] - t[1]) * (t[3] - t[0]))


def collinearity_residual(points: Sequence[np.ndarray]) -> float:
    """Distance of the points from the line through the first and the last, relative to their spread."""
    first, last = np.asarray(points[0], dtype=float), np.asarray(points[-1], dtype=float)
    direction = last - first
    scale = float(direction @ direction)
    worst = 0.0
    for p in points[1:-1]:
        offset = np.asarray(p, dtype=float) - first
        off_line = offset - (offset @ direction) / scale * direction
        worst = max(worst, float(np.linalg.norm(off_line)) / np.sqrt(scale))
    return worst


def line_preservation(beta: float, count: int = 5, rng: Optional[np.random.Generator] = None) -> Tuple[float, float]:
    """
    Sends four points of `count` random lines of the first section once around the cycle with the
    simulator. Returns the worst collinearity residual of the images and the worst change of cross-ratio.
    """
    _check_beta(beta)
    rng = rng or np.random.default_rng(3)
    game = shapley_game(beta)
    engine = FlowEngine(game, SimConfig(codim2_policy="abort"))
    section = clockwise_sections()[0]
    worst_line = worst_ratio = 0.0
    for _ in range(count):
        z0, z1 = sample_section(game, section, 2, rng)
        points = [z0 + t * (z1 - z0) for t in (0.1, 0.4, 0.6, 0.9)]
        images = [direct_return(engine, z) for z in points]
        worst_line = max(worst_line, collinearity_residual(images))
        worst_ratio = max(worst_ratio, abs(cross_ratio(images) - cross_ratio(points)))
    return worst_line, worst_ratio


def iterate_to_fixed_point(result: FirstReturn, count: int = 100, steps: int = 200,
                           rng: Optional[np.random.Generator] = None) -> float:
    """Largest distance to the interior fixed point after `steps` iterations of P from random section points."""
    rng = rng or np.random.default_rng(4)
    game = shapley_game(result.beta)
    worst = 0.0
    for z in sample_section(game, clockwise_sections()[0], count, rng):
        for _ in range(steps):
            z = result.map.apply(z)
        worst = max(worst, float(np.max(np.abs(z - result.fixed_point))))
    return worst


@dataclass
class AttractionReport:
    beta: float
    fixed_point: StateV
    n_starts: int
    converged: int = 0
    outliers: List[dict] = field(default_factory=list)

    @property
    def converged_fraction(self) -> float:
        return self.converged / self.n_starts if self.n_starts else 0.0

    def payload(self) -> dict:
        return {
            "beta": self.beta,
            "fixed_point": {"n": self.fixed_point.vA, "m": self.fixed_point.vB},
            "converged_fraction": self.converged_fraction,
            "outliers": self.outliers,
        }


def attraction_check(beta: float, n_starts: int = 500, horizon: int = 300, seed: int = 0,
                     progress: bool = False) -> AttractionReport:
    """
    Random interior starts must end up repeating Shapley's pattern, with the last visit
    to the first section close to the clockwise orbit.
    """
    _check_beta(beta)
    orbit = clockwise_orbit(beta)
    target = orbit.section_state
    game = shapley_game(beta)
    config = SimConfig(max_events=horizon)
    rng = np.random.default_rng(seed)
    report = AttractionReport(beta, target, n_starts)
    for index in tqdm(range(n_starts), disable=not progress, desc=f"attraction beta={beta}"):
        init = random_state(3, rng)
        try:
            trajectory = simulate(game, init, config)
        except AmbiguityError as e:
            report.outliers.append({"start": index, "reason": f"ambiguous: {e}"})
            continue
        regions = trajectory.regions()
        if not pattern_match(regions, SHAPLEY, min_repeats=3):
            report.outliers.append({"start": index, "reason": "trailing itinerary is not Shapley's pattern"})
            continue
        entries = [seg.start for seg in trajectory.segments[1:] if seg.region == SHAPLEY.sequence[0]]
        gap = entries[-1].distance(target) if entries else float("inf")
        if gap > ATTRACTION_TOL:
            report.outliers.append({"start": index, "reason": f"last section visit {gap:.3e} from the orbit"})
            continue
        report.converged += 1
    logger.info(f"attraction at beta={beta}: {report.converged}/{n_starts} starts converged")
    return report
