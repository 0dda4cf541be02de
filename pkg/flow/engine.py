import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from flow.config import SimConfig
from game.errors import (AmbiguityError, ClassificationError, DomainError, NonUniquenessError, ParameterError,
                         PreconditionError)
from game.game_core import (TIE_TOL, BimatrixGame, SimplexPoint, StateP, StateV, best_response_set,
                            interior_equilibrium, make_shapley, utilities)
from geometry.indifference import (Codim2Case, JLeg, RegionLabel, classify_codim2, consistent_quadrants,
                                   leg_for_pairs, restricted_game)

logger = logging.getLogger(__name__)


class EventKind(str, Enum):
    SINGLE_INDIFFERENCE = "SingleIndifference"
    CODIM2_HIT = "Codim2Hit"
    EQUILIBRIUM_REACHED = "EquilibriumReached"
    DISCONTINUITY_HIT = "DiscontinuityHit"
    TRUNCATED = "Truncated"


@dataclass(frozen=True)
class Tie:
    """Strategy `catcher` of `player` catches up with the currently preferred strategies `leaders` at time s."""
    player: str
    leaders: Tuple[int, ...]
    catcher: int
    s: float

    @property
    def pair(self) -> Tuple[int, ...]:
        return tuple(sorted(self.leaders + (self.catcher,)))


@dataclass(frozen=True)
class FlowEvent:
    kind: EventKind
    ties: Tuple[Tie, ...] = ()
    leg: Optional[JLeg] = None
    case: Optional[Codim2Case] = None
    note: str = ""

    @property
    def label(self) -> str:
        if self.kind == EventKind.SINGLE_INDIFFERENCE and self.ties:
            tie = self.ties[0]
            return f"{self.kind.value}({tie.player}:{'-'.join(map(str, tie.pair))})"
        if self.kind == EventKind.CODIM2_HIT and self.case is not None:
            where = self.leg.name if self.leg is not None else "Z*"
            return f"{self.kind.value}({where}:{self.case.value})"
        return self.kind.value


def _support(play: np.ndarray) -> Tuple[int, ...]:
    return tuple(int(k) + 1 for k in np.flatnonzero(play > 0.0))


@dataclass(frozen=True, eq=False)
class Segment:
    """
    One straight piece of the flow: v moves toward (A p^B_play, p^A_play B) for s units of time.
    Pure segments have unit-vector plays; segments on J have two-point mixtures.
    """
    start: StateV
    playA: np.ndarray
    playB: np.ndarray
    targetA: np.ndarray
    targetB: np.ndarray
    duration_s: float
    end: StateV
    end_event: FlowEvent
    leg: Optional[JLeg] = None

    @property
    def is_pure(self) -> bool:
        return len(_support(self.playA)) == 1 and len(_support(self.playB)) == 1

    @property
    def targetA_col(self) -> Optional[int]:
        support = _support(self.playB)
        return support[0] if len(support) == 1 else None

    @property
    def targetB_row(self) -> Optional[int]:
        support = _support(self.playA)
        return support[0] if len(support) == 1 else None

    @property
    def region(self) -> Optional[RegionLabel]:
        if not self.is_pure:
            return None
        return RegionLabel(self.targetB_row, self.targetA_col)

    @property
    def labelA(self) -> Union[int, Tuple[int, ...]]:
        support = _support(self.playA)
        return support[0] if len(support) == 1 else support

    @property
    def labelB(self) -> Union[int, Tuple[int, ...]]:
        support = _support(self.playB)
        return support[0] if len(support) == 1 else support

    @property
    def duration_rho(self) -> float:
        return time_convert(self.duration_s)

    def at(self, s: float) -> StateV:
        return advance(self.start, (self.targetA, self.targetB), s)


@dataclass(frozen=True)
class ItineraryEntry:
    A: Union[int, Tuple[int, ...]]
    B: Union[int, Tuple[int, ...]]
    duration_s: float
    duration_rho: float


@dataclass
class Trajectory:
    game: BimatrixGame
    initial: StateP
    segments: List[Segment] = field(default_factory=list)
    terminal_events: List[FlowEvent] = field(default_factory=list)

    @property
    def events(self) -> List[FlowEvent]:
        return [segment.end_event for segment in self.segments] + list(self.terminal_events)

    @property
    def final_state(self) -> StateV:
        if self.segments:
            return self.segments[-1].end
        return utilities(self.game, self.initial)

    @property
    def stop_event(self) -> Optional[FlowEvent]:
        events = self.events
        return events[-1] if events else None

    def itinerary(self) -> List[ItineraryEntry]:
        return [ItineraryEntry(seg.labelA, seg.labelB, seg.duration_s, seg.duration_rho) for seg in self.segments]

    def regions(self) -> List[Optional[RegionLabel]]:
        return [seg.region for seg in self.segments]

    def cumulative_times(self) -> Tuple[np.ndarray, np.ndarray]:
        s = np.cumsum([0.0] + [seg.duration_s for seg in self.segments])
        rho = np.cumsum([0.0] + [seg.duration_rho for seg in self.segments])
        return s, rho


@dataclass(frozen=True, eq=False)
class Plan:
    """What the players do from `state` on: plays, the strategies that currently lead, and why."""
    state: StateV
    playA: Optional[np.ndarray] = None
    playB: Optional[np.ndarray] = None
    leadersA: Tuple[int, ...] = ()
    leadersB: Tuple[int, ...] = ()
    leg: Optional[JLeg] = None
    case: Optional[Codim2Case] = None
    stop: Optional[FlowEvent] = None


def time_convert(s_duration: float) -> float:
    """Original time rho = -ln(1 - s) of an s-time duration; s = 1 maps to infinity."""
    if not 0.0 <= s_duration <= 1.0:
        raise ParameterError(f"s-time duration {s_duration} outside [0, 1]")
    if s_duration == 1.0:
        return math.inf
    return -math.log1p(-s_duration)


def time_convert_inverse(rho_duration: float) -> float:
    if rho_duration < 0.0:
        raise ParameterError(f"negative rho-time duration {rho_duration}")
    return -math.expm1(-rho_duration)


def advance(state: StateV, targets: Tuple[np.ndarray, np.ndarray], s: float) -> StateV:
    """v(s) = (1 - s) v + s T, exactly."""
    if not 0.0 <= s <= 1.0:
        raise ParameterError(f"advance by s={s} outside [0, 1]")
    targetA, targetB = targets
    return StateV((1.0 - s) * state.vA + s * np.asarray(targetA), (1.0 - s) * state.vB + s * np.asarray(targetB))


def targets_for(game: BimatrixGame, targetA_col: int, targetB_row: int) -> Tuple[np.ndarray, np.ndarray]:
    return game.column_of_A(targetA_col), game.row_of_B(targetB_row)


def _unit(n: int, k: int) -> np.ndarray:
    e = np.zeros(n)
    e[k] = 1.0
    return e


def _tie_times(v: np.ndarray, T: np.ndarray, leaders: Sequence[int], player: str) -> List[Tie]:
    # (1 - s)(v_a - v_b) + s (T_a - T_b) = 0 for every strategy b that gains on the leaders
    lead_v = float(np.mean(v[list(leaders)]))
    lead_T = float(T[leaders[0]])
    ties = []
    for c in range(v.size):
        if c in leaders:
            continue
        d = lead_v - v[c]
        e = lead_T - T[c]
        if e >= 0.0:
            continue
        d = max(d, 0.0)
        ties.append(Tie(player, tuple(k + 1 for k in leaders), c + 1, float(d / (d - e))))
    return ties


def _snap(v: np.ndarray, indices: Sequence[int]) -> None:
    indices = list(indices)
    v[indices] = np.mean(v[indices])


def time_to_next_event(game: BimatrixGame, state: StateV, targetA_col: int, targetB_row: int,
                       tol: float = TIE_TOL) -> Tuple[float, List[Tie]]:
    """
    First time s* in (0, 1] at which a strategy catches up with the one being played.

    Args:
        targetA_col: strategy j played by B, v^A moves toward column A_j.
        targetB_row: strategy i played by A, v^B moves toward row B_i.

    Returns:
        s* and the ties occurring within the simultaneity threshold of s*;
        (1.0, []) when no tie happens before the targets are reached.
    """
    i, j = targetB_row - 1, targetA_col - 1
    if state.vA[i] < np.max(state.vA) - tol or state.vB[j] < np.max(state.vB) - tol:
        raise PreconditionError(f"state already tied beyond tolerance: A does not prefer {targetB_row} "
                                f"or B does not prefer {targetA_col}")
    plan = Plan(state=state, playA=_unit(game.n, i), playB=_unit(game.n, j), leadersA=(i,), leadersB=(j,))
    return FlowEngine(game, SimConfig(tol_tie=tol))._next_ties(plan)


class FlowEngine:
    """Exact event-driven integrator of the best-response flow in utility space."""

    def __init__(self, game: BimatrixGame, config: Optional[SimConfig] = None):
        self.game = game
        self.config = config or SimConfig()
        try:
            self.equilibrium = utilities(game, interior_equilibrium(game))
        except DomainError:
            self.equilibrium = None

    def at_equilibrium(self, state: StateV) -> bool:
        return self.equilibrium is not None and state.distance(self.equilibrium) < self.config.equilibrium_radius

    # --- deciding what is played -------------------------------------------------

    def _winner(self, T: np.ndarray, tied: Sequence[int], player: str, opponent: str) -> int:
        ranked = sorted(tied, key=lambda k: -T[k - 1])
        if T[ranked[0] - 1] - T[ranked[1] - 1] <= self.config.tol_tie:
            line = f"Z^{player}_{{{ranked[0]},{ranked[1]}}}"
            raise AmbiguityError(f"non-transversal indifference line {line} while player {opponent} is fixed: "
                                 f"both strategies gain at the same rate", line=line)
        return ranked[0] - 1

    def _pure_plan(self, state: StateV, a: int, b: int, leg=None, case=None) -> Plan:
        n = self.game.n
        return Plan(state=state, playA=_unit(n, a), playB=_unit(n, b), leadersA=(a,), leadersB=(b,),
                    leg=leg, case=case)

    def plan(self, state: StateV) -> Plan:
        tol = self.config.tol_tie
        if self.at_equilibrium(state):
            return Plan(state=state, stop=FlowEvent(EventKind.EQUILIBRIUM_REACHED))
        brA = best_response_set(state.vA, tol, "A")
        brB = best_response_set(state.vB, tol, "B")
        if brA.is_strict and brB.is_strict:
            return self._pure_plan(state, brA.best - 1, brB.best - 1)
        if brA.is_strict:
            a = brA.best - 1
            b = self._winner(self.game.B[a], brB.indices, "B", "A")
            return self._pure_plan(state, a, b)
        if brB.is_strict:
            b = brB.best - 1
            a = self._winner(self.game.A[:, b], brA.indices, "A", "B")
            return self._pure_plan(state, a, b)
        return self._plan_codim2(state, brA.indices, brB.indices)

    def _plan_codim2(self, state: StateV, tiedA: Tuple[int, ...], tiedB: Tuple[int, ...]) -> Plan:
        policy = self.config.codim2_policy
        if len(tiedA) == 2 and len(tiedB) == 2:
            rg = restricted_game(self.game, tiedA, tiedB)
            case = classify_codim2(rg)
            leg = leg_for_pairs(tiedA, tiedB) if self.game.n == 3 else None
            where = leg.name if leg is not None else f"Z^A_{tiedA} x Z^B_{tiedB}"
            logger.debug(f"codimension-two point on {where}: {case.value}")
            if case == Codim2Case.CROSSING:
                r, c = consistent_quadrants(rg)[0]
                return self._pure_plan(state, tiedA[r] - 1, tiedB[c] - 1, leg=leg, case=case)
            if policy == "perturb":
                return self._perturbed_plan(state, rg, leg, case)
            if case == Codim2Case.SADDLE:
                return Plan(state=state, stop=FlowEvent(EventKind.DISCONTINUITY_HIT, leg=leg, case=case,
                                                        note=f"saddle point on {where}: continuation not unique"))
            if policy == "abort":
                return Plan(state=state, stop=FlowEvent(EventKind.CODIM2_HIT, leg=leg, case=case, note="aborted"))
            return self._plan_j_flow(state, tiedA, tiedB)
        if policy == "follow_J":
            return self._plan_j_flow(state, tiedA, tiedB)
        return Plan(state=state, stop=FlowEvent(EventKind.CODIM2_HIT,
                                                note=f"higher-codimension tie A{tiedA} B{tiedB}"))

    def _perturbed_plan(self, state: StateV, rg, leg, case) -> Plan:
        quadrants = consistent_quadrants(rg)
        r, c = quadrants[0] if quadrants else (0, 0)
        half = 0.5 * self.config.perturb_epsilon
        vA = np.array(state.vA)
        vB = np.array(state.vB)
        a, a_other = rg.indexA[r] - 1, rg.indexA[1 - r] - 1
        b, b_other = rg.indexB[c] - 1, rg.indexB[1 - c] - 1
        vA[a] += half
        vA[a_other] -= half
        vB[b] += half
        vB[b_other] -= half
        logger.debug(f"perturbed off {case.value} point into quadrant ({a + 1},{b + 1})")
        return self._pure_plan(StateV(vA, vB), a, b, leg=leg, case=case)

    def j_weights(self, pairA: Tuple[int, int], pairB: Tuple[int, int]) -> Optional[Tuple[float, float]]:
        """
        Mixing weights that keep both ties: A plays pairA[0] with weight lam, B plays pairB[0] with weight mu.
        Pairs are 0-based. Returns None when a tie cannot be kept.
        """
        A, B = self.game.A, self.game.B
        i, k = pairA
        j, l = pairB
        dB_i = B[i, j] - B[i, l]
        dB_k = B[k, j] - B[k, l]
        dA_j = A[i, j] - A[k, j]
        dA_l = A[i, l] - A[k, l]
        if abs(dB_k - dB_i) < 1e-14 or abs(dA_l - dA_j) < 1e-14:
            return None
        return dB_k / (dB_k - dB_i), dA_l / (dA_l - dA_j)

    def _plan_j_flow(self, state: StateV, tiedA: Tuple[int, ...], tiedB: Tuple[int, ...]) -> Plan:
        n = self.game.n
        tol = self.config.tol_tie
        candidates = []
        for pairA in combinations([k - 1 for k in tiedA], 2):
            for pairB in combinations([k - 1 for k in tiedB], 2):
                weights = self.j_weights(pairA, pairB)
                if weights is None:
                    continue
                lam, mu = weights
                if not (-1e-12 <= lam <= 1 + 1e-12 and -1e-12 <= mu <= 1 + 1e-12):
                    continue
                playA = np.zeros(n)
                playA[pairA[0]], playA[pairA[1]] = lam, 1.0 - lam
                playB = np.zeros(n)
                playB[pairB[0]], playB[pairB[1]] = mu, 1.0 - mu
                playA = np.clip(playA, 0.0, 1.0)
                playB = np.clip(playB, 0.0, 1.0)
                TA = self.game.A @ playB
                TB = playA @ self.game.B
                dropped_ok = all(TA[x - 1] < TA[pairA[0]] - tol for x in tiedA if x - 1 not in pairA) and \
                    all(TB[y - 1] < TB[pairB[0]] - tol for y in tiedB if y - 1 not in pairB)
                if not dropped_ok:
                    continue
                try:
                    rg = restricted_game(self.game, [k + 1 for k in pairA], [k + 1 for k in pairB])
                    if classify_codim2(rg) == Codim2Case.SADDLE:
                        continue
                except ClassificationError:
                    pass
                candidates.append((pairA, pairB, playA, playB))
        if len(candidates) != 1:
            line = f"Z^A_{tiedA} x Z^B_{tiedB}"
            raise AmbiguityError(f"no unique continuation along J from {line} ({len(candidates)} candidates)",
                                 line=line)
        pairA, pairB, playA, playB = candidates[0]
        vA = np.array(state.vA)
        vB = np.array(state.vB)
        _snap(vA, pairA)
        _snap(vB, pairB)
        leg = leg_for_pairs([k + 1 for k in pairA], [k + 1 for k in pairB]) if n == 3 else None
        return Plan(state=StateV(vA, vB), playA=playA, playB=playB, leadersA=pairA, leadersB=pairB,
                    leg=leg, case=Codim2Case.SPIRAL)

    # --- moving ---------------------------------------------------------------------

    def _targets(self, plan: Plan) -> Tuple[np.ndarray, np.ndarray]:
        return self.game.A @ plan.playB, plan.playA @ self.game.B

    def _next_ties(self, plan: Plan) -> Tuple[float, List[Tie]]:
        TA, TB = self._targets(plan)
        ties = _tie_times(plan.state.vA, TA, plan.leadersA, "A") + _tie_times(plan.state.vB, TB, plan.leadersB, "B")
        if not ties:
            return 1.0, []
        s_star = min(tie.s for tie in ties)
        simultaneous = sorted((tie for tie in ties if tie.s - s_star <= self.config.simultaneity),
                              key=lambda tie: (tie.player, tie.catcher))
        return s_star, simultaneous

    def segment(self, plan: Plan, s_limit: float = 1.0) -> Segment:
        """Follows `plan` until the next indifference event (or for at most s_limit)."""
        targets = self._targets(plan)
        s_star, ties = self._next_ties(plan)
        if not ties or s_star > s_limit:
            s = min(s_star, s_limit) if ties else min(1.0, s_limit)
            note = "time limit" if s < 1.0 else "targets reached without a further indifference"
            end = advance(plan.state, targets, s)
            return Segment(plan.state, plan.playA, plan.playB, *targets, s, end,
                           FlowEvent(EventKind.TRUNCATED, note=note), leg=plan.leg)
        end = advance(plan.state, targets, s_star)
        vA, vB = np.array(end.vA), np.array(end.vB)
        for tie in ties:
            group = [k - 1 for k in tie.leaders] + [tie.catcher - 1]
            _snap(vA if tie.player == "A" else vB, group)
        players = {tie.player for tie in ties}
        kind = EventKind.CODIM2_HIT if players == {"A", "B"} else EventKind.SINGLE_INDIFFERENCE
        return Segment(plan.state, plan.playA, plan.playB, *targets, s_star, StateV(vA, vB),
                       FlowEvent(kind, ties=tuple(ties)), leg=plan.leg)

    def step(self, state: StateV) -> Segment:
        """One region crossing from `state`; raises if the flow stops there."""
        plan = self.plan(state)
        if plan.stop is not None:
            raise AmbiguityError(f"flow stops at this state: {plan.stop.label} {plan.stop.note}".strip())
        return self.segment(plan)

    def _remaining_s(self, s_cum: float, rho_cum: float) -> float:
        cfg = self.config
        if math.isinf(cfg.max_time):
            return 1.0
        if cfg.time_scale == "s":
            return max(cfg.max_time - s_cum, 0.0)
        return time_convert_inverse(max(cfg.max_time - rho_cum, 0.0))

    def run(self, init: StateP) -> Trajectory:
        trajectory = Trajectory(game=self.game, initial=init)
        state = utilities(self.game, init)
        s_cum = rho_cum = 0.0
        while len(trajectory.segments) < self.config.max_events:
            plan = self.plan(state)
            if plan.stop is not None:
                trajectory.terminal_events.append(plan.stop)
                break
            if plan.case is not None and trajectory.segments:
                last = trajectory.segments[-1]
                marked = replace(last.end_event, kind=EventKind.CODIM2_HIT, leg=plan.leg, case=plan.case)
                trajectory.segments[-1] = replace(last, end_event=marked)
            remaining = self._remaining_s(s_cum, rho_cum)
            if remaining <= 0.0:
                trajectory.terminal_events.append(FlowEvent(EventKind.TRUNCATED, note="time limit"))
                break
            seg = self.segment(plan, s_limit=min(remaining, 1.0))
            trajectory.segments.append(seg)
            s_cum += seg.duration_s
            rho_cum += seg.duration_rho
            state = seg.end
            if seg.end_event.kind == EventKind.TRUNCATED:
                break
        else:
            trajectory.terminal_events.append(FlowEvent(EventKind.TRUNCATED, note="max_events"))
        logger.debug(f"simulated {len(trajectory.segments)} segments, stop: {trajectory.stop_event.label}")
        return trajectory


def simulate(game: BimatrixGame, init: StateP, config: Optional[SimConfig] = None) -> Trajectory:
    return FlowEngine(game, config).run(init)


def j_flow_step(beta: float, state: StateV, config: Optional[SimConfig] = None) -> Segment:
    """
    One piece of the continuous extension on J: both tied pairs stay tied while
    the players mix, until a third strategy of one player catches up.
    """
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"the flow on J is defined for beta in (0, 1], got {beta}")
    engine = FlowEngine(make_shapley(beta), config or SimConfig(codim2_policy="follow_J"))
    tol = engine.config.tol_tie
    brA = best_response_set(state.vA, tol, "A")
    brB = best_response_set(state.vB, tol, "B")
    if engine.at_equilibrium(state) or (len(brA.indices) == 3 and len(brB.indices) == 3):
        raise NonUniquenessError("genuine non-uniqueness of the flow at the interior equilibrium E")
    if brA.is_strict or brB.is_strict:
        raise PreconditionError(f"state is not on J: A ties {brA.indices}, B ties {brB.indices}")
    return engine.segment(engine._plan_j_flow(state, brA.indices, brB.indices))


def v_from_p(game: BimatrixGame, state: StateP) -> StateV:
    return utilities(game, state)


def _preimage(M: np.ndarray, v: np.ndarray, label: str) -> np.ndarray:
    # solves M p = v together with sum(p) = 1
    n = M.shape[1]
    system = np.vstack([M, np.ones((1, n))])
    rhs = np.concatenate([v, [1.0]])
    p, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    scale = max(1.0, float(np.max(np.abs(rhs))))
    if np.linalg.norm(system @ p - rhs) > 1e-9 * scale:
        raise DomainError(f"{label} utilities {np.round(v, 12).tolist()} are not in the image of the simplex",
                          solution=p)
    if np.any(p < -1e-8):
        raise DomainError(f"{label} utilities correspond to {np.round(p, 12).tolist()}, not a simplex point",
                          solution=p)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def p_from_v(game: BimatrixGame, state: StateV) -> StateP:
    """Mixed strategies behind a utility state: p^B from v^A = A p^B and p^A from v^B = p^A B."""
    pB = _preimage(game.A, np.asarray(state.vA), "player A")
    pA = _preimage(game.B.T, np.asarray(state.vB), "player B")
    return StateP(SimplexPoint(pA), SimplexPoint(pB))
