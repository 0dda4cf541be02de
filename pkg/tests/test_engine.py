"""Unit tests for flow.engine and flow.config: the exact event-driven integrator."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from flow.config import SimConfig
from flow.engine import (EventKind, FlowEngine, advance, j_flow_step, p_from_v, simulate, time_convert,
                         time_convert_inverse, time_to_next_event, v_from_p)
from game.errors import AmbiguityError, DomainError, NonUniquenessError, ParameterError, PreconditionError
from game.game_core import StateP, StateV, interior_equilibrium, make_shapley, random_state, utilities
from geometry.indifference import Codim2Case, RegionLabel
from orbits.orbit_analysis import anticlockwise_orbit, clockwise_orbit
from transitions.transition_graph import SHAPLEY, pattern_match


class TestSimConfig:
    """Tests for the integrator settings."""

    def test_defaults(self):
        """Defaults follow the documented values."""
        config = SimConfig()
        assert config.tol_tie == 1e-9
        assert config.max_events == 10_000
        assert math.isinf(config.max_time)
        assert config.codim2_policy == "follow_J"

    def test_epsilon_must_exceed_tolerance(self):
        """The perturbation has to leave the tie band."""
        with pytest.raises(ValidationError):
            SimConfig(perturb_epsilon=1e-10)

    def test_unknown_field(self):
        """Unknown settings are refused."""
        with pytest.raises(ValidationError):
            SimConfig(max_steps=3)

    def test_positive_tolerances(self):
        """Tolerances must be positive."""
        with pytest.raises(ValidationError):
            SimConfig(tol_tie=0.0)


class TestTime:
    """Tests for the conversion between s-time and original time."""

    def test_zero(self):
        """No time passes in either scale."""
        assert time_convert(0.0) == 0.0

    def test_reference_duration(self):
        """s = 0.31767 is rho = -ln(0.68233)."""
        assert time_convert(0.31767) == pytest.approx(0.38225, abs=1e-5)

    def test_inverse(self):
        """rho = ln 2 is s = 1/2."""
        assert time_convert_inverse(math.log(2.0)) == pytest.approx(0.5, abs=1e-15)

    def test_full_unit(self):
        """Reaching the target takes infinite original time."""
        assert math.isinf(time_convert(1.0))

    def test_out_of_range(self):
        """Durations outside [0, 1] are rejected."""
        with pytest.raises(ParameterError):
            time_convert(1.5)
        with pytest.raises(ParameterError):
            time_convert_inverse(-1.0)


class TestAdvance:
    """Tests for the straight-line motion toward the targets."""

    def setup_method(self):
        self.state = StateV([0.5, 0.3, 0.2], [0.2, 0.5, 0.3])
        self.targets = (np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]))

    def test_no_motion(self):
        """s = 0 leaves the state unchanged."""
        assert advance(self.state, self.targets, 0.0).distance(self.state) == 0.0

    def test_full_motion(self):
        """s = 1 lands on the targets."""
        end = advance(self.state, self.targets, 1.0)
        np.testing.assert_array_equal(end.vA, self.targets[0])
        np.testing.assert_array_equal(end.vB, self.targets[1])

    def test_out_of_range(self):
        """Negative durations are rejected."""
        with pytest.raises(ParameterError):
            advance(self.state, self.targets, -0.1)


class TestTimeToNextEvent:
    """Tests for the closed-form tie times."""

    def test_clockwise_first_leg(self):
        """From Shapley's section at beta = 0 the first tie comes after t1 = 0.31767."""
        orbit = clockwise_orbit(0.0)
        s, ties = time_to_next_event(make_shapley(0.0), orbit.section_state, targetA_col=2, targetB_row=1)
        assert s == pytest.approx(0.31767, abs=1e-5)
        assert s == pytest.approx(orbit.durations[0], abs=1e-12)
        assert [(t.player, t.catcher) for t in ties] == [("A", 2)]

    def test_anticlockwise_first_leg(self):
        """From the anti-Shapley section at beta = 1 the first tie comes after about 0.1206."""
        orbit = anticlockwise_orbit(1.0)
        s, _ = time_to_next_event(make_shapley(1.0), orbit.section_state, targetA_col=2, targetB_row=1)
        assert s == pytest.approx(orbit.durations[0], abs=1e-12)
        assert s == pytest.approx(0.1206, abs=1e-4)

    def test_linear_tie(self):
        """A strategy behind by g that gains at unit rate ties after g / (g + 1)."""
        game = make_shapley(0.0)
        g = 0.1
        state = StateV([0.5, 0.5 - g, 0.0], [0.2, 0.5, 0.3])
        s, ties = time_to_next_event(game, state, targetA_col=2, targetB_row=1)
        assert s == pytest.approx(g / (g + 1.0), abs=1e-15)
        assert ties[0].pair == (1, 2)

    def test_wrong_targets(self):
        """Targets must belong to the currently preferred strategies."""
        with pytest.raises(PreconditionError):
            time_to_next_event(make_shapley(0.5), StateV([0.5, 0.6, 0.4], [0.2, 0.1, 0.2]), 1, 1)


class TestPlan:
    """Tests for the decisions taken at ties."""

    def test_crossing_point_is_passed(self):
        """At a T point at beta = 0.5 the flow continues into the consistent quadrant."""
        engine = FlowEngine(make_shapley(0.5), SimConfig(codim2_policy="abort"))
        plan = engine.plan(StateV([0.3, 0.6, 0.6], [0.2, 0.2, 0.1]))
        assert plan.stop is None
        assert plan.case == Codim2Case.CROSSING
        assert plan.playA[1] == 1.0 and plan.playB[0] == 1.0

    def test_spiral_point_follows_j(self):
        """On the second J leg the players mix so that both ties are kept."""
        engine = FlowEngine(make_shapley(0.5), SimConfig(codim2_policy="follow_J"))
        plan = engine.plan(StateV([0.6, 0.6, 0.3], [0.2, 0.2, 0.1]))
        assert plan.leg.index == 2
        np.testing.assert_allclose(plan.playA, [0.25, 0.75, 0.0])
        np.testing.assert_allclose(plan.playB, [2 / 3, 1 / 3, 0.0])

    def test_spiral_point_abort(self):
        """Under the abort policy a spiral point stops the run."""
        engine = FlowEngine(make_shapley(0.5), SimConfig(codim2_policy="abort"))
        plan = engine.plan(StateV([0.6, 0.6, 0.3], [0.2, 0.2, 0.1]))
        assert plan.stop.kind == EventKind.CODIM2_HIT
        assert plan.stop.case == Codim2Case.SPIRAL

    def test_saddle_is_a_discontinuity(self):
        """At a saddle point the continuation is not unique."""
        engine = FlowEngine(make_shapley(-0.5), SimConfig(codim2_policy="follow_J"))
        plan = engine.plan(StateV([0.1, 0.2, 0.2], [0.6, 0.6, 0.3]))
        assert plan.stop.kind == EventKind.DISCONTINUITY_HIT

    def test_saddle_perturbed(self):
        """The perturb policy moves the state into the first consistent quadrant."""
        config = SimConfig(codim2_policy="perturb")
        engine = FlowEngine(make_shapley(-0.5), config)
        plan = engine.plan(StateV([0.1, 0.2, 0.2], [0.6, 0.6, 0.3]))
        assert plan.stop is None
        assert int(np.argmax(plan.playA)) == 1 and int(np.argmax(plan.playB)) == 1
        assert plan.state.vA[1] - plan.state.vA[2] == pytest.approx(config.perturb_epsilon)
        assert plan.state.vB[1] - plan.state.vB[0] == pytest.approx(config.perturb_epsilon)
        assert plan.state.vA.sum() == pytest.approx(0.5)


class TestSimulate:
    """Tests for whole trajectories."""

    def test_converges_to_shapley_cycle(self):
        """At beta = -0.5 a random start ends up repeating Shapley's pattern."""
        rng = np.random.default_rng(5)
        trajectory = simulate(make_shapley(-0.5), random_state(3, rng), SimConfig(max_events=200))
        assert pattern_match(trajectory.regions(), SHAPLEY, min_repeats=3)

    def test_periodic_orbit_closes(self):
        """Started on the clockwise orbit at beta = 0.5 the run closes after six regions."""
        orbit = clockwise_orbit(0.5)
        game = make_shapley(0.5)
        trajectory = simulate(game, p_from_v(game, orbit.section_state), SimConfig(max_events=6))
        assert len(trajectory.segments) == 6
        assert trajectory.final_state.distance(orbit.section_state) < 1e-9
        durations = [seg.duration_s for seg in trajectory.segments]
        np.testing.assert_allclose(durations, list(orbit.durations) * 3, atol=1e-9)
        assert trajectory.stop_event.note == "max_events"

    def test_start_at_equilibrium(self):
        """E is stationary: one EquilibriumReached event and no segment."""
        game = make_shapley(0.3)
        trajectory = simulate(game, interior_equilibrium(game))
        assert trajectory.segments == []
        assert [e.kind for e in trajectory.events] == [EventKind.EQUILIBRIUM_REACHED]

    def test_conservation(self):
        """Utility sums are constant along the flow."""
        rng = np.random.default_rng(2)
        game = make_shapley(0.4)
        trajectory = simulate(game, random_state(3, rng), SimConfig(max_events=100))
        for seg in trajectory.segments:
            assert seg.end.vA.sum() == pytest.approx(1.4, abs=1e-9)
            assert seg.end.vB.sum() == pytest.approx(0.6, abs=1e-9)

    def test_segments_are_straight(self):
        """Each segment is the straight line from its start to its end, and the next one starts there."""
        rng = np.random.default_rng(6)
        trajectory = simulate(make_shapley(0.3), random_state(3, rng), SimConfig(max_events=80))
        for seg in trajectory.segments:
            end = seg.at(seg.duration_s)
            assert end.distance(seg.end) < 1e-12
            midpoint = 0.5 * (seg.start.as_vector() + end.as_vector())
            assert np.max(np.abs(seg.at(0.5 * seg.duration_s).as_vector() - midpoint)) < 1e-12
        for before, after in zip(trajectory.segments, trajectory.segments[1:]):
            assert before.end.distance(after.start) <= 1e-9

    def test_events_are_exact(self):
        """A pure segment stops where its catcher has just reached the leader, not before or after."""
        rng = np.random.default_rng(7)
        config = SimConfig(max_events=80)
        trajectory = simulate(make_shapley(-0.5), random_state(3, rng), config)
        checked = 0
        for seg in trajectory.segments:
            if not seg.is_pure or seg.end_event.kind != EventKind.SINGLE_INDIFFERENCE:
                continue
            tie = seg.end_event.ties[0]
            leader, catcher = tie.leaders[0] - 1, tie.catcher - 1
            at_start = seg.start.vA if tie.player == "A" else seg.start.vB
            at_end = seg.at(seg.duration_s)
            at_end = at_end.vA if tie.player == "A" else at_end.vB
            assert at_start[leader] - at_start[catcher] > config.tol_tie
            assert abs(at_end[leader] - at_end[catcher]) < 1e-12
            checked += 1
        assert checked > 50

    def test_events_alternate_regions(self):
        """Consecutive pure segments lie in different regions."""
        rng = np.random.default_rng(4)
        trajectory = simulate(make_shapley(-0.3), random_state(3, rng), SimConfig(max_events=50))
        regions = [r for r in trajectory.regions() if isinstance(r, RegionLabel)]
        assert all(a != b for a, b in zip(regions, regions[1:]))

    def test_time_limit(self):
        """A finite horizon truncates the run at exactly that s-time."""
        rng = np.random.default_rng(8)
        trajectory = simulate(make_shapley(-0.5), random_state(3, rng), SimConfig(max_time=0.5))
        s, _ = trajectory.cumulative_times()
        assert s[-1] == pytest.approx(0.5, abs=1e-12)
        assert trajectory.stop_event.kind == EventKind.TRUNCATED

    def test_non_transversal_line(self):
        """At beta = 0 both of A's tied strategies can gain at the same rate."""
        init = StateP.from_arrays([0.2, 0.6, 0.2], [0.4, 0.4, 0.2])
        with pytest.raises(AmbiguityError) as info:
            simulate(make_shapley(0.0), init)
        assert info.value.line == "Z^A_{1,2}"


class TestJFlowStep:
    """Tests for the continuous extension on J."""

    def test_at_equilibrium(self):
        """At E the flow on J is not unique."""
        state = StateV(np.full(3, 0.6), np.full(3, 0.2 / 3))
        with pytest.raises(NonUniquenessError):
            j_flow_step(0.8, state)

    def test_parameter_range(self):
        """The flow on J is defined for beta in (0, 1] only."""
        with pytest.raises(ParameterError):
            j_flow_step(0.0, StateV([0.6, 0.6, 0.3], [0.2, 0.2, 0.1]))

    def test_not_on_j(self):
        """Strict preferences are not on J."""
        with pytest.raises(PreconditionError):
            j_flow_step(0.5, StateV([0.7, 0.5, 0.3], [0.2, 0.2, 0.1]))

    def test_ties_are_kept(self):
        """Along a J leg both tied pairs stay tied."""
        segment = j_flow_step(0.5, StateV([0.6, 0.6, 0.3], [0.2, 0.2, 0.1]))
        for s in (0.25, 0.5, 1.0):
            state = segment.at(s * segment.duration_s)
            assert state.vA[0] == pytest.approx(state.vA[1], abs=1e-12)
            assert state.vB[0] == pytest.approx(state.vB[1], abs=1e-12)


class TestUtilityInverse:
    """Tests for p_from_v and v_from_p."""

    def test_equilibrium_utilities(self):
        """E's utilities come from the barycenters."""
        p = p_from_v(make_shapley(0.2), StateV(np.full(3, 0.4), np.full(3, 0.8 / 3)))
        np.testing.assert_allclose(p.pA.components, np.full(3, 1 / 3), atol=1e-12)
        np.testing.assert_allclose(p.pB.components, np.full(3, 1 / 3), atol=1e-12)

    @pytest.mark.parametrize("beta", [-0.5, 0.3, 0.9])
    def test_round_trip(self, beta):
        """Utilities of random mixed strategies invert back to them."""
        game = make_shapley(beta)
        rng = np.random.default_rng(1)
        for _ in range(30):
            p = random_state(3, rng)
            back = p_from_v(game, v_from_p(game, p))
            assert np.max(np.abs(back.pA.components - p.pA.components)) < 1e-10
            assert np.max(np.abs(back.pB.components - p.pB.components)) < 1e-10

    def test_outside_simplex(self):
        """vA = (2, 0, 0) at beta = 0 needs pB = (2, 0, 0)."""
        with pytest.raises(DomainError):
            p_from_v(make_shapley(0.0), StateV([2.0, 0.0, 0.0], [0.3, 0.3, 0.4]))

    def test_utilities_agree(self):
        """v_from_p is the utility map."""
        game = make_shapley(0.6)
        p = random_state(3, np.random.default_rng(9))
        assert v_from_p(game, p).distance(utilities(game, p)) == 0.0
