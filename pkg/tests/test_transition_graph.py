"""Unit tests for transitions.transition_graph: diagrams, itinerary validation and named patterns."""

import numpy as np
import pytest

from evaluation.evaluation_utils import simulate_itineraries
from game.errors import ParameterError
from geometry.indifference import J_LEGS, RegionLabel
from transitions.transition_graph import (ANTI_SHAPLEY, CORNER_ARCS, DEGENERATE_EXITS, FACE_ARCS, PATTERNS, SHAPLEY,
                                          CornerType, Regime, derive_diagram, diagram_for, pattern_match,
                                          region_number, validate_itinerary, witness_arc, witness_coverage,
                                          witnessed_arcs)


class TestDiagram:
    """Tests for the allowed moves between regions."""

    @pytest.mark.parametrize("beta", [-0.5, 0.0, 0.5])
    def test_shapley_cycle_everywhere(self, beta):
        """Shapley's cycle is a path of the diagram for every regime."""
        assert diagram_for(beta).realizes(SHAPLEY)

    def test_anti_shapley_needs_positive_beta(self):
        """(1,2) -> (3,2) only exists when A gains beta by switching."""
        assert not diagram_for(-0.5).realizes(ANTI_SHAPLEY)
        assert diagram_for(0.5).realizes(ANTI_SHAPLEY)
        assert not diagram_for(-0.5).has_arc(RegionLabel(1, 2), RegionLabel(3, 2))

    def test_regimes(self):
        """The sign of beta names the regime."""
        assert diagram_for(-0.3).regime == Regime.NEGATIVE
        assert diagram_for(0.0).regime == Regime.ZERO
        assert diagram_for(0.3).regime == Regime.POSITIVE

    def test_ambiguous_faces_at_zero(self):
        """Zero gains at beta = 0 leave faces without a crossing rule."""
        diagram = diagram_for(0.0)
        assert (RegionLabel(1, 2), RegionLabel(3, 2)) in diagram.ambiguous_faces
        assert not diagram_for(0.5).ambiguous_faces

    def test_no_corner_arcs_for_negative_beta(self):
        """Every transversal corner for beta < 0 is passed through a face arc as well."""
        assert not diagram_for(-0.5).corner_arcs

    def test_corner_types(self):
        """J legs spiral and T legs are transversal for beta > 0."""
        diagram = diagram_for(0.5)
        assert all(diagram.corner_types[leg.name] == CornerType.SPIRAL for leg in J_LEGS)
        assert CornerType.TRANSVERSAL in diagram.corner_types.values()

    def test_graph(self):
        """Nine region nodes, one edge per arc."""
        diagram = diagram_for(0.5)
        G = diagram.graph()
        assert G.number_of_nodes() == 9
        assert G.number_of_edges() == len(diagram.all_arcs)
        assert G.graph["regime"] == "beta_positive"

    def test_payload(self):
        """The payload lists arcs as pairs of region names."""
        payload = diagram_for(0.5).payload()
        assert set(payload) == {"regime", "beta", "arcs", "corner_arcs", "ambiguous_faces", "corner_types"}
        assert all(len(arc) == 2 for arc in payload["arcs"])

    @pytest.mark.parametrize("beta", [-1.0, 1.5])
    def test_out_of_range(self, beta):
        """beta must lie in (-1, 1]."""
        with pytest.raises(ParameterError):
            diagram_for(beta)


class TestTranscription:
    """The literal arc sets against the payoff signs and against the simulator."""

    def test_arc_counts(self):
        """Eighteen face arcs off beta = 0, twelve at beta = 0, three corner arcs for beta > 0."""
        assert len(FACE_ARCS[Regime.NEGATIVE]) == 18
        assert len(FACE_ARCS[Regime.ZERO]) == 12
        assert len(FACE_ARCS[Regime.POSITIVE]) == 18
        assert not CORNER_ARCS[Regime.NEGATIVE] and not CORNER_ARCS[Regime.ZERO]
        assert len(CORNER_ARCS[Regime.POSITIVE]) == 3

    @pytest.mark.parametrize("beta", [-0.9, -0.5, -0.1, 0.0, 0.1, 0.5, 0.9, 1.0])
    def test_matches_payoff_signs(self, beta):
        """The transcribed diagram equals the one derived from the payoff matrices."""
        transcribed, derived = diagram_for(beta), derive_diagram(beta)
        assert transcribed.arcs == derived.arcs
        assert transcribed.corner_arcs == derived.corner_arcs
        assert transcribed.ambiguous_faces == derived.ambiguous_faces
        assert transcribed.corner_types == derived.corner_types

    def test_degenerate_exits_at_one(self):
        """At beta = 1 the horizontal exits of the off-cycle regions are flagged, not allowed."""
        diagram = diagram_for(1.0)
        assert not diagram.arcs & DEGENERATE_EXITS
        assert DEGENERATE_EXITS <= diagram.ambiguous_faces
        assert diagram.realizes(ANTI_SHAPLEY)

    @pytest.mark.parametrize("beta", [-0.5, 0.0, 0.5, 1.0])
    def test_every_arc_witnessed(self, beta):
        """Each arc, corner arcs included, is followed by a simulated run started next to its face."""
        diagram = diagram_for(beta)
        seen, unwitnessed = witnessed_arcs(diagram)
        assert not unwitnessed
        assert seen == set(diagram.all_arcs)

    def test_reversed_arc_not_witnessed(self):
        """A run placed before a face in the wrong direction goes the other way."""
        assert witness_arc(-0.5, (RegionLabel(1, 2), RegionLabel(2, 2)))
        assert not witness_arc(-0.5, (RegionLabel(2, 2), RegionLabel(1, 2)))

    def test_corner_arc_witnessed(self):
        """The T corner is crossed from (3,2) straight into (2,1)."""
        assert witness_arc(0.5, (RegionLabel(3, 2), RegionLabel(2, 1)))


class TestValidation:
    """Tests for validate_itinerary."""

    def test_missing_arc(self):
        """A move along an absent arc is reported with its position."""
        itinerary = [RegionLabel(1, 3), RegionLabel(1, 2), RegionLabel(3, 2)]
        result = validate_itinerary(itinerary, diagram_for(-0.5))
        assert not result.ok
        assert result.index == 2

    def test_shapley_cycle(self):
        """Two turns of Shapley's cycle are valid."""
        assert validate_itinerary(list(SHAPLEY.sequence) * 2, diagram_for(-0.5)).ok

    @pytest.mark.parametrize("beta", [-0.5, 0.3, 0.8])
    def test_simulated_runs(self, beta):
        """Itineraries of the simulator never leave the diagram."""
        diagram = diagram_for(beta)
        itineraries, _ = simulate_itineraries(beta, 10, 100, np.random.default_rng(5))
        assert itineraries
        for itinerary in itineraries:
            result = validate_itinerary(itinerary, diagram)
            assert result.ok, result.reason

    def test_witness_coverage(self):
        """Seen and unseen arcs partition the diagram."""
        diagram = diagram_for(-0.5)
        seen, missing = witness_coverage(diagram, [list(SHAPLEY.sequence) * 2])
        assert len(seen) == 6
        assert seen | missing == set(diagram.all_arcs)
        assert not seen & missing


class TestPatterns:
    """Tests for pattern_match and region numbering."""

    def test_shifted_repeats(self):
        """Repeats are matched up to a cyclic shift."""
        itinerary = [RegionLabel(3, 3)] + list(SHAPLEY.sequence[2:]) + list(SHAPLEY.sequence) * 3
        assert pattern_match(itinerary, SHAPLEY, min_repeats=3)
        assert not pattern_match(itinerary, ANTI_SHAPLEY, min_repeats=3)

    def test_too_short(self):
        """Fewer repeats than requested do not match."""
        assert not pattern_match(list(SHAPLEY.sequence) * 3, SHAPLEY, min_repeats=4)

    def test_broken_tail(self):
        """A foreign region in the tail breaks the pattern."""
        itinerary = list(SHAPLEY.sequence) * 3 + [RegionLabel(2, 1)]
        assert not pattern_match(itinerary, SHAPLEY, min_repeats=3)

    def test_registry(self):
        """Patterns are looked up by name."""
        assert PATTERNS["Shapley"] is SHAPLEY
        assert PATTERNS["AntiShapley"] is ANTI_SHAPLEY

    def test_region_number(self):
        """Regions of the cycle are numbered 1..6; the others have no number."""
        assert region_number(RegionLabel(1, 2)) == 1
        assert region_number(RegionLabel(1, 1)) == 6
        assert region_number(RegionLabel(2, 1)) is None
