"""Tests for the invariant suite helpers and its cheaper checks."""

import json

import numpy as np

from evaluation.evaluation_utils import avg, run_check, simulate_itineraries
from evaluation.run_evaluation import (SUITE_SIZES, check_anchor_midpoints, check_closure, check_cubic_signs,
                                       check_cycles, check_flow_invariants, check_game_core, check_j_orbit,
                                       check_j_recursion, check_leg_classes, check_reference_orbits,
                                       check_sigma_degeneracy, check_tau, check_utility_maps)
from flow.export import write_json
from game.errors import ExistenceError
from geometry.indifference import RegionLabel


class TestRunCheck:
    """Tests for run_check."""

    def test_passing(self):
        """A passing invariant keeps its detail."""
        result = run_check("ok", lambda: (True, {"x": 1}))
        assert result.passed
        assert result.detail == {"x": 1}

    def test_library_error(self):
        """A library error fails that invariant only."""
        def broken():
            raise ExistenceError("gone")

        result = run_check("broken", broken)
        assert not result.passed
        assert result.error == "ExistenceError: gone"

    def test_avg(self):
        """avg of an empty list is zero."""
        assert avg([]) == 0.0
        assert avg([True, False]) == 0.5


class TestSimulateItineraries:
    """Tests for the batch of simulated itineraries."""

    def test_counts(self):
        """Every start gives an itinerary away from beta = 0."""
        itineraries, ambiguous = simulate_itineraries(-0.5, 4, 30, np.random.default_rng(0))
        assert len(itineraries) == 4
        assert ambiguous == 0
        assert all(isinstance(step, RegionLabel) for step in itineraries[0])


class TestChecks:
    """The cheaper invariants of the suite hold."""

    def test_game_core(self):
        """Transversality, the equilibrium and the zero-sum certificate."""
        passed, detail = check_game_core()
        assert passed, detail

    def test_leg_classes(self):
        """J legs spiral and T legs are crossed for beta > 0."""
        passed, detail = check_leg_classes()
        assert passed, detail

    def test_cubic_signs(self):
        """The sign patterns of both cubics."""
        passed, detail = check_cubic_signs(SUITE_SIZES["quick"])
        assert passed, detail

    def test_reference_orbits(self):
        """Reference sections and durations of both symmetric orbits."""
        passed, detail = check_reference_orbits()
        assert passed, detail

    def test_closure(self):
        """Both symmetric orbits close on their grids."""
        passed, detail = check_closure()
        assert passed, detail

    def test_sigma_degeneracy(self):
        """Both orbits shrink to E next to sigma."""
        passed, detail = check_sigma_degeneracy()
        assert passed, detail

    def test_j_orbit(self):
        """Diameter ratios and closure of the orbit on J."""
        passed, detail = check_j_orbit()
        assert passed, detail

    def test_cycles(self):
        """Named cycles are realized in the right regimes."""
        passed, detail = check_cycles()
        assert passed, detail

    def test_utility_maps(self):
        """p and v round trip and best responses ignore shifts and scalings."""
        passed, detail = check_utility_maps(np.random.default_rng(0))
        assert passed, detail

    def test_anchor_midpoints(self):
        """At beta = 0 every R anchor is a midpoint of an edge."""
        passed, detail = check_anchor_midpoints()
        assert passed, detail

    def test_flow_invariants(self):
        """Sums are conserved and segments are straight and end on their ties."""
        passed, detail = check_flow_invariants(SUITE_SIZES["quick"], np.random.default_rng(1))
        assert passed, detail
        assert detail["stopped"] == 0

    def test_j_recursion(self):
        """The flow on J follows the closed-form recursion."""
        passed, detail = check_j_recursion(SUITE_SIZES["quick"], np.random.default_rng(2))
        assert passed, detail

    def test_tau(self):
        """tau and a period-doubling residual that is linear in the distance."""
        passed, detail = check_tau()
        assert passed, detail
        assert all(e <= 1e-10 for _, e in detail["excess_over_linear"])


class TestSuiteLog:
    """The suite log is plain JSON."""

    def test_log_with_spectra(self, tmp_path):
        """Complex eigenvalues in a detail do not stop the log from being written."""
        path = tmp_path / "log.json"
        results = [run_check("spectra", lambda: (True, {"eigenvalues": np.array([0.5 + 0.1j, 0.5 - 0.1j])}))]
        write_json([{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results], str(path))
        payload = json.loads(path.read_text(encoding="utf-8"))
        assert payload[0]["detail"]["eigenvalues"] == [[0.5, 0.1], [0.5, -0.1]]
