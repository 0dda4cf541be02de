"""Unit tests for the closed-form symmetric orbits and their cubics."""

import numpy as np
import pytest

from game.errors import ExistenceError, ParameterError, SearchError
from game.game_core import SIGMA
from orbits.cubics import anticlockwise_cubic, bracketed_root, clockwise_cubic, isolate_roots
from orbits.orbit_analysis import (OrbitKind, anticlockwise_orbit, clockwise_orbit, equilibrium_state, orbit_for,
                                   orbit_payload)


class TestCubics:
    """Tests for the cubics fixing the section of each orbit."""

    @pytest.mark.parametrize("beta", np.linspace(-0.99, 0.99, 25))
    def test_clockwise_signs(self, beta):
        """f(0) = -1-beta < 0 and f(1) = beta^3+beta^2+beta+1 > 0."""
        cubic = clockwise_cubic(beta)
        assert cubic(0.0) == pytest.approx(-1 - beta)
        assert cubic(1.0) == pytest.approx(beta ** 3 + beta ** 2 + beta + 1)
        assert cubic(0.0) < 0 < cubic(1.0)

    @pytest.mark.parametrize("beta", [0.2, 0.5, SIGMA, 0.8, 1.0])
    def test_anticlockwise_signs(self, beta):
        """Negative at 0, positive at 1/3 and negative again at 1."""
        cubic = anticlockwise_cubic(beta)
        assert cubic(0.0) == pytest.approx(-beta ** 2)
        assert cubic(1.0 / 3.0) == pytest.approx(2 * beta ** 3 / 9 + 1 / 9)
        assert cubic(1.0) < 0

    def test_clockwise_root_at_zero(self):
        """At beta = 0 the root is n1 of Shapley's orbit."""
        nu = bracketed_root(clockwise_cubic(0.0), 0.0, 1.0)
        assert nu == pytest.approx(0.59441, abs=1e-5)
        assert abs(clockwise_cubic(0.0)(nu)) < 1e-12

    def test_three_anticlockwise_roots(self):
        """Two roots in (0, 1) and one beyond 1."""
        roots = isolate_roots(anticlockwise_cubic(1.0))
        assert len(roots) == 3
        assert 0 < roots[0] < 1 / 3 < roots[1] < 1 < roots[2]
        assert 0.155 <= roots[0] < 0.156

    def test_no_sign_change(self):
        """A bracket without a sign change is a search error."""
        with pytest.raises(SearchError):
            bracketed_root(clockwise_cubic(0.0), 0.7, 1.0)


class TestClockwiseOrbit:
    """Tests for Shapley's clockwise orbit."""

    def test_section_at_zero(self):
        """n = (0.594, 0.129, 0.277) and m = (0.405, 0.405, 0.188)."""
        orbit = clockwise_orbit(0.0)
        assert orbit.kind == OrbitKind.CLOCKWISE
        np.testing.assert_allclose(orbit.section_n, [0.594, 0.129, 0.277], atol=1e-3)
        np.testing.assert_allclose(orbit.section_m, [0.405, 0.405, 0.188], atol=1e-3)

    def test_durations_at_zero(self):
        """The first leg lasts 0.31767 in s-time."""
        orbit = clockwise_orbit(0.0)
        assert orbit.durations[0] == pytest.approx(0.31767, abs=1e-5)
        assert len(orbit.full_path) == 6
        assert orbit.period_s == pytest.approx(3 * sum(orbit.durations), abs=1e-9)

    @pytest.mark.parametrize("beta", [-0.9, -0.5, 0.0, 0.3, 0.6])
    def test_closure(self, beta):
        """Six simulated segments bring the section back to itself."""
        orbit = clockwise_orbit(beta)
        assert orbit.closure_residual <= 1e-8
        assert orbit.full_path[-1].end.distance(orbit.section_state) <= 1e-8

    def test_path_is_pure(self):
        """Every segment of the orbit has pure plays."""
        orbit = clockwise_orbit(-0.5)
        assert all(seg.is_pure for seg in orbit.full_path)

    def test_shrinks_at_sigma(self):
        """Just below the golden mean the orbit sits next to E."""
        orbit = clockwise_orbit(SIGMA - 1e-3)
        assert orbit.diameter < 1e-3
        assert orbit.section_state.distance(equilibrium_state(SIGMA - 1e-3)) < 1e-3

    @pytest.mark.parametrize("beta", [SIGMA, 0.7, 1.0])
    def test_absent_beyond_sigma(self, beta):
        """The clockwise orbit no longer exists for beta >= sigma."""
        with pytest.raises(ExistenceError):
            clockwise_orbit(beta)

    def test_parameter_range(self):
        """beta = -1 is outside the family."""
        with pytest.raises(ParameterError):
            clockwise_orbit(-1.0)


class TestAnticlockwiseOrbit:
    """Tests for the anti-Shapley orbit."""

    def test_section_at_one(self):
        """mu = 0.155.., n = (0.844, 0.449, 0.706), m = (-0.311, 0.155, 0.155)."""
        orbit = anticlockwise_orbit(1.0)
        assert 0.155 <= orbit.root < 0.156
        np.testing.assert_allclose(orbit.section_n, [0.844, 0.449, 0.706], atol=1e-3)
        np.testing.assert_allclose(orbit.section_m, [-0.311, 0.155, 0.155], atol=1e-3)

    def test_durations_at_one(self):
        """(t1, t2) = (0.12060, 0.39493)."""
        orbit = anticlockwise_orbit(1.0)
        np.testing.assert_allclose(orbit.durations, [0.12060, 0.39493], atol=1e-4)

    @pytest.mark.parametrize("beta", [0.65, 0.8, 0.95, 1.0])
    def test_closure(self, beta):
        """The anticlockwise orbit closes after six segments."""
        assert anticlockwise_orbit(beta).closure_residual <= 1e-8

    def test_shrinks_at_sigma(self):
        """Just above the golden mean the orbit sits next to E."""
        assert anticlockwise_orbit(SIGMA + 1e-3).diameter < 1e-3

    @pytest.mark.parametrize("beta", [0.0, 0.5, SIGMA])
    def test_absent_below_sigma(self, beta):
        """No anticlockwise orbit for beta <= sigma."""
        with pytest.raises(ExistenceError):
            anticlockwise_orbit(beta)

    def test_parameter_range(self):
        """beta above 1 is outside the family."""
        with pytest.raises(ParameterError):
            anticlockwise_orbit(1.2)


class TestOrbitFor:
    """Tests for the kind dispatch and the JSON payload."""

    def test_dispatch(self):
        """Kinds are named in lower case."""
        assert orbit_for("clockwise", 0.0).kind == OrbitKind.CLOCKWISE
        assert orbit_for("anticlockwise", 0.9).kind == OrbitKind.ANTICLOCKWISE

    def test_unknown_kind(self):
        """Other kinds are refused."""
        with pytest.raises(ParameterError):
            orbit_for("spiral", 0.0)

    def test_payload(self):
        """The payload lists the section, durations and the six segments."""
        payload = orbit_payload(clockwise_orbit(0.0))
        assert payload["kind"] == "Clockwise"
        assert payload["t1"] == pytest.approx(0.31767, abs=1e-5)
        assert len(payload["path"]) == 6
        assert set(payload["path"][0]) == {"A", "B", "duration_s"}
