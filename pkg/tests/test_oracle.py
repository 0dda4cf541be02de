"""The brute-force 2x2 oracle must agree with the sign test of classify_codim2."""

import numpy as np
import pytest

from game.game_core import make_shapley
from geometry.indifference import J_LEGS, T_LEGS, Codim2Case, RestrictedGame2x2, classify_codim2, restricted_game
from geometry.oracle import CONDITIONING, oracle_case, random_restricted_game


def game2x2(A, B):
    return RestrictedGame2x2(np.array(A, dtype=float), np.array(B, dtype=float), (1, 2), (1, 2))


class TestOracleCase:
    """Tests for oracle_case on hand-made games."""

    def test_matching_pennies_spirals(self):
        """A wants to match and B to mismatch: orbits spiral into E."""
        rg = game2x2([[1, 0], [0, 1]], [[0, 1], [1, 0]])
        assert oracle_case(rg) == Codim2Case.SPIRAL

    def test_coordination_is_saddle(self):
        """Both want to match: two corners attract."""
        rg = game2x2([[1, 0], [0, 1]], [[1, 0], [0, 1]])
        assert oracle_case(rg) == Codim2Case.SADDLE

    def test_dominant_row_crosses(self):
        """A strictly dominant row sends every start to the same corner."""
        rg = game2x2([[2, 1], [0, -1]], [[1, 0], [0, 1]])
        assert oracle_case(rg) == Codim2Case.CROSSING


class TestOracleAgreement:
    """The oracle reproduces the sign test on the pieces of Z* of the family."""

    @pytest.mark.parametrize("beta", [-0.5, 0.5])
    def test_shapley_pairs(self, beta):
        """Every J and T leg is classified alike by both methods."""
        game = make_shapley(beta)
        for leg in J_LEGS + T_LEGS:
            rg = restricted_game(game, leg.pairA, leg.pairB)
            assert oracle_case(rg) == classify_codim2(rg), leg.name

    def test_random_games_are_conditioned(self):
        """Sampled games keep every preference difference away from zero."""
        rng = np.random.default_rng(3)
        for _ in range(20):
            dA, dB = random_restricted_game(rng).preference_differences()
            assert np.all(np.abs(dA) > CONDITIONING)
            assert np.all(np.abs(dB) > CONDITIONING)
