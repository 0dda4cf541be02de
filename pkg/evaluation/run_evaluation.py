import logging
from typing import Dict, List, Optional

import numpy as np
from tqdm import tqdm

from evaluation.evaluation_utils import CheckResult, avg, run_check, simulate_itineraries
from flow.config import SimConfig
from flow.engine import EventKind, p_from_v, simulate, v_from_p
from flow.export import write_json
from game.errors import FictitiousPlayError
from game.game_core import SIGMA, best_response_set, check_transversality, interior_equilibrium, make_shapley, \
    random_state, utilities, zero_sum_certificate
from geometry.indifference import J_LEGS, T_LEGS, Codim2Case, classify_codim2, indifference_anchors, restricted_game
from geometry.oracle import oracle_case, random_restricted_game
from orbits.cubics import anticlockwise_cubic, clockwise_cubic
from orbits.j_orbit import diameter_ratios, j_map_derivative0, j_map_F, j_map_simulated, j_orbit
from orbits.orbit_analysis import anticlockwise_orbit, clockwise_orbit
from orbits.return_map import (attraction_check, check_fixed_point, composition_gap, equilibrium_z, first_return,
                               iterate_to_fixed_point, line_preservation, maps_into_interior)
from orbits.stability import (StabilityClass, find_tau, period_doubling_excess, period_doubling_residuals,
                              stability_matrix)
from transitions.transition_graph import (ANTI_SHAPLEY, SHAPLEY, derive_diagram, diagram_for, pattern_match,
                                          validate_itinerary, witness_coverage, witnessed_arcs)

logger = logging.getLogger(__name__)

SUITE_SIZES: Dict[str, Dict[str, int]] = {
    "full": {"oracle_random": 500, "attraction_starts": 500, "itineraries": 1000, "chaotic_starts": 20,
             "cubic_samples": 100, "flow_starts": 100, "ambiguity_starts": 1000, "j_pairs": 100,
             "return_samples": 20, "return_iterates": 100},
    "quick": {"oracle_random": 20, "attraction_starts": 20, "itineraries": 70, "chaotic_starts": 4,
              "cubic_samples": 20, "flow_starts": 10, "ambiguity_starts": 40, "j_pairs": 20,
              "return_samples": 5, "return_iterates": 10},
}
SOUNDNESS_BETAS = (-0.9, -0.5, 0.0, 0.3, 0.6, 0.8, 0.95)
ORACLE_BETAS = (-0.9, -0.5, -0.1, 0.1, 0.5, 0.9)
ATTRACTION_BETAS = (-0.9, -0.5, 0.0)
FLOW_BETAS = (-0.5, 0.3, 0.8)
UNIQUENESS_BETAS = (0.2, 0.5, 0.7, 0.9)


# --- game core and geometry ---------------------------------------------------------------

def check_game_core():
    betas = [b for b in np.linspace(-0.9, 0.95, 20) if abs(b) > 1e-12]
    transversal = all(check_transversality(make_shapley(b))[0] for b in betas)
    fails_at_zero = not check_transversality(make_shapley(0.0))[0]
    worst_e = 0.0
    for b in betas:
        E = utilities(make_shapley(b), interior_equilibrium(make_shapley(b)))
        worst_e = max(worst_e, float(np.max(np.abs(E.vA - (1 + b) / 3))), float(np.max(np.abs(E.vB - (1 - b) / 3))))
    certificate = zero_sum_certificate(SIGMA)
    passed = transversal and fails_at_zero and worst_e < 1e-10 and certificate < 1e-12
    return passed, {"transversal_off_zero": transversal, "non_transversal_at_zero": fails_at_zero,
                    "equilibrium_error": worst_e, "zero_sum_certificate_sigma": certificate}


def check_leg_classes():
    wrong = []
    for b in (0.1, 0.5, 0.9):
        game = make_shapley(b)
        for leg in J_LEGS:
            if classify_codim2(restricted_game(game, leg.pairA, leg.pairB)) != Codim2Case.SPIRAL:
                wrong.append((b, leg.name))
        for leg in T_LEGS:
            if classify_codim2(restricted_game(game, leg.pairA, leg.pairB)) != Codim2Case.CROSSING:
                wrong.append((b, leg.name))
    return not wrong, {"misclassified": wrong}


def check_oracle(sizes, rng, progress):
    mismatches = []
    games = []
    for b in ORACLE_BETAS:
        game = make_shapley(b)
        games += [(f"beta={b} {leg.name}", restricted_game(game, leg.pairA, leg.pairB)) for leg in J_LEGS + T_LEGS]
    games += [(f"random {k}", random_restricted_game(rng)) for k in range(sizes["oracle_random"])]
    for label, rg in tqdm(games, disable=not progress, desc="oracle"):
        expected = classify_codim2(rg)
        found = oracle_case(rg)
        if expected != found:
            mismatches.append({"game": label, "sign_test": expected.value, "oracle": found.value})
    return not mismatches, {"games": len(games), "mismatches": mismatches}


def check_utility_maps(rng):
    worst_round_trip = 0.0
    for b in np.linspace(-0.9, 0.9, 10):
        game = make_shapley(float(b))
        for _ in range(100):
            p = random_state(3, rng)
            back = p_from_v(game, v_from_p(game, p))
            worst_round_trip = max(worst_round_trip, float(np.max(np.abs(back.pA.components - p.pA.components))),
                                   float(np.max(np.abs(back.pB.components - p.pB.components))))
    vectors = [rng.uniform(-1.0, 1.0, 3) for _ in range(100)] + [np.array([0.3, 0.3, 0.1]), np.array([0.2, 0.5, 0.5])]
    changed = 0
    for v in vectors:
        indices = best_response_set(v).indices
        shift = float(rng.uniform(-2.0, 2.0))
        scale = float(rng.uniform(0.1, 10.0))
        if best_response_set(v + shift).indices != indices or best_response_set(scale * v).indices != indices:
            changed += 1
    return worst_round_trip < 1e-10 and changed == 0, {"round_trip_error": worst_round_trip,
                                                       "argmax_changed": changed}


def check_anchor_midpoints():
    points = [a.point for a in indifference_anchors(0.0) if a.name.startswith("R")]
    exact = all(sorted(point) == [0.0, 0.5, 0.5] for point in points)
    return exact and len(points) == 6, {"endpoints": points}


# --- the integrator -----------------------------------------------------------------------

def _segment_invariants(seg, sums) -> Dict[str, float]:
    full = seg.at(seg.duration_s)
    half = seg.at(0.5 * seg.duration_s)
    midpoint = 0.5 * (seg.start.as_vector() + full.as_vector())
    worst = {
        "conservation": max(abs(float(state.vA.sum()) - sums[0]) for state in (seg.start, seg.end)) +
        max(abs(float(state.vB.sum()) - sums[1]) for state in (seg.start, seg.end)),
        "linearity": max(float(np.max(np.abs(half.as_vector() - midpoint))), full.distance(seg.end)),
        "event_gap": 0.0,
    }
    if seg.is_pure and seg.end_event.kind == EventKind.SINGLE_INDIFFERENCE:
        for tie in seg.end_event.ties:
            at_end = full.vA if tie.player == "A" else full.vB
            leader, catcher = tie.leaders[0] - 1, tie.catcher - 1
            worst["event_gap"] = max(worst["event_gap"], abs(float(at_end[leader] - at_end[catcher])))
    return worst


def check_flow_invariants(sizes, rng):
    config = SimConfig(max_events=100)
    worst = {"conservation": 0.0, "linearity": 0.0, "chaining": 0.0, "event_gap": 0.0}
    stopped = 0
    for b in FLOW_BETAS:
        game = make_shapley(b)
        sums = (1.0 + b, 1.0 - b)
        for _ in range(sizes["flow_starts"]):
            try:
                trajectory = simulate(game, random_state(3, rng), config)
            except FictitiousPlayError:
                stopped += 1
                continue
            for k, seg in enumerate(trajectory.segments):
                for key, value in _segment_invariants(seg, sums).items():
                    worst[key] = max(worst[key], value)
                if k:
                    worst["chaining"] = max(worst["chaining"], trajectory.segments[k - 1].end.distance(seg.start))
    passed = worst["conservation"] < 1e-9 and worst["linearity"] < 1e-12 and worst["chaining"] <= config.tol_tie \
        and worst["event_gap"] < config.tol_tie and stopped == 0
    return passed, dict(worst, stopped=stopped)


def check_no_ambiguity(sizes, rng):
    per_beta = max(1, sizes["ambiguity_starts"] // len(UNIQUENESS_BETAS))
    ambiguous = {}
    for b in UNIQUENESS_BETAS:
        _, count = simulate_itineraries(b, per_beta, 100, rng)
        ambiguous[str(b)] = count
    return not any(ambiguous.values()), {"starts_per_beta": per_beta, "ambiguous": ambiguous}


def check_j_recursion(sizes, rng):
    worst = 0.0
    pairs = []
    for _ in range(sizes["j_pairs"]):
        b, X = float(rng.uniform(0.2, 1.0)), float(rng.uniform(0.005, 0.05))
        gap = abs(j_map_simulated(b, X) - j_map_F(b, X))
        if gap > worst:
            worst, pairs = gap, [b, X]
    return worst < 1e-10, {"worst_gap": worst, "worst_pair": pairs}


# --- orbits ---------------------------------------------------------------------------

def check_cubic_signs(sizes):
    bad = []
    for b in np.linspace(-0.99, 0.99, sizes["cubic_samples"]):
        cw, acw = clockwise_cubic(b), anticlockwise_cubic(b)
        if not (cw(0.0) < 0 < cw(1.0)):
            bad.append(("clockwise", float(b)))
        # the anticlockwise sign pattern is only claimed where that orbit can exist
        if b > 0 and not (acw(0.0) < 0 < acw(1.0 / 3.0) and acw(1.0) < 0):
            bad.append(("anticlockwise", float(b)))
    return not bad, {"violations": bad}


def check_reference_orbits():
    cw = clockwise_orbit(0.0)
    acw = anticlockwise_orbit(1.0)
    detail = {"clockwise_n": cw.section_n, "clockwise_m": cw.section_m, "clockwise_t1": cw.durations[0],
              "mu": acw.root, "anticlockwise_n": acw.section_n, "anticlockwise_m": acw.section_m,
              "anticlockwise_t": acw.durations}
    # reference values are printed truncated to three decimals
    passed = (np.allclose(cw.section_n, [0.594, 0.129, 0.277], atol=1e-3)
              and np.allclose(cw.section_m, [0.405, 0.405, 0.188], atol=1e-3)
              and abs(cw.durations[0] - 0.31767) < 1e-5
              and 0.155 <= acw.root < 0.156
              and np.allclose(acw.section_n, [0.844, 0.449, 0.706], atol=1e-3)
              and np.allclose(acw.section_m, [-0.311, 0.155, 0.155], atol=1e-3)
              and np.allclose(acw.durations, [0.12060, 0.39493], atol=1e-4))
    return passed, detail


def check_closure():
    worst = 0.0
    for b in (-0.9, -0.5, 0.0, 0.3, 0.6):
        worst = max(worst, clockwise_orbit(b).closure_residual)
    for b in (0.65, 0.8, 0.95, 1.0):
        worst = max(worst, anticlockwise_orbit(b).closure_residual)
    return worst <= 1e-8, {"worst_residual": worst}


def check_sigma_degeneracy():
    cw = clockwise_orbit(SIGMA - 1e-3).diameter
    acw = anticlockwise_orbit(SIGMA + 1e-3).diameter
    return cw < 1e-3 and acw < 1e-3, {"clockwise_diameter": cw, "anticlockwise_diameter": acw}


def check_spectra():
    worst_ratio = 0.0
    for b in np.linspace(SIGMA + 0.01, 1.0, 12):
        report = stability_matrix(float(b))
        worst_ratio = max(worst_ratio, float(np.min(np.abs(report.eigenvalues - report.closed_form[0]))))
    at_one = stability_matrix(1.0)
    reference_ok = np.allclose(np.sort(at_one.eigenvalues.real), [-0.815, -0.184, 0.532], atol=2e-3)
    clockwise = {b: stability_matrix(b).classification for b in (0.0, 0.2, 0.4, 0.6)}
    regimes = (stability_matrix(0.95).classification == StabilityClass.ATTRACTING
               and stability_matrix(0.8).classification == StabilityClass.SADDLE_TYPE)
    passed = worst_ratio <= 1e-9 and reference_ok and regimes and \
        all(c == StabilityClass.ATTRACTING for c in clockwise.values())
    return passed, {"ratio_eigenvalue_gap": worst_ratio, "eigenvalues_at_1": at_one.eigenvalues,
                    "clockwise": {str(b): c.value for b, c in clockwise.items()}}


def check_tau():
    tau = find_tau()
    residuals = period_doubling_residuals(tau)
    flat = all(r <= 1e-4 * h for h, r in residuals)
    # the residual is linear in h with the slope |lambda^2 - 1|; a cubic term would show in the excess
    excess = period_doubling_excess(tau)
    no_cubic = all(e <= 1e-10 for _, e in excess)
    return abs(tau - 0.915) <= 1e-3 and flat and no_cubic, {"tau": tau, "period_doubling_residuals": residuals,
                                                            "excess_over_linear": excess}


def check_j_orbit():
    at_one = j_orbit(1.0)
    at_08 = j_orbit(0.8)
    ratios_ok = np.allclose(at_one.ratios, [1 / 3, 1 / 4], atol=1e-9) and \
        np.allclose(at_one.measured_ratios, at_one.ratios, atol=1e-9)
    small = diameter_ratios(SIGMA + 1e-3)
    passed = ratios_ok and at_08.orbit.closure_residual <= 1e-9 and abs(j_map_derivative0(SIGMA) - 1.0) < 1e-12 \
        and all(0 < r < 1e-2 for r in small)
    return passed, {"ratios_at_1": at_one.ratios, "closure_at_0.8": at_08.orbit.closure_residual,
                    "ratios_near_sigma": small}


# --- return maps and transition diagrams --------------------------------------------------

def check_first_return():
    detail = {}
    passed = True
    for b in ATTRACTION_BETAS:
        result = first_return(b)
        gap = check_fixed_point(result)
        E = equilibrium_z(b)
        e_gap = float(np.max(np.abs(result.map.apply(E) - E)))
        interior = maps_into_interior(result)
        residual = max(piece.residual for piece in result.pieces)
        detail[str(b)] = {"fixed_point_gap": gap, "E_gap": e_gap, "into_interior": interior, "fit_residual": residual}
        passed = passed and e_gap < 1e-6 and interior and residual < 1e-8
    return passed, detail


def check_return_structure(sizes):
    result = first_return(-0.5)
    composed = composition_gap(result, count=sizes["return_samples"])
    collinearity, cross_ratio_change = line_preservation(-0.5, count=sizes["return_samples"])
    converged = iterate_to_fixed_point(result, count=sizes["return_iterates"])
    passed = composed < 1e-8 and collinearity < 1e-8 and cross_ratio_change < 1e-8 and converged < 1e-6
    return passed, {"composed_vs_direct": composed, "collinearity": collinearity,
                    "cross_ratio_change": cross_ratio_change, "distance_after_iterates": converged}


def check_attraction(sizes, seed, progress):
    detail = {}
    for b in ATTRACTION_BETAS:
        report = attraction_check(b, n_starts=sizes["attraction_starts"], horizon=300, seed=seed, progress=progress)
        detail[str(b)] = {"converged_fraction": report.converged_fraction, "outliers": report.outliers}
    # at beta = 0 only starts that ran into a non-transversal line may fail
    passed = all(d["converged_fraction"] == 1.0 for b, d in detail.items() if b != "0.0") and \
        all(o["reason"].startswith("ambiguous") for o in detail["0.0"]["outliers"])
    return passed, detail


def check_soundness(sizes, rng):
    per_beta = max(1, sizes["itineraries"] // len(SOUNDNESS_BETAS))
    violations = []
    coverage = {}
    total = 0
    for b in SOUNDNESS_BETAS:
        diagram = diagram_for(b)
        itineraries, _ = simulate_itineraries(b, per_beta, 100, rng)
        total += len(itineraries)
        for itinerary in itineraries:
            result = validate_itinerary(itinerary, diagram)
            if not result.ok:
                violations.append({"beta": b, "index": result.index, "reason": result.reason})
        seen, _ = witness_coverage(diagram, itineraries)
        coverage[str(b)] = {"seen_in_random_runs": len(seen)}
    # the transcribed arc sets against the payoff signs and a constructed run per arc
    transcribed_ok = True
    for b in SOUNDNESS_BETAS + (1.0,):
        diagram = diagram_for(b)
        derived = derive_diagram(b)
        same = (diagram.arcs, diagram.corner_arcs, diagram.ambiguous_faces) == \
            (derived.arcs, derived.corner_arcs, derived.ambiguous_faces)
        witnessed, unwitnessed = witnessed_arcs(diagram)
        transcribed_ok = transcribed_ok and same and not unwitnessed
        coverage.setdefault(str(b), {}).update({"matches_payoff_signs": same, "witnessed": len(witnessed),
                                                "unwitnessed": sorted(f"{a}->{c}" for a, c in unwitnessed)})
    return transcribed_ok and not violations, {"itineraries": total, "violations": violations[:20],
                                               "coverage": coverage}


def check_cycles():
    negative = diagram_for(-0.5)
    positive = diagram_for(0.5)
    passed = all(diagram_for(b).realizes(SHAPLEY) for b in (-0.5, 0.0, 0.5)) and \
        not negative.realizes(ANTI_SHAPLEY) and positive.realizes(ANTI_SHAPLEY)
    return passed, {"negative_arcs": len(negative.all_arcs), "positive_arcs": len(positive.all_arcs)}


def check_chaotic_regime(sizes, rng):
    diagram = diagram_for(0.75)
    itineraries, ambiguous = simulate_itineraries(0.75, sizes["chaotic_starts"], 600, rng)
    matching = sum(1 for it in itineraries if pattern_match(it, SHAPLEY, 5) or pattern_match(it, ANTI_SHAPLEY, 5))
    valid = all(validate_itinerary(it, diagram).ok for it in itineraries)
    return valid and matching == 0, {"runs": len(itineraries), "matching_a_pattern": matching,
                                     "ambiguous": ambiguous}


def run_invariant_suite(quick: bool = False, seed: int = 0, output_log_path: Optional[str] = None,
                        progress: bool = False) -> List[CheckResult]:
    """
    Runs every invariant of the toolkit and prints a summary per group.
    The quick size uses reduced sample counts with the same assertions.
    """
    sizes = SUITE_SIZES["quick" if quick else "full"]
    rng = np.random.default_rng(seed)
    groups = {
        "Game and geometry": [
            ("game core", check_game_core),
            ("leg classes", check_leg_classes),
            ("codim-2 oracle", lambda: check_oracle(sizes, rng, progress)),
            ("utility maps", lambda: check_utility_maps(rng)),
            ("anchor midpoints", check_anchor_midpoints),
        ],
        "Integrator": [
            ("flow invariants", lambda: check_flow_invariants(sizes, rng)),
            ("no ambiguity", lambda: check_no_ambiguity(sizes, rng)),
            ("J recursion", lambda: check_j_recursion(sizes, rng)),
        ],
        "Orbits": [
            ("cubic signs", lambda: check_cubic_signs(sizes)),
            ("reference orbits", check_reference_orbits),
            ("orbit closure", check_closure),
            ("sigma degeneracy", check_sigma_degeneracy),
            ("spectra", check_spectra),
            ("tau", check_tau),
            ("orbit on J", check_j_orbit),
        ],
        "Return maps": [
            ("first return", check_first_return),
            ("return structure", lambda: check_return_structure(sizes)),
            ("global attraction", lambda: check_attraction(sizes, seed, progress)),
        ],
        "Transition diagrams": [
            ("soundness", lambda: check_soundness(sizes, rng)),
            ("cycles", check_cycles),
            ("chaotic regime", lambda: check_chaotic_regime(sizes, rng)),
        ],
    }

    results = []
    for group, checks in groups.items():
        print(f"=== {group} ===")
        group_results = [run_check(name, fn) for name, fn in checks]
        for result in group_results:
            status = "PASS" if result.passed else "FAIL"
            print(f"[CHECK] {status} {result.name}" + (f" ({result.error})" if result.error else ""))
        print(f"Passed:    {avg([r.passed for r in group_results]):.4f}\n")
        results += group_results

    if output_log_path:
        write_json([{"name": r.name, "passed": r.passed, "detail": r.detail, "error": r.error} for r in results],
                   output_log_path)
    logger.info(f"invariant suite: {sum(r.passed for r in results)}/{len(results)} checks passed")
    return results
