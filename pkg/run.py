#!/usr/bin/env python3
import argparse
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from tqdm import tqdm

from evaluation.run_evaluation import run_invariant_suite
from flow.config import SimConfig
from flow.engine import simulate
from flow.export import trajectory_columns, trajectory_rows, write_itinerary_json, write_json, write_table, \
    write_trajectory_csv
from game.errors import ExistenceError, FictitiousPlayError, ParameterError
from game.game_core import SIGMA, load_game, make_shapley, random_state, zero_sum_certificate
from orbits.j_orbit import j_orbit
from orbits.orbit_analysis import orbit_for, orbit_payload
from orbits.return_map import attraction_check
from orbits.stability import find_tau, stability_matrix
from transitions.transition_graph import PATTERNS, diagram_for, itinerary_steps, pattern_match

logger = logging.getLogger(__name__)

SCAN_COLUMNS = ["beta", "orbit_kind", "exists", "n1", "n2", "n3", "m1", "m2", "m3", "t1", "t2", "diameter",
                "eig1_re", "eig1_im", "eig2_re", "eig2_im", "eig3_re", "eig3_im", "classification"]


class RunConfig(BaseModel):
    """Everything a command needs; identical configs give identical output files."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    command: str
    beta: Optional[float] = None
    game: Optional[str] = None
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    out_dir: str = "results"
    fmt: Literal["csv", "json"] = "csv"
    events: int = Field(default=300, gt=0)
    policy: Literal["abort", "follow_J", "perturb"] = "follow_J"
    max_time: float = Field(default=math.inf, gt=0)
    time_scale: Literal["s", "rho"] = "s"
    kind: Literal["clockwise", "anticlockwise", "j"] = "clockwise"
    numeric: bool = False
    beta_from: float = -0.9
    beta_to: float = 1.0
    steps: int = Field(default=20, gt=0)
    workers: int = Field(default=4, gt=0)
    bracket: List[float] = Field(default_factory=lambda: [SIGMA + 0.01, 0.99])
    tol: float = Field(default=1e-6, gt=0)
    starts: int = Field(default=500, gt=0)
    quick: bool = False

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)


def _fmt(x) -> str:
    if isinstance(x, (list, tuple, np.ndarray)):
        return "(" + ", ".join(_fmt(v) for v in x) + ")"
    if isinstance(x, complex):
        return f"{x.real:.12g}{x.imag:+.12g}j" if abs(x.imag) > 1e-15 else f"{x.real:.12g}"
    return f"{float(x):.12g}"


def _require_beta(config: RunConfig) -> float:
    if config.beta is None:
        raise ParameterError(f"{config.command} needs --beta")
    return config.beta


# --- commands ------------------------------------------------------------------------------

def cmd_simulate(config: RunConfig) -> int:
    game = load_game(config.game) if config.game else make_shapley(_require_beta(config))
    sim_config = SimConfig(max_events=config.events, codim2_policy=config.policy, max_time=config.max_time,
                           time_scale=config.time_scale)
    rng = np.random.default_rng(config.seed)
    init = random_state(game.n, rng)
    print(f"[SIM] Simulating {config.events} events from seed {config.seed}...")
    trajectory = simulate(game, init, sim_config)
    if config.fmt == "csv":
        write_trajectory_csv(trajectory, config.path("trajectory.csv"))
    else:
        columns = trajectory_columns(game.n)
        write_json([dict(zip(columns, row)) for row in trajectory_rows(trajectory)], config.path("trajectory.json"))
    write_itinerary_json(trajectory, config.path("itinerary.json"))
    steps = itinerary_steps(trajectory)
    stop = trajectory.stop_event.label if trajectory.stop_event is not None else "none"
    print(f"[SIM] {len(trajectory.segments)} segments, stop: {stop}")
    if game.n == 3:
        for name, pattern in PATTERNS.items():
            if pattern_match(steps, pattern, min_repeats=3):
                print(f"[SIM] Itinerary tail repeats the {name} pattern")
    print(f"[SIM] Files written to {config.out_dir}")
    return 0


def cmd_orbit(config: RunConfig) -> int:
    beta = _require_beta(config)
    if config.kind == "j":
        report = j_orbit(beta)
        payload = orbit_payload(report.orbit)
        payload.update({"X": report.X, "ratios": report.ratios, "measured_ratios": report.measured_ratios})
        print(f"[ORBIT] X* = {_fmt(report.X)}")
        print(f"[ORBIT] diameter ratios = {_fmt(report.ratios)}")
        spec = report.orbit
    else:
        spec = orbit_for(config.kind, beta)
        payload = orbit_payload(spec)
        root_name = "nu" if config.kind == "clockwise" else "mu"
        print(f"[ORBIT] {root_name} = {_fmt(spec.root)}")
    print(f"[ORBIT] n = {_fmt(spec.section_n)}")
    print(f"[ORBIT] m = {_fmt(spec.section_m)}")
    print(f"[ORBIT] (t1, t2) = {_fmt(spec.durations)}")
    print(f"[ORBIT] diameter = {_fmt(spec.diameter)}")
    write_json(payload, config.path(f"orbit_{config.kind}_{beta:g}.json"))
    return 0


def cmd_stability(config: RunConfig) -> int:
    beta = _require_beta(config)
    report = stability_matrix(beta, numeric=config.numeric)
    print(f"[STAB] {report.kind.value} orbit at beta={_fmt(beta)} ({report.method})")
    for row in report.matrix:
        print(f"[STAB]   {_fmt(row)}")
    print(f"[STAB] eigenvalues = {_fmt([complex(v) for v in report.eigenvalues])}")
    print(f"[STAB] classification = {report.classification.value}")
    return 0


def scan_row(beta: float) -> list:
    kind = "clockwise" if beta < SIGMA else "anticlockwise"
    try:
        spec = orbit_for(kind, beta)
        report = stability_matrix(beta, kind=spec.kind, orbit=spec)
    except ExistenceError:
        return [beta, kind, False] + [math.nan] * 15 + [""]
    eig = []
    for value in report.eigenvalues:
        eig += [value.real, value.imag]
    return [beta, kind, True, *spec.section_n, *spec.section_m, *spec.durations, spec.diameter, *eig,
            report.classification.value]


def cmd_scan(config: RunConfig) -> int:
    betas = [float(b) for b in np.linspace(config.beta_from, config.beta_to, config.steps)]
    print(f"[SCAN] Scanning {len(betas)} values of beta with {config.workers} workers...")
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        # map keeps grid order whatever the completion order
        rows = list(tqdm(pool.map(scan_row, betas), total=len(betas), desc="scan"))
    write_table(rows, SCAN_COLUMNS, config.path("scan.csv"))
    print(f"[SCAN] {sum(1 for r in rows if r[2])} of {len(rows)} grid points carry a symmetric orbit")
    return 0


def cmd_taufind(config: RunConfig) -> int:
    tau, iterations = find_tau(tuple(config.bracket), config.tol, full_output=True)
    print(f"[TAU] tau = {_fmt(tau)} ({iterations} bisection steps)")
    return 0


def cmd_sigma_check(config: RunConfig) -> int:
    betas = [float(b) for b in np.linspace(config.beta_from, config.beta_to, config.steps)]
    rows = [[b, zero_sum_certificate(b)] for b in betas]
    write_table(rows, ["beta", "residual"], config.path("sigma_check.csv"))
    print(f"[SIGMA] residual at sigma = {_fmt(zero_sum_certificate(SIGMA))}")
    best = min(rows, key=lambda r: r[1])
    print(f"[SIGMA] smallest residual on the grid: {_fmt(best[1])} at beta = {_fmt(best[0])}")
    return 0


def cmd_check(config: RunConfig) -> int:
    results = run_invariant_suite(quick=config.quick, seed=config.seed,
                                  output_log_path=config.path("check_log.json"), progress=True)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"[CHECK] {len(failed)} invariant(s) failed: {', '.join(failed)}")
        return 4
    print("[CHECK] All invariants hold")
    return 0


def cmd_diagram(config: RunConfig) -> int:
    beta = _require_beta(config)
    diagram = diagram_for(beta)
    write_json(diagram.payload(), config.path(f"diagram_{beta:g}.json"))
    print(f"[RUN] {diagram.regime.value}: {len(diagram.all_arcs)} arcs, "
          f"{len(diagram.ambiguous_faces)} ambiguous faces")
    return 0


def cmd_attraction(config: RunConfig) -> int:
    beta = _require_beta(config)
    report = attraction_check(beta, n_starts=config.starts, horizon=config.events, seed=config.seed, progress=True)
    write_json(report.payload(), config.path(f"attraction_{beta:g}.json"))
    print(f"[RUN] converged fraction = {_fmt(report.converged_fraction)}, outliers: {len(report.outliers)}")
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "orbit": cmd_orbit,
    "stability": cmd_stability,
    "scan": cmd_scan,
    "taufind": cmd_taufind,
    "sigma-check": cmd_sigma_check,
    "check": cmd_check,
    "diagram": cmd_diagram,
    "attraction": cmd_attraction,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Exact fictitious-play dynamics for Shapley's family of games.")
    parser.add_argument("--out", type=str, default=None, help="Output directory (overrides FPDYN_OUT).")
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Simulate the flow from a seeded random start.")
    p.add_argument("--beta", type=float, default=None, help="Parameter of the Shapley game.")
    p.add_argument("--game", type=str, default=None, help="Game spec: JSON file or inline JSON.")
    p.add_argument("--seed", type=int, default=0, help="Seed of the random initial condition.")
    p.add_argument("--events", type=int, default=300, help="Maximum number of events.")
    p.add_argument("--policy", type=str, default="follow_J", help="abort, follow_J or perturb.")
    p.add_argument("--max-time", dest="max_time", type=float, default=math.inf, help="Time horizon.")
    p.add_argument("--time-scale", dest="time_scale", type=str, default="s", help="s or rho.")
    p.add_argument("--format", dest="fmt", type=str, default="csv", help="csv or json.")

    p = sub.add_parser("orbit", help="Construct a symmetric periodic orbit.")
    p.add_argument("--kind", type=str, default="clockwise", help="clockwise, anticlockwise or j.")
    p.add_argument("--beta", type=float, required=True, help="Parameter of the Shapley game.")

    p = sub.add_parser("stability", help="Linear stability of the symmetric orbit.")
    p.add_argument("--beta", type=float, required=True, help="Parameter of the Shapley game.")
    p.add_argument("--numeric", action="store_true", help="Perturb through the simulator also when beta > sigma.")

    p = sub.add_parser("scan", help="Orbit data and spectra on a beta grid.")
    p.add_argument("--beta-from", dest="beta_from", type=float, default=-0.9, help="First grid point.")
    p.add_argument("--beta-to", dest="beta_to", type=float, default=1.0, help="Last grid point.")
    p.add_argument("--steps", type=int, default=20, help="Number of grid points.")
    p.add_argument("--workers", type=int, default=4, help="Concurrent grid evaluations.")

    p = sub.add_parser("taufind", help="Locate the parameter where an eigenvalue crosses -1.")
    p.add_argument("--bracket", type=float, nargs=2, default=[SIGMA + 0.01, 0.99], help="Search bracket.")
    p.add_argument("--tol", type=float, default=1e-6, help="Tolerance on the eigenvalue gap.")

    p = sub.add_parser("sigma-check", help="Zero-sum residual along a beta grid.")
    p.add_argument("--beta-from", dest="beta_from", type=float, default=0.0, help="First grid point.")
    p.add_argument("--beta-to", dest="beta_to", type=float, default=1.0, help="Last grid point.")
    p.add_argument("--steps", type=int, default=101, help="Number of grid points.")

    p = sub.add_parser("check", help="Run the invariant suite.")
    p.add_argument("--quick", action="store_true", help="Reduced sample counts.")
    p.add_argument("--seed", type=int, default=0, help="Seed of all random samples.")

    p = sub.add_parser("diagram", help="Export the transition diagram.")
    p.add_argument("--beta", type=float, required=True, help="Parameter of the Shapley game.")

    p = sub.add_parser("attraction", help="Global attraction check for beta <= 0.")
    p.add_argument("--beta", type=float, required=True, help="Parameter of the Shapley game.")
    p.add_argument("--starts", type=int, default=500, help="Number of random starts.")
    p.add_argument("--events", type=int, default=300, help="Events per start.")
    p.add_argument("--seed", type=int, default=0, help="Seed of the random starts.")
    return parser


def run_cli(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s - %(levelname)s - %(message)s')
    options = {k: v for k, v in vars(args).items() if k not in ("out", "verbose") and v is not None}
    out_dir = args.out or os.environ.get("FPDYN_OUT") or "results"
    try:
        config = RunConfig(out_dir=out_dir, **options)
        logger.debug(f"run config: {config.model_dump()}")
        print(f"[RUN] {config.command}")
        return COMMANDS[config.command](config)
    except ValidationError as e:
        print(f"[RUN] Invalid parameters: {e}", file=sys.stderr)
        return 2
    except FictitiousPlayError as e:
        print(f"[RUN] {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
