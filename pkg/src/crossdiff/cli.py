"""Command-line interface.

Subcommands: `simulate` marches a scenario and writes diagnostics plus the
final state, `check-coeffs` prints the coefficient certificates,
`sweep cyclic3` brackets the dominance-feasibility threshold of the cyclic
chain, `dereg` runs the de-regularization study, and `selftest` runs the
embedded property suite.  Exit codes: 0 success, 1 configuration error,
2 numerical failure, 3 selftest failure.
"""

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from crossdiff.coefficients import (
    check_detailed_balance,
    check_wcd,
    cyclic3_coeffs,
    cyclic3_pi,
    eta0,
    find_pi_max_kappa,
)
from crossdiff.config import ConfigError, load_config
from crossdiff.presets import ScenarioConfig, build_initial, scenario_presets
from crossdiff.reporting import write_diagnostics, write_field
from crossdiff.selftest import run_selftest
from crossdiff.stepper import deregularization_study, run

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_SELFTEST = 3


def _worker_count() -> int | None:
    raw = os.environ.get("CROSSDIFF_THREADS")
    if raw is None:
        return None
    try:
        count = int(raw)
    except ValueError as exc:
        raise ConfigError(f"CROSSDIFF_THREADS must be an integer, got {raw!r}") from exc
    if count < 1:
        raise ConfigError("CROSSDIFF_THREADS must be at least 1")
    return count


def _scenario_from_args(args) -> ScenarioConfig:
    if args.preset is not None and args.config is not None:
        raise ConfigError("give either --preset or a config file, not both")
    if args.preset is not None:
        presets = scenario_presets()
        if args.preset not in presets:
            raise ConfigError(
                f"unknown preset '{args.preset}', available: {', '.join(sorted(presets))}"
            )
        return presets[args.preset]
    if args.config is None:
        raise ConfigError("a config file or --preset is required")
    return load_config(args.config)


def _vector_text(vec) -> str:
    return " ".join(f"{v:.6g}" for v in np.asarray(vec).ravel())


def cmd_simulate(args) -> int:
    scenario = _scenario_from_args(args)
    t_end = scenario.t_end if args.t_end is None else args.t_end
    if t_end < 0.0:
        raise ConfigError("--t-end must be nonnegative")
    field = build_initial(scenario)
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    diag_path = out_dir / (scenario.output.diagnostics or f"{scenario.label}-diagnostics.tsv")
    final_path = out_dir / (scenario.output.final_state or f"{scenario.label}-final.tsv")

    try:
        result = run(
            field,
            scenario.coeffs,
            scenario.weights,
            scenario.scheme,
            t_end,
            cadence=scenario.output.cadence,
        )
    except RuntimeError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    write_diagnostics(result.reports, scenario.coeffs.n, diag_path)
    write_field(result.final, final_path)

    print(f"{scenario.label}: {result.steps} steps to t = {result.t_final:.17g}")
    print(f"mass identity max error: {result.mass_identity_max_err:.3e}")
    if scenario.scheme.entropy_check.enabled:
        print(
            f"entropy checks: {result.steps - result.entropy_failures} passed, "
            f"{result.entropy_failures} failed (min margin {result.entropy_min_margin:.3e})"
        )
    print(f"wrote {diag_path} and {final_path}")
    if result.entropy_failures > 0:
        print("entropy inequality violated; see diagnostics", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_check_coeffs(args) -> int:
    scenario = _scenario_from_args(args)
    coeffs = scenario.coeffs
    print(f"label: {scenario.label}")
    print(f"species: {coeffs.n}")

    balance = check_detailed_balance(coeffs)
    if balance is None:
        print("detailed balance: NO")
    else:
        print(f"detailed balance: YES, pi = {_vector_text(balance)}")

    print(f"pairwise dominance (4 a_ii vs squared coupling gaps): {'YES' if check_wcd(coeffs) else 'NO'}")

    weights = find_pi_max_kappa(coeffs)
    if weights is None:
        print("weighted dominance margin: NO (no weights make it positive)")
    else:
        print(
            f"weighted dominance margin: YES, kappa = {weights.kappa:.17g}, "
            f"pi = {_vector_text(weights.pi)}"
        )
    try:
        print(f"density shift ceiling: {eta0(coeffs):.17g}")
    except ValueError:
        print("density shift ceiling: undefined (needs every a_i0 > 0)")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.family != "cyclic3":
        raise ConfigError(f"unknown sweep family '{args.family}', only 'cyclic3' is available")
    if not (0.0 < args.a_min < args.a_max):
        raise ConfigError("--a-min and --a-max must satisfy 0 < a-min < a-max")
    if args.steps < 2:
        raise ConfigError("--steps must be at least 2")

    diag_values = np.linspace(args.a_min, args.a_max, args.steps)

    def feasible(diag: float) -> bool:
        return find_pi_max_kappa(cyclic3_coeffs(diag, diag, diag)) is not None

    with ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        flags = list(pool.map(feasible, diag_values))

    print(f"sweep cyclic3: diagonal in [{args.a_min:.17g}, {args.a_max:.17g}], {args.steps} samples")
    flips = [k for k in range(len(flags) - 1) if flags[k] != flags[k + 1]]
    if not flips:
        state = "feasible" if flags[0] else "infeasible"
        print(f"no transition: every sampled diagonal is {state}")
        return EXIT_OK
    if len(flips) > 1 or flags[0]:
        print("warning: feasibility is not monotone over the sampled range", file=sys.stderr)

    lo, hi = float(diag_values[flips[0]]), float(diag_values[flips[0] + 1])
    print(f"grid bracket: infeasible at {lo:.17g}, feasible at {hi:.17g}")
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    threshold = 0.5 * (lo + hi)
    print(f"threshold (weight search): {threshold:.17g}")

    closed = 0.125
    shift = closed * 1e-9
    flip_ok = (
        cyclic3_pi(closed + shift, closed + shift, closed + shift) is not None
        and cyclic3_pi(closed - shift, closed - shift, closed - shift) is None
    )
    print(f"threshold (closed form): {closed:.17g}, flip within 1e-9: {'YES' if flip_ok else 'NO'}")
    return EXIT_OK


def cmd_dereg(args) -> int:
    scenario = _scenario_from_args(args)
    try:
        eps_values = tuple(float(tok) for tok in args.eps_list.split(",") if tok)
    except ValueError as exc:
        raise ConfigError(f"--eps-list must be comma-separated numbers: {exc}") from exc
    if not eps_values:
        raise ConfigError("--eps-list must name at least one value")
    t_end = scenario.t_end if args.t_end is None else args.t_end

    field = build_initial(scenario)
    try:
        study = deregularization_study(
            field,
            scenario.coeffs,
            scenario.weights,
            scenario.scheme,
            eps_values,
            t_end,
            max_workers=_worker_count(),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    print(f"{scenario.label}: de-regularization over eps = {_vector_text(eps_values)}")
    for k, dist in enumerate(study.distances):
        print(f"L2 distance run[{k}] vs run[{k + 1}]: {dist:.17g}")
    if not study.completed:
        print(
            f"study aborted after {study.runs_completed} runs: {study.message}",
            file=sys.stderr,
        )
        return EXIT_NUMERICAL
    if study.distances.size > 1:
        monotone = bool(np.all(np.diff(study.distances) < 0.0))
        print(f"distances strictly decreasing: {'YES' if monotone else 'NO'}")
    return EXIT_OK


def cmd_selftest(_args) -> int:
    return EXIT_OK if run_selftest(sys.stdout) else EXIT_SELFTEST


def _add_scenario_source(sub: argparse.ArgumentParser):
    sub.add_argument("config", nargs="?", default=None, help="scenario TOML file")
    sub.add_argument("--preset", default=None, help="use a shipped preset instead of a file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crossdiff",
        description="Entropy-stable simulation of cross-diffusion population systems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write diagnostics")
    _add_scenario_source(p)
    p.add_argument("--t-end", type=float, default=None, help="override the scenario horizon")
    p.add_argument("--output-dir", default=".", help="directory for output files")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("check-coeffs", help="print coefficient certificates")
    _add_scenario_source(p)
    p.set_defaults(fn=cmd_check_coeffs)

    p = sub.add_parser("sweep", help="bracket the dominance threshold of a coefficient family")
    p.add_argument("family", help="coefficient family to sweep (cyclic3)")
    p.add_argument("--a-min", type=float, required=True, help="smallest diagonal value")
    p.add_argument("--a-max", type=float, required=True, help="largest diagonal value")
    p.add_argument("--steps", type=int, required=True, help="number of samples")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("dereg", help="de-regularization study across an eps list")
    _add_scenario_source(p)
    p.add_argument("--eps-list", required=True, help="comma-separated decreasing eps values")
    p.add_argument("--t-end", type=float, default=None, help="override the scenario horizon")
    p.set_defaults(fn=cmd_dereg)

    p = sub.add_parser("selftest", help="run the embedded property suite")
    p.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; fold the latter
        # into the configuration-error code.
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
