"""
Command-line interface: ``python -m markovgrid <command>``.

Commands
  discretize   TCL grid bookkeeping and CFL verdict, optional Π_nat dump
  solve-mdp    solve a constrained MDP document
  run-mpc      closed-loop receding-horizon run of a scenario
  powerflow    AC power flow of a feeder under given injections
  linearize    sensitivities around a base point plus a ±fraction sweep report

Exit codes: 0 success, 2 bad input, 3 infeasible / non-convergent, 4 internal.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError as SchemaError

from .config import ensure_directories, settings
from .errors import EXIT_INPUT, EXIT_INTERNAL, EXIT_OK, InfeasibleError, MarkovgridError, exit_code_for

logger = logging.getLogger("markovgrid.cli")

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level: str, log_file: Optional[str] = None) -> None:
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        Path(log_file).expanduser().resolve().parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, level.upper()), format=LOG_FORMAT, handlers=handlers, force=True)


def _out_dir(args: argparse.Namespace, default_name: str) -> Path:
    return Path(args.out) if args.out else Path(settings.OUTPUT_DIR) / default_name


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))


# ─── Commands ───────────────────────────────────────────────────────────────

def cmd_discretize(args: argparse.Namespace) -> int:
    from .ingestion import write_chain_coo
    from .tcl import build_grid, build_natural_chain, check_cfl, load_parameters

    params = load_parameters(args.params)
    grid = build_grid(params, args.dx)
    cfl = check_cfl(params, grid, args.dt)
    _emit({
        "N": grid.N,
        "n_bins": grid.n,
        "k_bar": grid.k_bar,
        "k_under": grid.k_under,
        "delta": grid.delta,
        "dt_seconds": args.dt,
        "dt_max_seconds": cfl.dt_max_seconds,
        "cfl": "PASS" if cfl.passed else "FAIL",
    })
    if not cfl.passed:
        raise InfeasibleError(f"Δt={args.dt}s exceeds the CFL bound {cfl.dt_max_seconds:.3f}s at Δx={args.dx}.")
    if args.dump_chain:
        chain = build_natural_chain(params, grid, args.dt)
        write_chain_coo(chain.natural.entries, Path(args.dump_chain))
        logger.info("Natural chain written to %s", args.dump_chain)
    return EXIT_OK


def cmd_solve_mdp(args: argparse.Namespace) -> int:
    from .ingestion import RunManifest, write_mdp_solution
    from .mdp import convexify, load_problem, solve_mdp
    from .solver import SolverConfig, dump_program

    config = SolverConfig()
    problem = load_problem(args.problem)
    if args.dump_qp:
        dump_program(convexify(problem, config).program, Path(args.dump_qp))
    started = time.perf_counter()
    result = solve_mdp(problem, config)
    elapsed = time.perf_counter() - started

    out = _out_dir(args, Path(args.problem).stem)
    written = write_mdp_solution(result, out)
    manifest = RunManifest.create("solve-mdp", config, [args.problem])
    manifest.timings = {"solve_s": elapsed}
    manifest.outputs = [p.name for p in written]
    manifest.write(out)
    _emit({"status": result.status.value, "objective": result.objective,
           "kkt_passed": result.kkt.passed, "out": str(out)})
    return EXIT_OK


def cmd_run_mpc(args: argparse.Namespace) -> int:
    from dataclasses import replace

    from .ingestion import RunManifest, load_scenario, write_run
    from .mpc import run

    scenario = load_scenario(args.scenario, horizon=args.horizon)
    config = scenario.config
    if args.forecast:
        config = replace(config, forecast_mode=args.forecast)
    out = _out_dir(args, scenario.name + ("_no_tcl" if args.no_tcl else ""))
    manifest = RunManifest.create("run-mpc", config, scenario.inputs, seed=args.seed)
    manifest.config["with_tcl"] = not args.no_tcl
    manifest.config["steps"] = args.steps or scenario.steps

    def finish(result, status: str) -> None:
        summary = result.summary(scenario.doc.tracking_tolerance_kw, config.v_min, config.v_max)
        written = write_run(result, out, summary)
        manifest.timings = result.timings
        manifest.outputs = [p.name for p in written]
        manifest.status = status
        manifest.write(out)
        _emit({k: summary.get(k) for k in ("steps", "total_eps_kw", "tracking_violations",
                                           "total_curtailment_kw", "failed_step")} | {"out": str(out)})

    try:
        result = run(scenario, config, seed=args.seed, with_tcl=not args.no_tcl, steps=args.steps,
                     dump_qp=Path(args.dump_qp) if args.dump_qp else None)
    except MarkovgridError as e:
        partial = e.context.pop("partial_result", None)
        if partial is not None:
            finish(partial, "failed")
        raise
    finish(result, "ok")
    return EXIT_OK


def cmd_powerflow(args: argparse.Namespace) -> int:
    from .grid import Injections, load_feeder, power_balance, solve_power_flow
    from .ingestion import RunManifest, read_injections_csv, write_power_flow

    feeder = load_feeder(args.feeder)
    inputs = [args.feeder]
    injections = Injections.zeros(feeder.num_nodes)
    if args.injections:
        injections = Injections(*read_injections_csv(args.injections, feeder.num_nodes, feeder.base_kva))
        inputs.append(args.injections)
    solution = solve_power_flow(feeder, injections)
    balance = power_balance(solution, injections)

    out = _out_dir(args, f"{feeder.name}_powerflow")
    written = write_power_flow(solution, out)
    manifest = RunManifest.create("powerflow", {"feeder": feeder.name}, inputs)
    manifest.outputs = [p.name for p in written]
    manifest.write(out)
    _emit({"iterations": solution.iterations, "residual": solution.residual, "p0_kw": feeder.to_kw(solution.p0),
           "losses_kw": feeder.to_kw(solution.losses_p), "balance_residual": balance.residual, "out": str(out)})
    return EXIT_OK


def cmd_linearize(args: argparse.Namespace) -> int:
    from .grid import Injections, linearize, load_feeder, sweep_error
    from .ingestion import RunManifest, read_injections_csv, write_sensitivities

    feeder = load_feeder(args.feeder)
    inputs = [args.feeder]
    base = Injections.zeros(feeder.num_nodes)
    if args.base:
        base = Injections(*read_injections_csv(args.base, feeder.num_nodes, feeder.base_kva))
        inputs.append(args.base)
    started = time.perf_counter()
    sens = linearize(feeder, base)
    sweep = sweep_error(feeder, base, fraction=args.fraction, points=args.points, sens=sens)
    elapsed = time.perf_counter() - started

    out = _out_dir(args, f"{feeder.name}_linearize")
    written = write_sensitivities(sens, sweep, out)
    manifest = RunManifest.create("linearize", {"feeder": feeder.name, "fd_step": settings.FD_STEP,
                                                "fraction": args.fraction, "points": args.points}, inputs)
    manifest.timings = {"linearize_s": elapsed}
    manifest.outputs = [p.name for p in written]
    manifest.write(out)
    _emit({"max_voltage_error_pu": sweep.max_voltage_error, "max_p0_error_pu": sweep.max_p0_error,
           "out": str(out)})
    return EXIT_OK


# ─── Parser ─────────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="markovgrid", description="TCL ensemble and DER coordination toolkit")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    parser.add_argument("--log-file", default=None, help="also log to this file")
    parser.add_argument("--dump-qp", default=None, metavar="PATH",
                        help="write the (first) QP as a COO text dump")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("discretize", help="TCL chain bookkeeping and CFL check")
    p.add_argument("params", help="TCL parameter JSON")
    p.add_argument("--dx", type=float, default=0.1, help="bin width, °C")
    p.add_argument("--dt", type=float, default=settings.MPC_DT_SECONDS, help="time step, s")
    p.add_argument("--dump-chain", default=None, metavar="CSV", help="write Π_nat as row,col,value")
    p.set_defaults(func=cmd_discretize)

    p = sub.add_parser("solve-mdp", help="solve a constrained MDP document")
    p.add_argument("problem")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_solve_mdp)

    p = sub.add_parser("run-mpc", help="closed-loop MPC run of a scenario")
    p.add_argument("scenario")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="simulate fewer steps than the scenario")
    p.add_argument("--forecast", choices=["perfect", "persistence"], default=None)
    p.add_argument("--no-tcl", action="store_true", help="baseline with the populations left uncontrolled")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_run_mpc)

    p = sub.add_parser("powerflow", help="AC power flow")
    p.add_argument("feeder")
    p.add_argument("injections", nargs="?", default=None, help="CSV node,p_kw,q_kvar (generation positive)")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_powerflow)

    p = sub.add_parser("linearize", help="finite-difference sensitivities and sweep report")
    p.add_argument("feeder")
    p.add_argument("base", nargs="?", default=None, help="CSV node,p_kw,q_kvar base injections")
    p.add_argument("--fraction", type=float, default=0.1)
    p.add_argument("--points", type=int, default=5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_linearize)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_file)
    ensure_directories()
    try:
        return args.func(args)
    except MarkovgridError as e:
        for message in e.errors:
            print(f"error: {message}", file=sys.stderr)
        if getattr(e, "residual_history", None):
            print(f"residual history: {e.residual_history}", file=sys.stderr)
        return exit_code_for(e)
    except (json.JSONDecodeError, SchemaError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        logger.exception("Internal error in '%s'", args.command)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
