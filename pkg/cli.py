"""
Command-line entry point: validate, evaluate, solve, certify, table1, scenario.

Results go to --out (or stdout); status lines go to stderr. Exit codes:
0 success/pass, 1 domain failure, 2 parse failure, 3 budget exhaustion.
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, Optional, Sequence

from pydantic import ValidationError

from config import (COMMANDS, EXIT_BUDGET, EXIT_DOMAIN, EXIT_OK, EXIT_PARSE, FORMATS, SIMULATION_MAX_STEPS,
                    STRATEGIES, TABLE1_EPSILONS, RunConfig)
from game_core import (GameModel, GameModelError, InvalidModelError, LatticeError, compute_beta, format_goal,
                       parse_goal, require_valid, to_rational, validate_model)
from nash_solver import (AbsorptionBoundError, Certificate, certify, horizon_for, solve_best_response_dynamics,
                         solve_grid)
from policy_eval import (OracleBudgetError, PolicyShapeError, UndefinedBoundError, describe_cell,
                         enumerate_oracle, evaluate_best_response, evaluate_policy, simulate)
from scenarios import get_scenario
from schemas import (GameFileError, certificate_csv, certificate_report, parse_game, parse_policy,
                     serialize_game, serialize_policy, table1_csv, value_table_csv)


def get_args(argv: Optional[Sequence[str]] = None):
    parser = argparse.ArgumentParser(
        description="Nash equilibria of Markov games under the first-passage probability criterion")
    parser.add_argument("command", choices=COMMANDS, help="What to run")
    parser.add_argument("scenario", nargs="?", help="Scenario name for 'scenario': insurance or energy")
    parser.add_argument("-m", "--model", help="Path to game file", dest="model")
    parser.add_argument("-p", "--policy", help="Path to policy file (written by 'solve')", dest="policy")
    parser.add_argument("-e", "--epsilon", dest="epsilon", type=float, default=0.5,
                        help="Equilibrium tolerance (Default: 0.5)")
    parser.add_argument("-s", "--strategy", dest="strategy", choices=STRATEGIES, default="brd",
                        help="Candidate source for 'solve': grid, random (seeded grid draws) "
                             "or brd (best-response dynamics) (Default: brd)")
    parser.add_argument("-b", "--budget", dest="budget", type=int, default=100_000,
                        help="Maximum candidates (grid/random) or rounds (brd) (Default: 100000)")
    parser.add_argument("--seed", dest="seed", type=int, help="Seed for stochastic strategies and Monte Carlo")
    parser.add_argument("-o", "--out", dest="out", help="Path to output file (Default: stdout)")
    parser.add_argument("-f", "--format", dest="format", choices=FORMATS, default="csv",
                        help="Certificate output: csv or report (Default: csv)")
    parser.add_argument("-j", "--jobs", dest="jobs", type=int, help="Parallel workers")
    parser.add_argument("--probe", dest="probe", type=int, help="Divergence probe horizon (Default: 50)")
    parser.add_argument("-g", "--goal", dest="goals", help="Initial goal vector, e.g. 2,3 (separate several with ;)")
    parser.add_argument("--horizon", dest="horizon", type=int, help="Evaluation depth m (Default: policy horizon)")
    parser.add_argument("--episodes", dest="episodes", type=int, help="Add a Monte Carlo column with N episodes")
    parser.add_argument("--oracle-depth", dest="oracle_depth", type=int,
                        help="Add an exact path-enumeration column to this depth")
    parser.add_argument("--beta", dest="beta", help="Absorption bound for 'table1', e.g. 2/5")
    parser.add_argument("-v", "--verbose", dest="verbose", action="store_true", help="Print status lines")
    return parser.parse_args(argv)


def status(config: RunConfig, message: str):
    if config.verbose:
        print(message, file=sys.stderr)


def emit(config: RunConfig, text: str):
    if config.out is None:
        sys.stdout.write(text)
    else:
        config.out.write_text(text)
        status(config, f"[+] Wrote {config.out}")


def load_model(config: RunConfig, validate: bool = False) -> GameModel:
    model = parse_game(Path(config.model).read_text())
    status(config, f"[+] Loaded {config.model}: {model.num_players} players, prefix length {model.prefix_length}")
    if validate:
        require_valid(model)
    return model


def load_policy(config: RunConfig, model: GameModel):
    policy = parse_policy(Path(config.policy).read_text(), model)
    policy.check(model)
    return policy


def render_certificate(config: RunConfig, cert: Certificate) -> str:
    return certificate_csv(cert) if config.format == "csv" else certificate_report(cert)


def cmd_validate(config: RunConfig) -> int:
    model = load_model(config)
    report = validate_model(model, config.probe)
    lines = [f"ok: {str(report.ok).lower()}"]
    for finding in report.findings:
        lines.append(f"{finding.severity}: {finding.location}: {finding.message}")
    if report.beta is not None:
        lines.append(f"beta = {report.beta}")
    if report.beta_sequence is not None:
        lines.append(f"sum of beta_n: {report.beta_sequence.verdict} "
                     f"(partial sum over {config.probe} stages = {report.beta_sequence.partial_sum})")
    emit(config, "\n".join(lines) + "\n")
    if not report.ok:
        status(config, f"[-] {len(report.errors())} validation error(s)")
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_evaluate(config: RunConfig) -> int:
    model = load_model(config, validate=True)
    policy = load_policy(config, model)
    m = policy.horizon if config.horizon is None else config.horizon
    beta = compute_beta(model)
    u_tables, v_tables = [], []
    for k in range(model.num_players):
        u_tables.append(evaluate_policy(model, policy, None, k, m, beta=beta, jobs=config.jobs,
                                        verbose=config.verbose))
        v_tables.append(evaluate_best_response(model, policy, None, k, m, beta=beta, jobs=config.jobs,
                                               verbose=config.verbose))

    extra_columns = []
    if config.episodes:
        extra_columns += ["mc_estimate", "mc_stderr"]
    if config.oracle_depth is not None:
        extra_columns += ["oracle_lower", "oracle_upper"]
    extra: Dict = {}
    if extra_columns:
        for k in range(model.num_players):
            for state in model.non_target_states(0):
                for goal in policy.lattice.goals(0):
                    cells = []
                    if config.episodes:
                        cells += list(simulate(model, policy, state, goal, k, config.episodes, SIMULATION_MAX_STEPS,
                                               config.seed, jobs=config.jobs, verbose=config.verbose))
                    if config.oracle_depth is not None:
                        lower, upper = enumerate_oracle(model, policy, state, goal, k, config.oracle_depth)
                        cells += [float(lower), float(upper)]
                    extra[(k, state, goal)] = cells

    header = {"beta": beta, "m": m, "status": u_tables[0].status}
    emit(config, value_table_csv(u_tables, v_tables, extra_columns, extra, header))
    if not u_tables[0].certified:
        status(config, "[!] beta = 0: values are uncertified truncations")
    return EXIT_OK


def cmd_solve(config: RunConfig) -> int:
    model = load_model(config, validate=True)
    goals = [parse_goal(g) for g in config.goals.split(";")]
    if config.strategy == "brd":
        cert = solve_best_response_dynamics(model, goals, config.epsilon, config.budget, config.seed,
                                            jobs=config.jobs, verbose=config.verbose)
    else:
        order = "deterministic" if config.strategy == "grid" else "seeded-random"
        cert = solve_grid(model, goals, config.epsilon, config.budget, order=order, seed=config.seed,
                          jobs=config.jobs, verbose=config.verbose)
    emit(config, render_certificate(config, cert))
    if config.policy is not None and cert.policy is not None:
        Path(config.policy).write_text(serialize_policy(cert.policy))
        status(config, f"[+] Wrote policy to {config.policy}")
    if cert.passed:
        status(config, f"[+] Certified {config.epsilon}-Nash equilibrium, max gap {cert.max_gap:.6g}")
        return EXIT_OK
    print(f"[-] {cert.status}: best max gap {cert.max_gap:.6g} >= {cert.threshold:.6g}", file=sys.stderr)
    return EXIT_BUDGET


def cmd_certify(config: RunConfig) -> int:
    model = load_model(config, validate=True)
    policy = load_policy(config, model)
    cert = certify(model, policy, config.epsilon, jobs=config.jobs,
                   provenance={"source": str(config.policy), "iterations": 1, "seed": None})
    emit(config, render_certificate(config, cert))
    if cert.passed:
        status(config, f"[+] Certificate passed, max gap {cert.max_gap:.6g}")
        return EXIT_OK
    status(config, f"[-] Certificate failed, max gap {cert.max_gap:.6g} >= {cert.threshold:.6g}")
    return EXIT_DOMAIN


def cmd_table1(config: RunConfig) -> int:
    beta = to_rational(config.beta) if config.beta is not None else compute_beta(load_model(config))
    rows = [(eps, horizon_for(eps, beta)) for eps in TABLE1_EPSILONS]
    emit(config, table1_csv(beta, rows))
    return EXIT_OK


def cmd_scenario(config: RunConfig) -> int:
    model, goals = get_scenario(config.scenario)
    emit(config, serialize_game(model))
    if goals is not None:
        status(config, f"[+] Suggested initial goal: {format_goal(goals)}")
    return EXIT_OK


COMMAND_HANDLERS = {
    "validate": cmd_validate,
    "evaluate": cmd_evaluate,
    "solve": cmd_solve,
    "certify": cmd_certify,
    "table1": cmd_table1,
    "scenario": cmd_scenario,
}


def build_config(args) -> RunConfig:
    options = {key: value for key, value in vars(args).items() if value is not None}
    return RunConfig(**options)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = get_args(argv)
    try:
        config = build_config(args)
    except ValidationError as e:
        for error in e.errors():
            print(f"[-] {error['msg']}", file=sys.stderr)
        return EXIT_PARSE

    try:
        return COMMAND_HANDLERS[config.command](config)
    except GameFileError as e:
        print(f"[-] Parse error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except InvalidModelError as e:
        print(f"[-] Invalid model: {len(e.findings)} validation error(s)", file=sys.stderr)
        for finding in e.findings:
            print(f"[-] {finding.location}: {finding.message}", file=sys.stderr)
        return EXIT_DOMAIN
    except AbsorptionBoundError as e:
        print(f"[-] {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except PolicyShapeError as e:
        where = f" (first offending cell: {describe_cell(e.cell)})" if e.cell is not None else ""
        print(f"[-] Policy does not match model: {e}{where}", file=sys.stderr)
        return EXIT_DOMAIN
    except OracleBudgetError as e:
        print(f"[-] {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (GameModelError, LatticeError, UndefinedBoundError, ValueError) as e:
        print(f"[-] {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
