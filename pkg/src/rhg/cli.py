"""Command-line entry points: simulate, certify, region, steady-state.

Exit codes: 0 success, 1 usage or precondition error, 2 certificate not
found, 3 solver failure during a simulation (a partial CSV is still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import certificates as cert
from .game import GameError, condense
from .scenarios import BUILTINS, ScenarioError, load_scenario
from .simulator import SimulationError, simulate, solve_steady_state
from .solver import SolverConfig

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("rhg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _cfg(args) -> SolverConfig:
    return SolverConfig(tolerance=args.tol) if args.tol is not None else SolverConfig()


def write_trajectory_csv(path, traj, V=None) -> None:
    """Columns: t, x_0..x_{n-1}, u_0..u_{m-1}, residual, min_slack, V.

    Row t holds the state x_t and the input applied at t; the final row has
    the last state only. V is left empty unless a Lyapunov matrix was given.
    """
    n, m = traj.states.shape[1], traj.inputs.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x_{i}" for i in range(n)] + [f"u_{j}" for j in range(m)]
                   + ["residual", "min_slack", "V"])
        for t in range(traj.states.shape[0]):
            row = [t] + [repr(float(v)) for v in traj.states[t]]
            if t < traj.steps:
                row += [repr(float(v)) for v in traj.inputs[t]]
                row += [repr(float(traj.residuals[t])), repr(float(traj.min_slack[t]))]
            else:
                row += [""] * (m + 2)
            row.append("" if V is None else repr(float(V[t])))
            w.writerow(row)


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    T = args.steps or sc.T
    status = EXIT_OK
    try:
        traj = simulate(sc.system, sc.x0, T, _cfg(args))
    except SimulationError as exc:
        log.error("%s", exc)
        traj, status = exc.trajectory, EXIT_SOLVER
    summary = traj.summary()
    summary["scenario"] = sc.name
    try:
        ss = solve_steady_state(sc.spec, _cfg(args))
        summary["x_s"] = ss.x_s
        summary["distance_to_steady_state"] = float(np.linalg.norm(traj.states[-1] - ss.x_s))
    except (GameError, RuntimeError) as exc:
        summary["x_s"] = None
        summary["distance_to_steady_state"] = None
        summary["steady_state_error"] = str(exc)
    V = None
    if args.certificate:
        doc = json.loads(Path(args.certificate).read_text())
        P = np.asarray(doc["P"], dtype=float)
        x_bar = np.asarray(summary["x_s"] if summary["x_s"] is not None else traj.states[-1])
        V = traj.with_lyapunov(P, x_bar).lyapunov
    write_trajectory_csv(args.out, traj, V)
    _dump(Path(args.out).with_suffix(".summary.json"), summary)
    print(json.dumps({k: summary[k] for k in ("status", "diverged", "final_state_norm",
                                              "max_coupling_violation")}, default=_jsonable))
    return status


def _scalar_inputs(game):
    spec = game.spec
    out = []
    for v, ag in enumerate(spec.agents):
        if ag.dynamics.n_x != 1 or ag.dynamics.n_u != 1:
            raise UsageError(f"scalar mode needs 1-D agents; agent {v} has n_x={ag.dynamics.n_x}, n_u={ag.dynamics.n_u}")
        out.append(cert.ScalarCertificateInput(float(ag.dynamics.A[0, 0]), float(ag.dynamics.B[0, 0]),
                                               float(ag.cost.W[0, 0]), game.mu, spec.K))
    return out


def cmd_certify(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    budget = args.budget or sc.budget
    game = condense(sc.spec)
    if args.mode == "global":
        results = [cert.search_certificate(game, sc.delta, budget)]
        payload = {"mode": "global", "mu": game.mu, **results[0].to_dict()}
        feasible = results[0].feasible
    elif args.mode == "local":
        if sc.spec.mode != "decoupled":
            raise UsageError("local mode needs a scenario with decoupled dynamics (mode 'decoupled')")
        results = cert.search_local_certificates(game, sc.delta, budget)
        feasible = cert.closed_loop_certified(results)
        payload = {"mode": "local", "mu": game.mu, "certified": feasible,
                   "P": cert.block_lyapunov_matrix(results), "agents": [r.to_dict() for r in results]}
    else:
        if sc.spec.mode != "decoupled" and sc.spec.M > 1:
            raise UsageError("scalar mode needs decoupled 1-D agents")
        inputs = _scalar_inputs(game)
        res = [cert.scalar_certificate(i) for i in inputs]
        feasible = all(r.feasible for r in res)
        payload = {"mode": "scalar", "mu": game.mu, "certified": feasible,
                   "agents": [{"feasible": r.feasible, "condition": r.condition, "lambda1": r.lambda1,
                               "lambda2": r.lambda2, "lhs": r.lhs, "infimum_i": r.infimum_i,
                               "infimum_ii": r.infimum_ii} for r in res]}
    if not feasible:
        payload["note"] = ("no certificate found; the condition is sufficient only, so this does not "
                           "show that the closed loop is unstable")
    _dump(args.out, payload)
    print(f"{args.mode}: {'certified' if feasible else 'not certified'}")
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def cmd_region(args) -> int:
    if args.preset == "fig3b":
        p = cert.FIG3B_PRESET
        ranges = dict(A_range=p["A"], W_range=p["W"], mu_range=p["mu"], lambda1_range=p["lambda1"])
        K, B = p["K"], p["B"]
    else:
        if None in (args.A, args.W, args.mu, args.lambda1):
            raise UsageError("give --preset fig3b or all of --A, --W, --mu, --lambda1")
        ranges = dict(A_range=tuple(args.A), W_range=tuple(args.W), mu_range=tuple(args.mu),
                      lambda1_range=tuple(args.lambda1))
        K, B = args.horizon, args.B
    try:
        grid = cert.feasibility_region(**ranges, resolution=args.resolution, K=K, B=B)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["A", "W", "mu", "lambda1", "feasible"])
        for row in grid.rows():
            w.writerow([repr(float(v)) for v in row[:4]] + [row[4]])
    print(f"feasible fraction {grid.feasible_fraction:.4f}")
    return EXIT_OK


def cmd_steady_state(args) -> int:
    sc = load_scenario(args.scenario, args.seed)
    try:
        ss = solve_steady_state(sc.spec, _cfg(args))
    except (GameError, RuntimeError) as exc:
        raise UsageError(f"steady state unavailable: {exc}") from exc
    _dump(args.out, {"scenario": sc.name, "u_s": ss.u_s, "x_s": ss.x_s, "residual": ss.residual,
                     "status": ss.status})
    print(json.dumps({"x_s": ss.x_s}, default=_jsonable))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rhg", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_help):
        p.add_argument("--scenario", required=True, help=f"JSON file or builtin ({', '.join(BUILTINS)})")
        p.add_argument("--out", required=True, help=out_help)
        p.add_argument("--seed", type=int, default=None, help="re-draw ranged builtin parameters")
        p.add_argument("--tol", type=float, default=None, help="equilibrium solver tolerance")

    p = sub.add_parser("simulate", help="closed-loop rollout to CSV")
    common(p, "trajectory CSV; a .summary.json is written next to it")
    p.add_argument("--steps", type=int, default=None, help="override the scenario's number of steps")
    p.add_argument("--certificate", default=None, help="certificate JSON whose P fills the V column")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("certify", help="search a stability certificate")
    common(p, "certificate JSON")
    p.add_argument("--mode", choices=("global", "local", "scalar"), default="global")
    p.add_argument("--budget", type=int, default=None, help="subgradient iteration budget")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("region", help="scalar feasibility grid to CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--preset", choices=("fig3b",), default=None)
    for name in ("A", "W", "mu", "lambda1"):
        p.add_argument(f"--{name}", type=float, nargs=2, metavar=("LO", "HI"), default=None)
    p.add_argument("--resolution", type=int, default=101)
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--B", type=float, default=1.0)
    p.set_defaults(func=cmd_region)

    p = sub.add_parser("steady-state", help="solve the steady-state game")
    common(p, "steady-state JSON")
    p.set_defaults(func=cmd_steady_state)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "budget", None) is not None and args.budget < 1:
        print("rhg: error: --budget must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ScenarioError, ValueError) as exc:
        print(f"rhg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())
