"""Battery charging game: local certificates and shock response at two prediction horizons.

The builtin uses a horizon of 2, where every local certificate is found.
Longer horizons track the steady state of charge more closely but the
per-agent conditions stop being satisfiable; this script prints both.
"""
import argparse
from pathlib import Path

import numpy as np

from rhg import certificates as cert
from rhg.cli import write_trajectory_csv
from rhg.game import condense
from rhg.scenarios import DEFAULT_SEED, actual_demand, battery_nominal_spec, battery_schedule, draw_battery_parameters
from rhg.simulator import convergence_metrics, simulate, solve_steady_state


def study(seed, horizon, out: Path, budget):
    p = draw_battery_parameters(seed, horizon=horizon)
    spec = battery_nominal_spec(p)
    results = cert.search_local_certificates(condense(spec), budget=budget)
    hours = p.demand.shape[0] - horizon
    traj = simulate(battery_schedule(p), p.x0, hours)
    ss = solve_steady_state(spec)
    dist = convergence_metrics(traj, ss, spec).agent_distances
    load = np.array([actual_demand(p, t).sum() + traj.inputs[t].sum() for t in range(traj.steps)])
    write_trajectory_csv(out / f"battery_K{horizon}.csv", traj)
    print(f"K={horizon:2d}  local LMI max eig {[round(r.achieved_max_eig, 3) for r in results]}  "
          f"certified={cert.closed_loop_certified(results)}")
    print(f"      x_s={np.round(ss.x_s, 2)}  x_T={np.round(traj.states[-1], 2)}  "
          f"load range [{load.min():.2f}, {load.max():.2f}] (L_max {p.L_max})")
    print(f"      distance to x_s at t=0/21/25/48: {np.round(dist[[0, 21, 25, hours]], 2).tolist()}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    ap.add_argument("--horizons", type=int, nargs="+", default=[2, 24])
    ap.add_argument("--budget", type=int, default=50_000)
    ap.add_argument("--out", type=Path, default=Path("results/battery"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for K in args.horizons:
        study(args.seed, K, args.out, args.budget)


if __name__ == "__main__":
    main()
