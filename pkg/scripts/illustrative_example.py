"""Two-agent example: monotonicity constants, certificate search and closed-loop rollouts.

Usage: python3 scripts/illustrative_example.py [--out results/illustrative] [--plot]
"""
import argparse
from pathlib import Path

import numpy as np

from rhg import certificates as cert
from rhg.cli import write_trajectory_csv
from rhg.game import condense
from rhg.scenarios import builtin
from rhg.simulator import simulate, solve_steady_state


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/illustrative"))
    ap.add_argument("--budget", type=int, default=20_000)
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    runs = {}
    for name in ("illustrative_unstable", "illustrative_stable"):
        sc = builtin(name)
        game = condense(sc.spec)
        res = cert.search_certificate(game, budget=args.budget)
        traj = simulate(sc.system, sc.x0, sc.T)
        ss = solve_steady_state(sc.spec)
        write_trajectory_csv(args.out / f"{name}.csv", traj)
        runs[name] = traj
        print(f"{name:24s} mu={game.mu:.4f}  certificate={'yes' if res.feasible else 'no'} "
              f"(max eig {res.achieved_max_eig:+.3g})  |x_T|={np.linalg.norm(traj.states[-1]):.3g}  "
              f"|x_T - x_s|={np.linalg.norm(traj.states[-1] - ss.x_s):.3g}  status={traj.status}")

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, axes = plt.subplots(1, 2, figsize=(10, 3.5), sharey=True)
        for ax, (name, traj) in zip(axes, runs.items()):
            ax.plot(traj.states)
            ax.set_title(name)
            ax.set_xlabel("t")
        axes[0].set_ylabel("state")
        fig.tight_layout()
        fig.savefig(args.out / "states.png", dpi=120)
        print(f"plot written to {args.out / 'states.png'}")


if __name__ == "__main__":
    main()
