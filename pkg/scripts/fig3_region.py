"""Scalar feasibility region over (A, W) at fixed mu and lambda1, as a CSV and optional heat map."""
import argparse
import csv
from pathlib import Path

from rhg import certificates as cert


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolution", type=int, default=201)
    ap.add_argument("--out", type=Path, default=Path("results/region"))
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    p = cert.FIG3B_PRESET
    grid = cert.feasibility_region(p["A"], p["W"], p["mu"], p["lambda1"], args.resolution, K=p["K"], B=p["B"])
    with open(args.out / "region.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["A", "W", "mu", "lambda1", "feasible"])
        w.writerows(grid.rows())
    print(f"feasible fraction {grid.feasible_fraction:.4f} on a {args.resolution}x{args.resolution} grid")

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        F = grid.feasible[:, :, 0, 0]
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.pcolormesh(grid.W, grid.A, F, shading="auto", cmap="Greens")
        ax.set_xlabel("W")
        ax.set_ylabel("A")
        ax.set_title(f"mu={p['mu'][0]}, lambda1={p['lambda1'][0]}, K={p['K']}")
        fig.tight_layout()
        fig.savefig(args.out / "region.png", dpi=120)
        print(f"plot written to {args.out / 'region.png'}")


if __name__ == "__main__":
    main()
