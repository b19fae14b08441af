"""Equilibrium computation for the affine VI  G u + h + N_Z(u) ∋ 0.

Z is the polyhedron {lower <= u <= upper, C_all u <= c_all}. The primary
solver is a smoothed Fischer-Burmeister Newton method on the KKT system;
a projected-gradient (or primal-dual for coupling rows) fixed-point
iteration is kept as an independent cross-check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal, Optional

import numpy as np

from . import numerics
from .game import CondensedGame

Status = Literal["converged", "max_iter", "singular", "diverged"]

ARMIJO_FACTOR = 0.5
ARMIJO_SLOPE = 1e-4
ARMIJO_MAX_BACKTRACKS = 30
REGULARIZATION = 1e-8
DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-8
    max_iterations: int = 200
    pg_max_iterations: int = 100_000
    smoothing_init: float = 1e-2
    smoothing_shrink: float = 0.2
    pg_step: Optional[float] = None  # default 0.9 * mu / ||G||^2

    def __post_init__(self):
        if min(self.tolerance, self.max_iterations, self.pg_max_iterations, self.smoothing_init) <= 0:
            raise ValueError("solver settings must be positive")
        if not 0.0 < self.smoothing_shrink < 1.0:
            raise ValueError("smoothing_shrink must lie in (0, 1)")
        if self.pg_step is not None and self.pg_step <= 0:
            raise ValueError("pg_step must be positive")


@dataclass(frozen=True)
class VgneSolution:
    """Equilibrium input trajectory with KKT multipliers.

    ``duals`` are ordered as [finite upper bounds, finite lower bounds,
    coupling rows], matching :func:`inequality_rows`.
    """

    u_star: np.ndarray
    duals: np.ndarray
    residual: float
    iterations: int
    status: Status

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def inequality_rows(game: CondensedGame):
    """All constraints as rows ``A u <= b`` (finite box faces, then coupling)."""
    N = game.n_vars
    eye = np.eye(N)
    up = np.flatnonzero(np.isfinite(game.upper))
    lo = np.flatnonzero(np.isfinite(game.lower))
    A = np.vstack([eye[up], -eye[lo], game.C_all]) if N else np.zeros((0, 0))
    b = np.concatenate([game.upper[up], -game.lower[lo], game.c_all])
    return A, b, len(up) + len(lo)


def natural_residual(game: CondensedGame, h, u, coupling_duals) -> float:
    """||u - Π_box(u - (G u + h + C'λ))|| plus the coupling complementarity violation."""
    grad = game.G @ u + h
    if game.C_all.shape[0]:
        grad = grad + game.C_all.T @ coupling_duals
        slack = game.c_all - game.C_all @ u
        comp = np.linalg.norm(np.minimum(coupling_duals, slack))
    else:
        comp = 0.0
    proj = np.clip(u - grad, game.lower, game.upper)
    return float(np.linalg.norm(u - proj) + comp)


def _fb(a, b, sigma):
    r = np.sqrt(a * a + b * b + 2.0 * sigma * sigma)
    return a + b - r, r


def _solve_affine_vi(game: CondensedGame, h, cfg: SolverConfig, warm: Optional[VgneSolution]) -> VgneSolution:
    G = game.G
    N = G.shape[0]
    Aineq, bineq, n_box = inequality_rows(game)
    m = Aineq.shape[0]

    if m == 0:
        try:
            u = numerics.solve_linear(G, -h)
        except numerics.SingularMatrixError:
            return VgneSolution(np.zeros(N), np.zeros(0), math.inf, 1, "singular")
        return VgneSolution(u, np.zeros(0), natural_residual(game, h, u, np.zeros(0)), 1, "converged")

    if warm is not None and warm.u_star.shape == (N,):
        u = warm.u_star.astype(float).copy()
    else:
        u = np.clip(np.zeros(N), game.lower, game.upper)
    if warm is not None and warm.duals.shape == (m,):
        lam = np.maximum(warm.duals, 0.0)
    else:
        lam = np.ones(m)

    def residual(u, lam, sigma):
        s = bineq - Aineq @ u
        r1 = G @ u + h + Aineq.T @ lam
        r2, r = _fb(lam, s, sigma)
        return np.concatenate([r1, r2]), s, r

    def true_residual(u, lam):
        return natural_residual(game, h, u, np.maximum(lam[n_box:], 0.0)) + \
            float(np.linalg.norm(np.minimum(lam[:n_box], (bineq - Aineq @ u)[:n_box])))

    R0, _, _ = residual(u, lam, 0.0)
    sigma = cfg.smoothing_init * max(1.0, float(np.max(np.abs(R0))))
    best = (math.inf, u, lam)
    status: Status = "max_iter"
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        res = true_residual(u, lam)
        if res < best[0]:
            best = (res, u.copy(), lam.copy())
        if res <= cfg.tolerance:
            status = "converged"
            break
        R, s, r = residual(u, lam, sigma)
        Rn = float(np.linalg.norm(R))
        if Rn < sigma:
            sigma *= cfg.smoothing_shrink
            R, s, r = residual(u, lam, sigma)
            Rn = float(np.linalg.norm(R))
        Da = 1.0 - lam / r
        Db = 1.0 - s / r
        J = np.block([[G, Aineq.T], [-Db[:, None] * Aineq, np.diag(Da)]])
        try:
            d = numerics.solve_linear(J, -R)
        except numerics.SingularMatrixError:
            try:
                d = numerics.solve_linear(J + REGULARIZATION * np.eye(N + m), -R)
            except numerics.SingularMatrixError:
                status = "singular"
                break
        merit = 0.5 * Rn * Rn
        t = 1.0
        for _ in range(ARMIJO_MAX_BACKTRACKS):
            u_new, lam_new = u + t * d[:N], lam + t * d[N:]
            Rt, _, _ = residual(u_new, lam_new, sigma)
            if 0.5 * float(Rt @ Rt) <= (1.0 - 2.0 * ARMIJO_SLOPE * t) * merit:
                break
            t *= ARMIJO_FACTOR
        u, lam = u_new, lam_new
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(lam))):
            status = "diverged"
            break
    else:
        res = true_residual(u, lam)
        if res < best[0]:
            best = (res, u.copy(), lam.copy())
        if res <= cfg.tolerance:
            status = "converged"

    if status == "converged":
        return VgneSolution(u, np.maximum(lam, 0.0), true_residual(u, lam), it, status)
    res, u, lam = best
    return VgneSolution(u, np.maximum(lam, 0.0), res, it, status)


def solve_vgne(game: CondensedGame, x, cfg: Optional[SolverConfig] = None,
               warm: Optional[VgneSolution] = None) -> VgneSolution:
    """v-GNE of the condensed game at initial state ``x``."""
    cfg = cfg or SolverConfig()
    h = game.g + game.F_x @ np.asarray(x, dtype=float)
    return _solve_affine_vi(game, h, cfg, warm)


def eval_phi(game: CondensedGame, z, cfg: Optional[SolverConfig] = None,
             warm: Optional[VgneSolution] = None) -> np.ndarray:
    """u with F_u(u) + N_Z(u) ∋ z, i.e. the resolvent-type map (F_u + N_Z)^-1."""
    cfg = cfg or SolverConfig()
    sol = _solve_affine_vi(game, game.g - np.asarray(z, dtype=float), cfg, warm)
    if not sol.converged:
        raise RuntimeError(f"phi evaluation did not converge ({sol.status}, residual {sol.residual:.3e})")
    return sol.u_star


def default_pg_step(game: CondensedGame) -> float:
    return 0.9 * game.mu / numerics.two_norm(game.G) ** 2


def solve_projected_gradient(game: CondensedGame, x, cfg: Optional[SolverConfig] = None,
                             u0=None) -> VgneSolution:
    """Fixed-point iteration u <- Π(u - γ F(u, x)).

    Coupling rows are handled by a projected primal-dual update on their
    multipliers; box-only games reduce to plain projected gradient.
    """
    cfg = cfg or SolverConfig()
    G = game.G
    h = game.g + game.F_x @ np.asarray(x, dtype=float)
    gamma = cfg.pg_step or default_pg_step(game)
    C, c = game.C_all, game.c_all
    u = np.clip(np.zeros(game.n_vars) if u0 is None else np.asarray(u0, dtype=float), game.lower, game.upper)
    lam = np.zeros(C.shape[0])
    tau = gamma
    status: Status = "max_iter"
    it = 0
    for it in range(1, cfg.pg_max_iterations + 1):
        grad = G @ u + h + (C.T @ lam if C.shape[0] else 0.0)
        u_new = np.clip(u - gamma * grad, game.lower, game.upper)
        if C.shape[0]:
            lam = np.maximum(0.0, lam + tau * (C @ (2.0 * u_new - u) - c))
        step = u_new - u
        u = u_new
        if not np.all(np.isfinite(u)) or np.linalg.norm(u) > DIVERGENCE_NORM:
            status = "diverged"
            break
        if np.linalg.norm(step) <= 0.1 * cfg.tolerance * gamma:
            if natural_residual(game, h, u, lam) <= cfg.tolerance:
                status = "converged"
                break
    res = natural_residual(game, h, u, lam) if np.all(np.isfinite(u)) else math.inf
    return VgneSolution(u, lam, res, it, status)


def shift_warm_start(game: CondensedGame, sol: VgneSolution) -> VgneSolution:
    """Drop each agent's first stage and repeat its last one; duals kept as-is."""
    spec = game.spec
    u = sol.u_star.copy()
    for sl, m in zip(spec.input_slices(), spec.n_u_agents):
        seq = u[sl].reshape(spec.K, m)
        u[sl] = np.vstack([seq[1:], seq[-1:]]).reshape(-1)
    return replace(sol, u_star=u)
