"""Closed-loop rollout under the receding-horizon feedback law.

At every step the condensed game is solved at the measured state, the
stage-0 inputs of all agents are applied and the rest of the plan is
discarded (it only seeds the next solve).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import numerics
from .game import CondensedGame, GameError, GameSpec, condense
from .solver import SolverConfig, VgneSolution, shift_warm_start, solve_vgne

log = logging.getLogger(__name__)

DIVERGENCE_THRESHOLD = 1e6


class StepError(RuntimeError):
    """The equilibrium solve at one control step failed."""

    def __init__(self, message: str, solution: VgneSolution):
        super().__init__(message)
        self.solution = solution


class SimulationError(RuntimeError):
    """A simulation aborted; ``trajectory`` holds everything up to the failing step."""

    def __init__(self, message: str, trajectory: "Trajectory"):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray       # (T_done + 1, n_x)
    inputs: np.ndarray       # (T_done, n_u), applied stage-0 inputs
    residuals: np.ndarray    # (T_done,)
    iterations: np.ndarray   # (T_done,)
    min_slack: np.ndarray    # (T_done,), smallest stage-0 constraint slack
    coupling_violation: np.ndarray  # (T_done,), max(0, C u_0 - c_0)
    diverged: bool = False
    status: str = "ok"
    lyapunov: Optional[np.ndarray] = None

    def __post_init__(self):
        T = self.inputs.shape[0]
        if self.states.shape[0] != T + 1:
            raise ValueError("states must have one more row than inputs")
        for name in ("residuals", "iterations", "min_slack", "coupling_violation"):
            if getattr(self, name).shape[0] != T:
                raise ValueError(f"{name} has the wrong length")

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]

    def with_lyapunov(self, P, x_bar) -> "Trajectory":
        X = self.states - np.asarray(x_bar, dtype=float)
        V = np.einsum("ti,ij,tj->t", X, np.asarray(P, dtype=float), X)
        return Trajectory(self.states, self.inputs, self.residuals, self.iterations, self.min_slack,
                          self.coupling_violation, self.diverged, self.status, V)

    def summary(self) -> dict:
        return {
            "steps": self.steps,
            "status": self.status,
            "diverged": self.diverged,
            "final_state_norm": float(np.linalg.norm(self.states[-1])),
            "max_residual": float(self.residuals.max()) if self.steps else 0.0,
            "max_constraint_violation": float(max(0.0, -self.min_slack.min())) if self.steps else 0.0,
            "max_coupling_violation": float(self.coupling_violation.max()) if self.steps else 0.0,
        }


@dataclass(frozen=True)
class ParameterSchedule:
    """Time-varying game: ``spec_at(t)`` is the game the agents solve at step t.

    ``nominal`` is the frozen game used for certificates and the steady state.
    """

    spec_at: Callable[[int], GameSpec]
    nominal: GameSpec
    length: Optional[int] = None

    def __call__(self, t: int) -> GameSpec:
        if self.length is not None and not 0 <= t < self.length:
            raise IndexError(f"schedule covers steps 0..{self.length - 1}, asked for {t}")
        return self.spec_at(t)


@dataclass(frozen=True)
class StepResult:
    u_applied: np.ndarray
    x_next: np.ndarray
    solution: VgneSolution


def _stage0_slacks(game: CondensedGame, u0):
    """Slacks of every finite stage-0 box face and coupling row at the applied input."""
    spec = game.spec
    lo = np.concatenate([spec.box(v)[0][0] for v in range(spec.M)])
    hi = np.concatenate([spec.box(v)[1][0] for v in range(spec.M)])
    box = np.concatenate([(hi - u0)[np.isfinite(hi)], (u0 - lo)[np.isfinite(lo)]])
    cs = spec.constraints
    if cs.n_coupling:
        coup = spec.coupling_rhs()[0] - cs.C @ u0
    else:
        coup = np.zeros(0)
    slacks = np.concatenate([box, coup])
    min_slack = float(slacks.min()) if slacks.size else math.inf
    viol = float(max(0.0, -coup.min())) if coup.size else 0.0
    return min_slack, viol


def rhg_step(game: CondensedGame, x, cfg: Optional[SolverConfig] = None,
             warm: Optional[VgneSolution] = None) -> StepResult:
    """Apply κ(x) = Ξ u*(x) and advance the plant one step."""
    x = np.asarray(x, dtype=float)
    sol = solve_vgne(game, x, cfg, warm)
    if not sol.converged:
        raise StepError(f"equilibrium solve failed ({sol.status}, residual {sol.residual:.3e})", sol)
    u0 = game.Xi @ sol.u_star
    return StepResult(u0, game.A @ x + game.B_global @ u0, sol)


System = Union[CondensedGame, GameSpec, ParameterSchedule, Callable[[int], GameSpec]]


def simulate(system: System, x0, T: int, cfg: Optional[SolverConfig] = None,
             divergence_threshold: float = DIVERGENCE_THRESHOLD, warm_start: bool = True) -> Trajectory:
    """Roll the closed loop forward ``T`` steps.

    A time-varying ``system`` (schedule or callable) is re-condensed every
    step. Divergence ends the run early with ``diverged=True``; a failed
    solve raises :class:`SimulationError` carrying the partial trajectory.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    cfg = cfg or SolverConfig()
    if isinstance(system, CondensedGame):
        game_at = lambda t, g=system: g
    elif isinstance(system, GameSpec):
        g0 = condense(system)
        game_at = lambda t: g0
    elif callable(system):
        cache = {}

        def game_at(t):
            spec = system(t)
            key = id(spec)
            if key not in cache:
                cache.clear()
                cache[key] = (spec, condense(spec))
            return cache[key][1]
    else:
        raise TypeError(f"cannot simulate {type(system).__name__}")

    x = np.asarray(x0, dtype=float).reshape(-1)
    states, inputs, res, its, slack, viol = [x], [], [], [], [], []
    warm = None
    diverged = False
    status = "ok"

    def pack():
        n_u = inputs[0].shape[0] if inputs else game_at(0).Xi.shape[0]
        return Trajectory(np.array(states), np.array(inputs).reshape(len(inputs), n_u), np.array(res, dtype=float),
                          np.array(its, dtype=int), np.array(slack, dtype=float), np.array(viol, dtype=float),
                          diverged, status)

    for t in range(T):
        game = game_at(t)
        if game.n_x != x.shape[0]:
            raise numerics.DimensionError(f"state has dimension {x.shape[0]}, game expects {game.n_x}")
        if warm is not None and warm.u_star.shape[0] != game.n_vars:
            warm = None
        try:
            step = rhg_step(game, x, cfg, warm)
        except StepError as exc:
            status = "solver_failure"
            log.error("step %d: %s", t, exc)
            raise SimulationError(f"step {t}: {exc}", pack()) from exc
        ms, cv = _stage0_slacks(game, step.u_applied)
        x = step.x_next
        states.append(x)
        inputs.append(step.u_applied)
        res.append(step.solution.residual)
        its.append(step.solution.iterations)
        slack.append(ms)
        viol.append(cv)
        if warm_start:
            warm = shift_warm_start(game, step.solution)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > divergence_threshold:
            diverged = True
            status = "diverged"
            log.info("state norm exceeded %.3g at step %d", divergence_threshold, t + 1)
            break
    return pack()


@dataclass(frozen=True)
class SteadyState:
    u_s: np.ndarray
    x_s: np.ndarray
    residual: float
    status: str = "converged"


def steady_state_game(spec: GameSpec) -> CondensedGame:
    """Single-stage game in u with the state eliminated through x = (I - A)^-1 B u."""
    A = spec.global_A()
    rho = numerics.spectral_radius(A)
    if rho >= 1.0:
        raise GameError(f"steady state needs a stable A, spectral radius is {rho:.6g}")
    n = A.shape[0]
    S = numerics.solve_linear(np.eye(n) - A, np.hstack(spec.global_B()))
    n_u = spec.n_u
    G = np.zeros((n_u, n_u))
    g = np.zeros(n_u)
    st = spec.stage_input_slices()
    for v, (ag, sx, sv) in enumerate(zip(spec.agents, spec.state_slices(), st)):
        c = ag.cost
        Sx = S[sx]              # own state as a function of all inputs
        Sv = Sx[:, sv]          # ... and of this agent's inputs only
        G[sv] += 2.0 * Sv.T @ c.W @ Sx
        G[sv, sv] += c.Q_self
        for j, Qc in c.Q_cross.items():
            G[sv, st[j]] += Qc
        g[sv] += Sv.T @ c.w + c.q_stages(spec.K)[0]
    lower = np.concatenate([spec.box(v)[0][0] for v in range(spec.M)])
    upper = np.concatenate([spec.box(v)[1][0] for v in range(spec.M)])
    cs = spec.constraints
    C, c = (cs.C, spec.coupling_rhs()[0]) if cs.n_coupling else (None, None)
    return CondensedGame.affine(G, g, None, lower, upper, C, c), S


def solve_steady_state(spec: GameSpec, cfg: Optional[SolverConfig] = None) -> SteadyState:
    game, S = steady_state_game(spec)
    sol = solve_vgne(game, np.zeros(1), cfg)
    if not sol.converged:
        raise RuntimeError(f"steady-state solve failed ({sol.status}, residual {sol.residual:.3e})")
    return SteadyState(sol.u_star, S @ sol.u_star, sol.residual, sol.status)


@dataclass(frozen=True)
class ConvergenceMetrics:
    distances: np.ndarray               # ||x_t - x_s|| for every recorded state
    agent_distances: Optional[np.ndarray]  # (T+1, M) per-agent distances, decoupled games only
    max_constraint_violation: float
    max_coupling_violation: float


def convergence_metrics(traj: Trajectory, steady: SteadyState, spec: Optional[GameSpec] = None) -> ConvergenceMetrics:
    x_s = np.asarray(steady.x_s, dtype=float)
    if traj.states.shape[1] != x_s.shape[0]:
        raise numerics.DimensionError(f"trajectory states are {traj.states.shape[1]}-dimensional, x_s is {x_s.shape[0]}")
    diff = traj.states - x_s
    per_agent = None
    if spec is not None:
        per_agent = np.column_stack([np.linalg.norm(diff[:, sl], axis=1) for sl in spec.state_slices()])
    s = traj.summary()
    return ConvergenceMetrics(np.linalg.norm(diff, axis=1), per_agent,
                              s["max_constraint_violation"], s["max_coupling_violation"])


def tail_mean(traj: Trajectory, fraction: float = 0.2) -> np.ndarray:
    """Equilibrium estimate from the last ``fraction`` of the recorded states."""
    n = max(1, int(round(fraction * traj.states.shape[0])))
    return traj.states[-n:].mean(axis=0)
