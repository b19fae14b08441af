"""Multi-agent LTI game data model and condensing into an affine pseudo-gradient.

Stacked input layout is agent-major then stage-major::

    u = col_v (u^v_0, u^v_1, ..., u^v_{K-1})

and the pseudo-gradient is F(u, x) = G u + g + F_x x.
"""
from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from . import numerics

MU_THRESHOLD = 1e-10
SYMMETRY_WARN_TOL = 1e-12


class GameError(ValueError):
    pass


class MonotonicityError(GameError):
    def __init__(self, message: str, lambda_min: float):
        super().__init__(f"{message} (lambda_min = {lambda_min:.6g})")
        self.lambda_min = lambda_min


class InfeasibleError(GameError):
    pass


def _mat(M, name) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise GameError(f"{name} must be a matrix")
    if not np.all(np.isfinite(M)):
        raise GameError(f"{name} has non-finite entries")
    return M


@dataclass(frozen=True)
class AgentDynamics:
    """Input map of one agent; ``A`` is the shared global matrix in coupled mode."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _mat(self.A, "A")
        B = _mat(self.B, "B")
        if A.shape[0] != A.shape[1]:
            raise GameError(f"A must be square, got {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise GameError(f"B has {B.shape[0]} rows but A is {A.shape[0]}x{A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class StageCost:
    """Stage cost x'Wx + w'x + 1/2 u'Q_self u + sum_j u'Q_cross[j] u^j + q_k'u.

    ``q`` is either a single vector or one row per prediction stage.
    """

    W: np.ndarray
    w: np.ndarray
    Q_self: np.ndarray
    Q_cross: dict = field(default_factory=dict)
    q: Optional[np.ndarray] = None

    def __post_init__(self):
        W = _mat(self.W, "W")
        if W.shape[0] != W.shape[1]:
            raise GameError(f"W must be square, got {W.shape}")
        asym = np.max(np.abs(W - W.T)) if W.size else 0.0
        if asym > SYMMETRY_WARN_TOL:
            warnings.warn(f"state weight is asymmetric by {asym:.3g}; using its symmetric part")
        W = 0.5 * (W + W.T)
        if W.size and numerics.lambda_min(W) < -1e-12 * max(1.0, np.abs(W).max()):
            raise GameError("state weight W must be positive semidefinite")
        w = np.asarray(self.w, dtype=float).reshape(-1)
        if w.size == 0:
            w = np.zeros(W.shape[0])
        if w.shape[0] != W.shape[0]:
            raise GameError(f"w has length {w.shape[0]}, expected {W.shape[0]}")
        Q = _mat(self.Q_self, "Q_self")
        if Q.shape[0] != Q.shape[1]:
            raise GameError("Q_self must be square")
        if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.abs(Q).max()):
            raise GameError("Q_self must be symmetric")
        cross = {int(j): _mat(C, f"Q_cross[{j}]") for j, C in dict(self.Q_cross).items()}
        for j, C in cross.items():
            if C.shape[0] != Q.shape[0]:
                raise GameError(f"Q_cross[{j}] has {C.shape[0]} rows, expected {Q.shape[0]}")
        q = np.zeros(Q.shape[0]) if self.q is None else np.asarray(self.q, dtype=float)
        if q.shape[-1] != Q.shape[0] or q.ndim > 2:
            raise GameError(f"q has shape {q.shape}, expected (..., {Q.shape[0]})")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "Q_self", Q)
        object.__setattr__(self, "Q_cross", cross)
        object.__setattr__(self, "q", q)

    def q_stages(self, K: int) -> np.ndarray:
        if self.q.ndim == 1:
            return np.tile(self.q, (K, 1))
        if self.q.shape[0] < K:
            raise GameError(f"q has {self.q.shape[0]} stages, horizon needs {K}")
        return self.q[:K]


@dataclass(frozen=True)
class Agent:
    dynamics: AgentDynamics
    cost: StageCost


@dataclass(frozen=True)
class ConstraintSpec:
    """Per-agent input boxes and per-stage coupling rows ``C u_k <= c_k``.

    ``lower[v]``/``upper[v]`` have shape (n_u^v,) or (K, n_u^v); ``None``
    entries mean unbounded. ``C`` acts on the stacked stage input
    u_k = col_v(u^v_k); ``c`` has shape (m,) or (K, m).
    """

    lower: tuple = ()
    upper: tuple = ()
    C: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(None if b is None else np.asarray(b, dtype=float) for b in self.lower))
        object.__setattr__(self, "upper", tuple(None if b is None else np.asarray(b, dtype=float) for b in self.upper))
        if (self.C is None) != (self.c is None):
            raise GameError("coupling needs both C and c")
        if self.C is not None:
            C = np.atleast_2d(np.asarray(self.C, dtype=float))
            c = np.asarray(self.c, dtype=float)
            if not (np.all(np.isfinite(C)) and np.all(np.isfinite(c))):
                raise GameError("coupling rows must be finite")
            if c.shape[-1] != C.shape[0]:
                raise GameError(f"coupling rhs has shape {c.shape}, expected (..., {C.shape[0]})")
            object.__setattr__(self, "C", C)
            object.__setattr__(self, "c", c)

    @property
    def n_coupling(self) -> int:
        return 0 if self.C is None else self.C.shape[0]


@dataclass(frozen=True)
class GameSpec:
    """M-agent finite-horizon LTI game.

    ``terminal_cost`` adds the stage cost's state term on the last predicted
    state x_K (the K+1-block weighting of the prediction matrices).
    """

    agents: tuple
    horizon: int
    constraints: ConstraintSpec = field(default_factory=ConstraintSpec)
    mode: Literal["coupled", "decoupled"] = "coupled"
    terminal_cost: bool = False

    def __post_init__(self):
        agents = tuple(self.agents)
        object.__setattr__(self, "agents", agents)
        if not agents:
            raise GameError("a game needs at least one agent")
        if int(self.horizon) < 2:
            raise GameError(f"horizon must be at least 2, got {self.horizon}")
        if self.mode not in ("coupled", "decoupled"):
            raise GameError(f"unknown mode {self.mode!r}")
        for v, ag in enumerate(agents):
            d, c = ag.dynamics, ag.cost
            if c.W.shape[0] != d.n_x:
                raise GameError(f"agent {v}: W is {c.W.shape[0]}-dimensional, state is {d.n_x}")
            if c.Q_self.shape[0] != d.n_u:
                raise GameError(f"agent {v}: Q_self is {c.Q_self.shape[0]}-dimensional, input is {d.n_u}")
            for j, Qc in c.Q_cross.items():
                if not 0 <= j < len(agents) or j == v:
                    raise GameError(f"agent {v}: Q_cross refers to invalid agent {j}")
                if Qc.shape[1] != agents[j].dynamics.n_u:
                    raise GameError(f"agent {v}: Q_cross[{j}] has {Qc.shape[1]} columns, agent {j} has {agents[j].dynamics.n_u} inputs")
            c.q_stages(self.horizon)
        if self.mode == "coupled":
            A0 = agents[0].dynamics.A
            for v, ag in enumerate(agents[1:], start=1):
                if ag.dynamics.A.shape != A0.shape or not np.array_equal(ag.dynamics.A, A0):
                    raise GameError(f"coupled mode: agent {v} does not share the global A")
        cs = self.constraints
        for name, bounds in (("lower", cs.lower), ("upper", cs.upper)):
            if bounds and len(bounds) != len(agents):
                raise GameError(f"{name} bounds given for {len(bounds)} agents, game has {len(agents)}")
        if cs.C is not None and cs.C.shape[1] != self.n_u:
            raise GameError(f"coupling C has {cs.C.shape[1]} columns, stacked stage input has {self.n_u}")
        if cs.c is not None and cs.c.ndim == 2 and cs.c.shape[0] < self.horizon:
            raise GameError("coupling rhs has fewer stages than the horizon")

    @property
    def M(self) -> int:
        return len(self.agents)

    @property
    def K(self) -> int:
        return int(self.horizon)

    @property
    def n_u_agents(self) -> list:
        return [ag.dynamics.n_u for ag in self.agents]

    @property
    def n_u(self) -> int:
        return sum(self.n_u_agents)

    @property
    def n_x(self) -> int:
        if self.mode == "coupled":
            return self.agents[0].dynamics.n_x
        return sum(ag.dynamics.n_x for ag in self.agents)

    def global_A(self) -> np.ndarray:
        if self.mode == "coupled":
            return self.agents[0].dynamics.A
        return _block_diag([ag.dynamics.A for ag in self.agents])

    def global_B(self) -> list:
        """Per-agent input maps into the global state."""
        if self.mode == "coupled":
            return [ag.dynamics.B for ag in self.agents]
        out, row = [], 0
        for ag in self.agents:
            Bg = np.zeros((self.n_x, ag.dynamics.n_u))
            Bg[row:row + ag.dynamics.n_x] = ag.dynamics.B
            out.append(Bg)
            row += ag.dynamics.n_x
        return out

    def state_slices(self) -> list:
        if self.mode == "coupled":
            return [slice(0, self.n_x)] * self.M
        out, row = [], 0
        for ag in self.agents:
            out.append(slice(row, row + ag.dynamics.n_x))
            row += ag.dynamics.n_x
        return out

    def input_slices(self) -> list:
        """Slices of each agent's full input sequence in the stacked vector."""
        out, col = [], 0
        for m in self.n_u_agents:
            out.append(slice(col, col + self.K * m))
            col += self.K * m
        return out

    def stage_input_slices(self) -> list:
        """Slices of each agent's input within a stacked stage input u_k."""
        out, col = [], 0
        for m in self.n_u_agents:
            out.append(slice(col, col + m))
            col += m
        return out

    def box(self, v: int) -> tuple:
        """Stage-wise (lower, upper) bounds of agent v, shape (K, n_u^v)."""
        K, m = self.K, self.n_u_agents[v]
        cs = self.constraints

        def expand(seq, fill):
            if not seq or seq[v] is None:
                return np.full((K, m), fill)
            b = seq[v]
            b = np.tile(b, (K, 1)) if b.ndim == 1 else b[:K]
            if b.shape != (K, m):
                raise GameError(f"agent {v}: bounds have shape {seq[v].shape}, expected ({m},) or ({K}, {m})")
            return b

        return expand(cs.lower, -np.inf), expand(cs.upper, np.inf)

    def coupling_rhs(self) -> np.ndarray:
        cs = self.constraints
        if cs.C is None:
            return np.zeros((self.K, 0))
        if cs.c.ndim == 1:
            return np.tile(cs.c, (self.K, 1))
        return cs.c[:self.K]


def _block_diag(blocks) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def build_prediction_matrices(A, B, K: int):
    """Free-response and impulse-response matrices over K steps.

    ``B`` may be a single matrix or a list of per-agent matrices. Returns
    ``(A_tilde, B_tilde)`` with A_tilde = col(I, A, ..., A^K) and B_tilde
    (a list if ``B`` was a list) with block (i, j) = A^(i-1-j) B for i > j.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[0] != A.shape[1]:
        raise numerics.DimensionError(f"A must be square, got {A.shape}")
    if int(K) < 1:
        raise GameError("horizon must be at least 1")
    single = not isinstance(B, (list, tuple)) or np.ndim(B[0]) < 2
    Bs = [np.atleast_2d(np.asarray(b, dtype=float)) for b in ([B] if single else B)]
    n = A.shape[0]
    for b in Bs:
        if b.shape[0] != n:
            raise numerics.DimensionError(f"B has {b.shape[0]} rows, A is {n}x{n}")

    powers = [np.eye(n)]
    for _ in range(K):
        powers.append(A @ powers[-1])
    A_tilde = np.vstack(powers)

    B_tildes = []
    for b in Bs:
        m = b.shape[1]
        Bt = np.zeros(((K + 1) * n, K * m))
        for i in range(1, K + 1):
            for j in range(i):
                Bt[i * n:(i + 1) * n, j * m:(j + 1) * m] = powers[i - 1 - j] @ b
        B_tildes.append(Bt)
    return A_tilde, (B_tildes[0] if single else B_tildes)


def aggregative_cost(R, v: int, M: int):
    """Input-cost weights of (sum_j R u^j)' u^v for agent v among M agents.

    Returns ``(Q_self, Q_cross)`` with Q_self = R + R' and Q_cross[j] = R.
    """
    R = _mat(R, "R")
    if R.shape[0] != R.shape[1]:
        raise GameError("R must be square")
    Q_self = R + R.T
    lam = numerics.lambda_min(Q_self)
    if lam <= MU_THRESHOLD:
        raise MonotonicityError("R + R' must be positive definite", lam)
    return Q_self, {j: R.copy() for j in range(M) if j != v}


@dataclass(frozen=True)
class CondensedGame:
    spec: GameSpec
    A: np.ndarray
    B: list
    A_tilde: np.ndarray
    B_tilde: list
    G: np.ndarray
    g: np.ndarray
    F_x: np.ndarray
    mu: float
    lower: np.ndarray
    upper: np.ndarray
    C_all: np.ndarray
    c_all: np.ndarray
    Xi: np.ndarray

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_vars(self) -> int:
        return self.G.shape[0]

    @property
    def B_global(self) -> np.ndarray:
        return np.hstack(self.B)

    @property
    def B_hat(self) -> np.ndarray:
        return self.B_global @ self.Xi

    @classmethod
    def affine(cls, G, g=None, F_x=None, lower=None, upper=None, C=None, c=None,
               mu_threshold: float = MU_THRESHOLD) -> "CondensedGame":
        """A bare affine VI with no underlying dynamic game (``spec`` is None)."""
        G = _mat(G, "G")
        N = G.shape[0]
        g = np.zeros(N) if g is None else np.asarray(g, dtype=float).reshape(N)
        F_x = np.zeros((N, 1)) if F_x is None else np.asarray(F_x, dtype=float).reshape(N, -1)
        mu = strong_monotonicity(G)
        if mu <= mu_threshold:
            raise MonotonicityError("pseudo-gradient is not strongly monotone", mu)
        lower = np.full(N, -np.inf) if lower is None else np.asarray(lower, dtype=float).reshape(N)
        upper = np.full(N, np.inf) if upper is None else np.asarray(upper, dtype=float).reshape(N)
        if np.any(lower > upper):
            raise InfeasibleError("empty box")
        C_all = np.zeros((0, N)) if C is None else np.atleast_2d(np.asarray(C, dtype=float))
        c_all = np.zeros(0) if c is None else np.asarray(c, dtype=float).reshape(-1)
        n_x = F_x.shape[1]
        return cls(spec=None, A=np.zeros((n_x, n_x)), B=[np.zeros((n_x, N))], A_tilde=np.zeros((0, n_x)),
                   B_tilde=[], G=G, g=g, F_x=F_x, mu=mu, lower=lower, upper=upper,
                   C_all=C_all, c_all=c_all, Xi=np.eye(N))

    def F(self, u, x) -> np.ndarray:
        return self.G @ u + self.g + self.F_x @ np.asarray(x, dtype=float)

    def local_blocks(self) -> list:
        """Per-agent (A^v, B_hat^v, F_x^v) for decoupled games."""
        if self.spec.mode != "decoupled":
            raise GameError("local blocks need a decoupled game")
        out = []
        for ag, si, sx in zip(self.spec.agents, self.spec.input_slices(), self.spec.state_slices()):
            m = ag.dynamics.n_u
            Xi_v = np.zeros((m, self.spec.K * m))
            Xi_v[:, :m] = np.eye(m)
            out.append((ag.dynamics.A, ag.dynamics.B @ Xi_v, self.F_x[si, sx]))
        return out


def selection_matrix(spec: GameSpec) -> np.ndarray:
    """Matrix extracting col_v(u^v_0) from the stacked input."""
    Xi = np.zeros((spec.n_u, spec.K * spec.n_u))
    row = 0
    for m, sl in zip(spec.n_u_agents, spec.input_slices()):
        Xi[row:row + m, sl.start:sl.start + m] = np.eye(m)
        row += m
    return Xi


def assemble_stacked_constraints(spec: GameSpec):
    """Stacked bounds and coupling rows: lower <= u <= upper, C_all u <= c_all."""
    lower = np.concatenate([spec.box(v)[0].reshape(-1) for v in range(spec.M)])
    upper = np.concatenate([spec.box(v)[1].reshape(-1) for v in range(spec.M)])
    if np.any(lower > upper):
        bad = int(np.argmax(lower > upper))
        raise InfeasibleError(f"empty box at stacked index {bad}: {lower[bad]} > {upper[bad]}")
    K, N = spec.K, spec.K * spec.n_u
    cs = spec.constraints
    m = cs.n_coupling
    C_all = np.zeros((K * m, N))
    c_all = spec.coupling_rhs().reshape(-1) if m else np.zeros(0)
    if m:
        for k in range(K):
            for v, (si, st) in enumerate(zip(spec.input_slices(), spec.stage_input_slices())):
                nu = spec.n_u_agents[v]
                C_all[k * m:(k + 1) * m, si.start + k * nu:si.start + (k + 1) * nu] = cs.C[:, st]
    return lower, upper, C_all, c_all


def _check_nonempty(spec: GameSpec, lower, upper):
    cs = spec.constraints
    if cs.n_coupling == 0:
        return
    from scipy.optimize import linprog

    rhs = spec.coupling_rhs()
    nu = spec.n_u
    for k in range(spec.K):
        lo = np.concatenate([spec.box(v)[0][k] for v in range(spec.M)])
        hi = np.concatenate([spec.box(v)[1][k] for v in range(spec.M)])
        res = linprog(np.zeros(nu), A_ub=cs.C, b_ub=rhs[k],
                      bounds=[(None if np.isinf(a) else a, None if np.isinf(b) else b) for a, b in zip(lo, hi)],
                      method="highs")
        if res.status == 2:
            raise InfeasibleError(f"constraint set is empty at stage {k}")


@functools.lru_cache(maxsize=256)
def _mu_cached(shape, data: bytes) -> float:
    G = np.frombuffer(data).reshape(shape)
    return numerics.lambda_min(0.5 * (G + G.T))


def strong_monotonicity(G) -> float:
    G = np.ascontiguousarray(G, dtype=float)
    return _mu_cached(G.shape, G.tobytes())


def condense(spec: GameSpec, mu_threshold: float = MU_THRESHOLD, check_feasible: bool = True) -> CondensedGame:
    """Substitute the dynamics into every agent's cost and stack the gradients."""
    K, M = spec.K, spec.M
    A = spec.global_A()
    Bg = spec.global_B()
    A_tilde, B_tilde = build_prediction_matrices(A, Bg, K)
    weights = np.ones(K + 1)
    if not spec.terminal_cost:
        weights[K] = 0.0
    N = K * spec.n_u
    G = np.zeros((N, N))
    g = np.zeros(N)
    F_x = np.zeros((N, spec.n_x))
    slices = spec.input_slices()

    if spec.mode == "coupled":
        for v, ag in enumerate(spec.agents):
            Wt = np.kron(np.diag(weights), ag.cost.W)
            wt = np.kron(weights, ag.cost.w)
            BvW = B_tilde[v].T @ Wt
            for j in range(M):
                G[slices[v], slices[j]] += 2.0 * BvW @ B_tilde[j]
            F_x[slices[v]] = 2.0 * BvW @ A_tilde
            g[slices[v]] += B_tilde[v].T @ wt
    else:
        for v, (ag, sx) in enumerate(zip(spec.agents, spec.state_slices())):
            At_v, Bt_v = build_prediction_matrices(ag.dynamics.A, ag.dynamics.B, K)
            Wt = np.kron(np.diag(weights), ag.cost.W)
            wt = np.kron(weights, ag.cost.w)
            BvW = Bt_v.T @ Wt
            G[slices[v], slices[v]] += 2.0 * BvW @ Bt_v
            F_x[slices[v], sx] = 2.0 * BvW @ At_v
            g[slices[v]] += Bt_v.T @ wt

    eyeK = np.eye(K)
    for v, ag in enumerate(spec.agents):
        G[slices[v], slices[v]] += np.kron(eyeK, ag.cost.Q_self)
        for j, Qc in ag.cost.Q_cross.items():
            G[slices[v], slices[j]] += np.kron(eyeK, Qc)
        g[slices[v]] += ag.cost.q_stages(K).reshape(-1)

    mu = strong_monotonicity(G)
    if mu <= mu_threshold:
        raise MonotonicityError("pseudo-gradient is not strongly monotone", mu)

    lower, upper, C_all, c_all = assemble_stacked_constraints(spec)
    if check_feasible:
        _check_nonempty(spec, lower, upper)
    return CondensedGame(
        spec=spec, A=A, B=Bg, A_tilde=A_tilde, B_tilde=B_tilde, G=G, g=g, F_x=F_x, mu=mu,
        lower=lower, upper=upper, C_all=C_all, c_all=c_all, Xi=selection_matrix(spec),
    )


def rollout_costs(spec: GameSpec, u, x0) -> np.ndarray:
    """Every agent's finite-horizon cost J^v(u, x0) by explicit simulation."""
    K = spec.K
    u = np.asarray(u, dtype=float)
    seqs = [u[sl].reshape(K, m) for sl, m in zip(spec.input_slices(), spec.n_u_agents)]
    A = spec.global_A()
    Bg = spec.global_B()
    xs = [np.asarray(x0, dtype=float)]
    for k in range(K):
        xs.append(A @ xs[-1] + sum(B @ s[k] for B, s in zip(Bg, seqs)))
    last = K + 1 if spec.terminal_cost else K
    J = np.zeros(spec.M)
    for v, (ag, sx) in enumerate(zip(spec.agents, spec.state_slices())):
        c = ag.cost
        q = c.q_stages(K)
        for k in range(last):
            xv = xs[k][sx]
            J[v] += xv @ c.W @ xv + c.w @ xv
        for k in range(K):
            uv = seqs[v][k]
            J[v] += 0.5 * uv @ c.Q_self @ uv + q[k] @ uv
            J[v] += sum(uv @ Qc @ seqs[j][k] for j, Qc in c.Q_cross.items())
    return J
