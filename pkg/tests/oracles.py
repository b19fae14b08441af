"""Independent reference computations used only by the tests.

None of these share code paths with the package: the affine VI is solved
by brute-force active-set enumeration, scalar minimisation by golden
section, gradients by central differences.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

from rhg.game import Agent, AgentDynamics, ConstraintSpec, GameSpec, StageCost, aggregative_cost


def active_set_vi(G, h, A, b, tol=1e-9):
    """Solve G u + h + A'λ = 0, 0 <= λ ⟂ b - A u >= 0 by trying every active set."""
    N, m = G.shape[0], A.shape[0]
    for size in range(m + 1):
        for S in itertools.combinations(range(m), size):
            S = list(S)
            As = A[S]
            K = np.block([[G, As.T], [As, np.zeros((size, size))]])
            rhs = np.concatenate([-h, b[S]])
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                continue
            if np.linalg.cond(K) > 1e12:
                continue
            u, lam = sol[:N], sol[N:]
            if np.all(lam >= -tol) and np.all(A @ u <= b + tol * max(1.0, np.abs(b).max(initial=0))):
                return u
    raise RuntimeError("no active set satisfies the KKT conditions")


def golden_section(f, lo, hi, tol=1e-12, max_iter=500):
    """Minimiser and minimum of a unimodal f on [lo, hi]."""
    r = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - r * (b - a), a + r * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - r * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + r * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def scalar_lhs_min(lhs, boundary, span=1e6):
    """Minimum of a scalar condition over (boundary, boundary + span), via golden section in log-offset."""
    g = lambda s: float(lhs(boundary + math.exp(s)))
    lo, hi = math.log(1e-12 * max(1.0, boundary)), math.log(span)
    grid = np.linspace(lo, hi, 400)
    vals = [g(s) for s in grid]
    k = int(np.argmin(vals))
    s, v = golden_section(g, grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)])
    return min(v, vals[k]), boundary + math.exp(s)


def central_difference(f, u, h=1e-6):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    for i in range(u.size):
        e = np.zeros_like(u)
        e[i] = h
        out[i] = (f(u + e) - f(u - e)) / (2.0 * h)
    return out


def stable_matrix(rng, n, rho):
    A = rng.normal(size=(n, n))
    return A * (rho / max(np.abs(np.linalg.eigvals(A)).max(), 1e-12))


def random_spec(rng, M=2, n_x=2, n_u=1, K=3, mode="decoupled", box=None, coupling=0,
                w_scale=1.0, rho=0.9, offsets=True, terminal_cost=False):
    """A strongly monotone random game (aggregative input costs with R + R' ≻ 0)."""
    agents = []
    A_shared = stable_matrix(rng, n_x, rho * rng.uniform(0.3, 1.0))
    for v in range(M):
        A = A_shared if mode == "coupled" else stable_matrix(rng, n_x, rho * rng.uniform(0.3, 1.0))
        B = rng.normal(size=(n_x, n_u))
        L = rng.normal(size=(n_x, n_x))
        W = w_scale * (L @ L.T) / n_x
        Lr, S = rng.normal(size=(n_u, n_u)), rng.normal(size=(n_u, n_u))
        R = 0.3 * Lr @ Lr.T + 0.2 * (S - S.T) + np.eye(n_u) * rng.uniform(0.8, 2.0)
        Q_self, Q_cross = aggregative_cost(R, v, M)
        w = rng.normal(size=n_x) if offsets else np.zeros(n_x)
        q = rng.normal(size=(K, n_u)) if offsets else None
        agents.append(Agent(AgentDynamics(A, B), StageCost(W, w, Q_self, Q_cross, q)))
    lower = upper = ()
    if box is not None:
        lower = tuple(-box * rng.uniform(0.5, 1.5, size=n_u) for _ in range(M))
        upper = tuple(box * rng.uniform(0.5, 1.5, size=n_u) for _ in range(M))
    C = c = None
    if coupling:
        C = rng.normal(size=(coupling, M * n_u))
        c = rng.uniform(0.2, 1.0, size=coupling)  # the origin is strictly feasible
    return GameSpec(tuple(agents), K, ConstraintSpec(lower, upper, C, c), mode, terminal_cost)


def scalar_lmi_data(A, B, W, K):
    """(F_x, B_hat) of a single scalar agent, stage costs on x_0..x_{K-1}, built by explicit rollout.

    With x_k = A^k x0 + sum_{j<k} A^{k-1-j} B u_j, the x0 coefficient of dJ/du_j
    is 2 W sum_{j<k<K} A^{k-1-j} B A^k.
    """
    F_x = np.zeros((K, 1))
    for j in range(K):
        F_x[j, 0] = sum(2.0 * W * A ** (k - 1 - j) * B * A**k for k in range(j + 1, K))
    B_hat = np.zeros((1, K))
    B_hat[0, 0] = B
    return F_x, B_hat


def scalar_lmi_grid_witness(A, B, W, mu, K, grid):
    """Search (λ1, λ2) on ``grid`` x ``grid`` with P = 1 for a strictly negative definite matrix."""
    F_x, B_hat = scalar_lmi_data(A, B, W, K)
    FF = F_x.T @ F_x
    best = (math.inf, None)
    for l1 in grid:
        for l2 in grid:
            if l1 + l2 == 0:
                continue
            top = np.hstack([A * A - 1.0 + l2 / mu**2 * FF, A * B_hat - 0.5 * l1 * F_x.T])
            bot = np.hstack([(A * B_hat - 0.5 * l1 * F_x.T).T, B_hat.T @ B_hat - (l1 * mu + l2) * np.eye(K)])
            e = np.linalg.eigvalsh(np.vstack([top, bot])).max()
            if e < best[0]:
                best = (e, (l1, l2))
    return best


def random_affine_game(rng, N, n_box, n_coup):
    """Strongly monotone affine VI data: upper bounds on ``n_box`` variables plus coupling rows."""
    from rhg.game import CondensedGame
    X = rng.normal(size=(N, N))
    S = rng.normal(size=(N, N))
    G = X @ X.T / N + 0.3 * np.eye(N) + 0.5 * (S - S.T)
    lower = np.full(N, -np.inf)
    upper = np.full(N, np.inf)
    idx = rng.choice(N, size=min(n_box, N), replace=False)
    upper[idx] = rng.uniform(0.1, 1.0, size=idx.size)
    C = rng.normal(size=(n_coup, N))
    c = rng.uniform(0.1, 1.0, size=n_coup)
    return CondensedGame.affine(G, rng.normal(size=N) * 2, None, lower, upper, C, c)
