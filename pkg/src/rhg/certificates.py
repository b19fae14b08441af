"""Closed-loop stability certificates for receding-horizon games.

The certificate asks for P ≻ 0 and λ1, λ2 ≥ 0 (λ1 + λ2 > 0) with

    [A'PA - P + (λ2/μ²) F_x'F_x     A'P B̂ - (λ1/2) F_x'  ]
    [        *                     B̂'P B̂ - (λ1 μ + λ2) I ]  ≼ -ε I.

The matrix is affine in (P, λ1, λ2), so feasibility is decided by minimising
its largest eigenvalue, a convex function.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numerics
from .game import CondensedGame, GameError

DEFAULT_DELTA = 1e-6
DEFAULT_BUDGET = 50_000
DEFAULT_PATIENCE = 2_000
STALL_TOL = 1e-5  # relative gain that resets the patience window


@dataclass(frozen=True)
class LmiData:
    """The ingredients of one certificate: dynamics, lifted input map, state gradient, μ."""

    A: np.ndarray
    B_hat: np.ndarray
    F_x: np.ndarray
    mu: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B_hat = np.atleast_2d(np.asarray(self.B_hat, dtype=float))
        F_x = np.atleast_2d(np.asarray(self.F_x, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n) or B_hat.shape[0] != n or F_x.shape != (B_hat.shape[1], n):
            raise numerics.DimensionError(
                f"inconsistent certificate data: A {A.shape}, B_hat {B_hat.shape}, F_x {F_x.shape}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B_hat", B_hat)
        object.__setattr__(self, "F_x", F_x)
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_y(self) -> int:
        return self.B_hat.shape[1]

    @classmethod
    def from_game(cls, game: CondensedGame) -> "LmiData":
        return cls(game.A, game.B_hat, game.F_x, game.mu)


def local_lmi_data(game: CondensedGame) -> list:
    """One certificate per agent for games with decoupled dynamics and state costs."""
    return [LmiData(A, B_hat, F_x, game.mu) for A, B_hat, F_x in game.local_blocks()]


def _data(obj) -> LmiData:
    return obj if isinstance(obj, LmiData) else LmiData.from_game(obj)


def assemble_lmi(game, P, lambda1: float, lambda2: float) -> np.ndarray:
    d = _data(game)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape != (d.n_x, d.n_x):
        raise numerics.DimensionError(f"P must be {d.n_x}x{d.n_x}, got {P.shape}")
    if lambda1 < 0 or lambda2 < 0 or not lambda1 + lambda2 > 0:
        raise ValueError("multipliers must be nonnegative with a positive sum")
    return _assemble(d, 0.5 * (P + P.T), lambda1, lambda2)


def _assemble(d: LmiData, P, l1, l2):
    A, Bh, F, mu = d.A, d.B_hat, d.F_x, d.mu
    n = d.n_x
    PA = P @ A
    L = np.empty((n + d.n_y, n + d.n_y))
    L[:n, :n] = A.T @ PA - P + (l2 / mu**2) * (F.T @ F)
    top_right = PA.T @ Bh - 0.5 * l1 * F.T
    L[:n, n:] = top_right
    L[n:, :n] = top_right.T
    bottom = Bh.T @ P @ Bh
    bottom[np.diag_indices_from(bottom)] -= l1 * mu + l2
    L[n:, n:] = bottom
    return 0.5 * (L + L.T)


@dataclass(frozen=True)
class CertificateCheck:
    verified: bool
    achieved_max_eig: float


def check_certificate(game, P, lambda1: float, lambda2: float, epsilon: float = 0.0,
                      delta: float = DEFAULT_DELTA) -> CertificateCheck:
    """Independent eigenvalue check of a candidate witness (no search)."""
    d = _data(game)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if not (np.all(np.isfinite(P)) and math.isfinite(lambda1) and math.isfinite(lambda2)):
        return CertificateCheck(False, math.inf)
    if lambda1 < 0 or lambda2 < 0 or not lambda1 + lambda2 > 0:
        return CertificateCheck(False, math.inf)
    Ps = 0.5 * (P + P.T)
    lmax = numerics.lambda_max(_assemble(d, Ps, lambda1, lambda2))
    if numerics.lambda_min(Ps) < delta:
        return CertificateCheck(False, lmax)
    return CertificateCheck(bool(lmax < 0 and lmax <= -epsilon), lmax)


@dataclass(frozen=True)
class CertificateResult:
    feasible: bool
    P: np.ndarray
    lambda1: float
    lambda2: float
    epsilon: float
    achieved_max_eig: float
    iterations: int = 0
    subgradient_norm: float = math.nan
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "P": np.asarray(self.P).tolist(),
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "epsilon": self.epsilon,
            "achieved_max_eig": self.achieved_max_eig,
            "iterations": self.iterations,
            "subgradient_norm": self.subgradient_norm,
            "message": self.message,
        }


def _project_trace_psd(P, n, delta):
    """Nearest symmetric matrix with eigenvalues >= delta and trace n."""
    w, V = np.linalg.eigh(0.5 * (P + P.T))
    ws = w[::-1]
    csum = np.cumsum(ws)
    tau = ws[0] - delta
    for k in range(1, len(ws) + 1):
        tau = (csum[k - 1] + (len(ws) - k) * delta - n) / k
        if k == len(ws) or ws[k] - tau <= delta:
            break
    e = np.maximum(w - tau, delta)
    return (V * e) @ V.T


def search_certificate(game, delta: float = DEFAULT_DELTA, budget: int = DEFAULT_BUDGET,
                       patience: int = DEFAULT_PATIENCE, step: float = 1.0) -> CertificateResult:
    """Minimise λ_max of the certificate matrix by projected subgradient descent.

    P is kept on {P ≽ δI, tr P = n} (the matrix is homogeneous in the
    variables) and the multipliers are rescaled by the input-map gain so
    every coordinate has unit order. Steps are normalised and diminish as
    step/√t. The search stops early once the best value has not improved
    by a relative STALL_TOL for ``patience`` iterations. A returned "feasible" is always re-verified by
    :func:`check_certificate`; budget exhaustion is reported, not raised.
    """
    d = _data(game)
    n = d.n_x
    rho = numerics.spectral_radius(d.A)
    if rho >= 1.0:
        return CertificateResult(False, np.eye(n), 0.0, 0.0, 0.0, math.inf,
                                 message=f"Assumption 1(i) violated: spectral radius of A is {rho:.6g} >= 1")

    A, Bh, F, mu = d.A, d.B_hat, d.F_x, d.mu
    b2 = numerics.two_norm(Bh) ** 2
    b2 = b2 if b2 > 0 else 1.0
    s1, s2 = b2 / mu, b2

    P = np.eye(n)
    th = np.array([1.0, 1.0])
    best = (math.inf, P, th.copy(), 0)
    gnorm = math.nan
    it = 0
    last_gain = 0
    for it in range(1, budget + 1):
        L = _assemble(d, P, s1 * th[0], s2 * th[1])
        w, V = np.linalg.eigh(L)
        f = w[-1]
        if f < best[0]:
            if best[0] - f > STALL_TOL * max(abs(f), b2):
                last_gain = it
            best = (f, P.copy(), th.copy(), it)
        if it - last_gain > patience:
            break
        v = V[:, -1]
        a, b = v[:n], v[n:]
        z = A @ a + Bh @ b
        Fa = F @ a
        gP = np.outer(z, z) - np.outer(a, a)
        gth = np.array([s1 * (-(Fa @ b) - mu * (b @ b)), s2 * ((Fa @ Fa) / mu**2 - b @ b)])
        gnorm = math.sqrt(float(np.sum(gP * gP) + gth @ gth))
        if gnorm == 0.0:
            break
        alpha = step / math.sqrt(it) / gnorm
        P = _project_trace_psd(P - alpha * gP, n, delta)
        th = np.maximum(th - alpha * gth, 0.0)
        if th.sum() == 0.0:
            th[:] = 1e-12

    f, P, th, _ = best
    l1, l2 = s1 * th[0], s2 * th[1]
    check = check_certificate(d, P, l1, l2, delta=delta)
    if check.verified:
        return CertificateResult(True, P, l1, l2, -check.achieved_max_eig, check.achieved_max_eig,
                                 it, gnorm, "certificate verified")
    msg = ("no certificate found within budget (best lambda_max "
           f"{check.achieved_max_eig:.6g}); the condition is only sufficient, so this does not prove instability")
    return CertificateResult(False, P, l1, l2, 0.0, check.achieved_max_eig, it, gnorm, msg)


def search_local_certificates(game: CondensedGame, delta: float = DEFAULT_DELTA,
                              budget: int = DEFAULT_BUDGET, patience: int = DEFAULT_PATIENCE) -> list:
    """One certificate search per agent; stability is certified only if all succeed."""
    if game.spec is None or game.spec.mode != "decoupled":
        raise GameError("local certificates need a game in decoupled mode")
    return [search_certificate(d, delta, budget, patience) for d in local_lmi_data(game)]


def closed_loop_certified(results) -> bool:
    results = list(results)
    return bool(results) and all(r.feasible for r in results)


def block_lyapunov_matrix(results) -> np.ndarray:
    """Block-diagonal P from per-agent witnesses (state order of the decoupled game)."""
    blocks = [np.atleast_2d(r.P) for r in results]
    n = sum(b.shape[0] for b in blocks)
    P = np.zeros((n, n))
    i = 0
    for b in blocks:
        P[i:i + b.shape[0], i:i + b.shape[0]] = b
        i += b.shape[0]
    return P


# -- scalar agents -----------------------------------------------------------

@dataclass(frozen=True)
class ScalarCertificateInput:
    A: float
    B: float
    W: float
    mu: float
    K: int

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if int(self.K) < 2:
            raise ValueError(f"horizon must be at least 2, got {self.K}")


def horizon_sum(A: float, K: int) -> float:
    """sum_{k=0}^{K-2} ((k+1) A^k)^2."""
    return float(sum(((k + 1) * A**k) ** 2 for k in range(K - 1)))


def condition_i_lhs(inp: ScalarCertificateInput, lambda1):
    """Left-hand side of the λ1-condition; +inf outside μ λ1 > B² > 0."""
    A, B, W, mu = inp.A, inp.B, inp.W, inp.mu
    lam = np.asarray(lambda1, dtype=float)
    den = mu * lam - B * B
    ok = (den > 0) & (B * B > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = mu * lam * A * A / den + lam * B * B * W * W / mu * horizon_sum(A, inp.K)
    return np.where(ok, val, np.inf)


def condition_ii_lhs(inp: ScalarCertificateInput, lambda2):
    """Left-hand side of the λ2-condition; +inf outside λ2 > B² > 0."""
    A, B, W, mu = inp.A, inp.B, inp.W, inp.mu
    lam = np.asarray(lambda2, dtype=float)
    den = lam - B * B
    ok = (den > 0) & (B * B > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = A * A * lam / den + 4.0 * lam * B * B * W * W / mu**2 * horizon_sum(A, inp.K)
    return np.where(ok, val, np.inf)


def _minimise_hyperbola(a2b2: float, slope: float, offset: float):
    """min over t > 0 of a2b2/t + slope*t + offset; returns (infimum, a good t)."""
    if a2b2 == 0.0 and slope == 0.0:
        return offset, 1.0
    if a2b2 == 0.0:
        return offset, None  # approached as t -> 0
    if slope == 0.0:
        return offset, math.inf  # approached as t -> inf
    t = math.sqrt(a2b2 / slope)
    return offset + 2.0 * math.sqrt(a2b2 * slope), t


@dataclass(frozen=True)
class ScalarCertificateResult:
    feasible: bool
    condition: Optional[str]
    lambda1: float
    lambda2: float
    lhs: float
    infimum_i: float
    infimum_ii: float


def _witness(t_opt, infimum, lhs_of_t, t_floor):
    """A finite t > 0 with lhs_of_t(t) < 1, given the hyperbola's minimiser."""
    if t_opt is not None and math.isfinite(t_opt):
        if lhs_of_t(t_opt) < 1.0:
            return t_opt
        # t_opt lost to rounding against B² (A ~ 0): grow it until the boundary is cleared
        t = max(t_opt, t_floor * 1e-15, 1e-300)
        for _ in range(2000):
            if lhs_of_t(t) < 1.0:
                return t
            t *= 2.0
        return t_opt
    # infimum only approached at an end of (0, inf): walk towards it
    t = t_floor if t_opt is None else 1.0
    for _ in range(400):
        if lhs_of_t(t) < 1.0:
            return t
        t = t * 0.5 if t_opt is None else t * 2.0
    return t


def scalar_certificate(inp: ScalarCertificateInput) -> ScalarCertificateResult:
    """Closed-form check of both scalar sufficient conditions.

    Substituting t = μλ1 - B² (resp. t = λ2 - B²) turns each left-hand side
    into A² + A²B²/t + c·t + c·B², minimised at t = |A||B|/√c.
    """
    A, B, W, mu = float(inp.A), float(inp.B), float(inp.W), float(inp.mu)
    S = horizon_sum(A, inp.K)
    B2 = B * B
    if B2 == 0.0:
        return ScalarCertificateResult(False, None, 0.0, 0.0, math.inf, math.inf, math.inf)

    # condition (i): lhs(λ1) with t = μλ1 - B²
    c1 = B2 * W * W * S / mu**2
    inf_i, t1 = _minimise_hyperbola(A * A * B2, c1, A * A + c1 * B2)
    # condition (ii): lhs(λ2) with t = λ2 - B²
    c2 = 4.0 * B2 * W * W * S / mu**2
    inf_ii, t2 = _minimise_hyperbola(A * A * B2, c2, A * A + c2 * B2)

    if inf_i < 1.0:
        t = _witness(t1, inf_i, lambda t: float(condition_i_lhs(inp, (t + B2) / mu)), B2)
        lam1 = (t + B2) / mu
        lhs = float(condition_i_lhs(inp, lam1))
        if lhs < 1.0:
            return ScalarCertificateResult(True, "i", lam1, 0.0, lhs, inf_i, inf_ii)
    if inf_ii < 1.0:
        t = _witness(t2, inf_ii, lambda t: float(condition_ii_lhs(inp, t + B2)), B2)
        lam2 = t + B2
        lhs = float(condition_ii_lhs(inp, lam2))
        if lhs < 1.0:
            return ScalarCertificateResult(True, "ii", 0.0, lam2, lhs, inf_i, inf_ii)
    return ScalarCertificateResult(False, None, 0.0, 0.0, min(inf_i, inf_ii), inf_i, inf_ii)


@dataclass(frozen=True)
class RegionGrid:
    """Feasibility of the λ1-condition on a tensor grid, axes ordered (A, W, mu, lambda1)."""

    A: np.ndarray
    W: np.ndarray
    mu: np.ndarray
    lambda1: np.ndarray
    feasible: np.ndarray
    K: int
    B: float

    @property
    def feasible_fraction(self) -> float:
        return float(self.feasible.mean())

    def rows(self):
        for idx in np.ndindex(self.feasible.shape):
            i, j, k, l = idx
            yield self.A[i], self.W[j], self.mu[k], self.lambda1[l], int(self.feasible[idx])


FIG3B_PRESET = {
    "A": (0.0, 0.99),
    "W": (0.0, 0.5),
    "mu": (1.0, 1.0),
    "lambda1": (1.8, 1.8),
    "K": 10,
    "B": 1.0,
}


def _axis(rng, resolution):
    lo, hi = rng
    return np.array([lo]) if lo == hi else np.linspace(lo, hi, resolution)


def feasibility_region(A_range, W_range, mu_range, lambda1_range, resolution: int,
                       K: int = 10, B: float = 1.0) -> RegionGrid:
    """Evaluate the λ1-condition (λ2 = 0) pointwise; degenerate ranges give a single-value axis."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2 per axis")
    for name, r in (("A", A_range), ("W", W_range), ("mu", mu_range), ("lambda1", lambda1_range)):
        lo, hi = r
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ValueError(f"invalid {name} range {r}")
    a, w, m, l = (_axis(r, resolution) for r in (A_range, W_range, mu_range, lambda1_range))
    Ag, Wg, Mg, Lg = np.meshgrid(a, w, m, l, indexing="ij")
    S = np.vectorize(lambda x: horizon_sum(x, K))(Ag)
    den = Mg * Lg - B * B
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = Mg * Lg * Ag**2 / den + Lg * B * B * Wg**2 / Mg * S
    flags = (den > 0) & (B * B > 0) & (Mg > 0) & (lhs < 1.0)
    return RegionGrid(a, w, m, l, flags, K, B)


def lyapunov_decrease(states, P, x_bar) -> np.ndarray:
    """ΔV_t = V(x_{t+1}) - V(x_t) with V(x) = (x - x̄)'P(x - x̄)."""
    X = np.atleast_2d(np.asarray(states, dtype=float)) - np.asarray(x_bar, dtype=float)
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if X.shape[1] != P.shape[0]:
        raise numerics.DimensionError(f"states have dimension {X.shape[1]}, P is {P.shape}")
    V = np.einsum("ti,ij,tj->t", X, P, X)
    return np.diff(V)
