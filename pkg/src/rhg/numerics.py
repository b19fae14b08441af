"""Dense linear-algebra kernels for small problems (n <= ~200).

Matrices are plain ``numpy`` arrays; the kernels below only use numpy for
storage and vectorised row/column updates, the algorithms themselves
(cyclic Jacobi, LU with partial pivoting, Hager's 1-norm estimator and a
norm-growth spectral radius estimate) are implemented here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EIG_TOL = 1e-12
SYMMETRY_TOL = 1e-12
RADIUS_TOL = 1e-9
RADIUS_MAX_SQUARINGS = 64
COND_LIMIT = 1e12
MAX_SWEEPS = 100


class DimensionError(ValueError):
    pass


class SymmetryError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


@dataclass(frozen=True)
class EigenDecomposition:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # columns, orthonormal

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def _as_square(M, name="matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def sym_eigen(S, tol: float = EIG_TOL, symmetry_tol: float = SYMMETRY_TOL) -> EigenDecomposition:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations."""
    S = _as_square(S)
    n = S.shape[0]
    scale = np.linalg.norm(S)
    if n and np.max(np.abs(S - S.T)) > symmetry_tol * max(scale, 1.0):
        raise SymmetryError("matrix is not symmetric")
    a = 0.5 * (S + S.T)
    V = np.eye(n)
    if n <= 1 or scale == 0.0:
        return EigenDecomposition(np.diag(a).copy(), V)

    threshold = tol * scale
    for _ in range(MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = math.copysign(1.0, tau) / (abs(tau) + math.sqrt(1.0 + tau * tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :]
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return EigenDecomposition(w[order], V[:, order])


def lambda_min(S) -> float:
    return float(sym_eigen(S).eigenvalues[0])


def lambda_max(S) -> float:
    return float(sym_eigen(S).eigenvalues[-1])


def spectral_radius(A, tol: float = RADIUS_TOL, max_squarings: int = RADIUS_MAX_SQUARINGS) -> float:
    """Largest eigenvalue modulus of a general square matrix.

    Uses the norm-growth limit rho(A) = lim ||A^N||^(1/N) along N = 2^j with
    renormalised repeated squaring, so complex dominant pairs and equal-modulus
    real pairs need no special handling.
    """
    A = _as_square(A)
    if A.shape[0] == 0:
        return 0.0
    B = A.copy()
    log_scale = 0.0
    estimate = None
    for j in range(max_squarings + 1):
        nrm = np.linalg.norm(B, 1)
        if nrm == 0.0:
            return 0.0
        B = B / nrm
        log_scale += math.log(nrm)
        new = math.exp(log_scale / 2.0**j)
        if estimate is not None and abs(new - estimate) <= tol * max(new, 1e-300) and j >= 8:
            return new
        estimate = new
        B = B @ B
        log_scale *= 2.0
    return estimate


def _lu_factor(A: np.ndarray):
    n = A.shape[0]
    LU = A.copy()
    piv = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(LU[k:, k])))
        if LU[p, k] == 0.0:
            return LU, piv, False
        if p != k:
            LU[[k, p]] = LU[[p, k]]
            piv[[k, p]] = piv[[p, k]]
        LU[k + 1:, k] /= LU[k, k]
        LU[k + 1:, k + 1:] -= np.outer(LU[k + 1:, k], LU[k, k + 1:])
    return LU, piv, True


def _lu_solve(LU, piv, b):
    n = LU.shape[0]
    y = np.asarray(b, dtype=float)[piv].copy()
    for i in range(1, n):
        y[i] -= LU[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - LU[i, i + 1:] @ y[i + 1:]) / LU[i, i]
    return y


def _lu_solve_transposed(LU, piv, b):
    # A = P^T L U  =>  A^T z = b  <=>  U^T L^T (P z) = b
    n = LU.shape[0]
    y = np.asarray(b, dtype=float).copy()
    for i in range(n):
        y[i] = (y[i] - LU[:i, i] @ y[:i]) / LU[i, i]
    for i in range(n - 1, -1, -1):
        y[i] -= LU[i + 1:, i] @ y[i + 1:]
    z = np.empty(n)
    z[piv] = y
    return z


def _inverse_one_norm_estimate(LU, piv) -> float:
    """Hager's estimator for ||A^{-1}||_1 from an LU factorisation."""
    n = LU.shape[0]
    x = np.full(n, 1.0 / n)
    est = 0.0
    for _ in range(5):
        y = _lu_solve(LU, piv, x)
        new = float(np.sum(np.abs(y)))
        if not np.isfinite(new):
            return math.inf
        xi = np.where(y >= 0, 1.0, -1.0)
        z = _lu_solve_transposed(LU, piv, xi)
        j = int(np.argmax(np.abs(z)))
        if new <= est or np.abs(z[j]) <= z @ x:
            est = max(est, new)
            break
        est = new
        x = np.zeros(n)
        x[j] = 1.0
    return est


def solve_linear(A, b, cond_limit: float = COND_LIMIT) -> np.ndarray:
    """Solve A x = b by LU with partial pivoting; ``b`` may be a vector or a matrix."""
    A = _as_square(A)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != A.shape[0]:
        raise DimensionError(f"rhs has {b.shape[0]} rows, matrix has {A.shape[0]}")
    LU, piv, ok = _lu_factor(A)
    if not ok:
        raise SingularMatrixError("matrix is singular", math.inf)
    cond = np.linalg.norm(A, 1) * _inverse_one_norm_estimate(LU, piv)
    if not cond < cond_limit:
        raise SingularMatrixError("matrix is ill-conditioned", cond)
    if b.ndim == 1:
        return _lu_solve(LU, piv, b)
    return np.column_stack([_lu_solve(LU, piv, col) for col in b.T])


def two_norm(M) -> float:
    """Largest singular value, from the symmetric eigenproblem of M^T M."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    small = M.T @ M if M.shape[1] <= M.shape[0] else M @ M.T
    return math.sqrt(max(lambda_max(small), 0.0))
