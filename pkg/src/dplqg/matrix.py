"""Dense real-matrix kernel.

Symmetric eigenvalues come from a cyclic Jacobi solver written here; linear
solves, singular values and Cholesky factors are delegated to numpy's LAPACK
bindings.  Both Riccati equations are solved by (optionally damped)
fixed-point iteration with a residual check on exit.
"""

from __future__ import annotations

import logging
from typing import Tuple, Union

import numpy as np

from .errors import (
    ConvergenceError,
    DefinitenessError,
    DimensionError,
    PreconditionError,
    SingularMatrixError,
    SymmetryError,
)

logger = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-9
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
DARE_TOL = 1e-10
DARE_MAX_ITER = 100_000
DARE_RESIDUAL_RTOL = 1e-8
COND_LIMIT = 1e12


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce ``m`` to a finite 2-D float array (scalars become 1x1)."""
    a = np.asarray(m, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DimensionError(f"{name} has non-finite entries")
    return a


def _square(m, name: str) -> np.ndarray:
    a = as_matrix(m, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    if a.size == 0:
        raise DimensionError(f"{name} is empty")
    return a


def check_symmetric(m, name: str = "matrix", rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    a = _square(m, name)
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.T) > rtol * scale:
        raise SymmetryError(f"{name} is not symmetric (relative tolerance {rtol:g})")
    return a


def symmetrize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _round_robin(n: int):
    """Yield the rounds of a tournament schedule: disjoint (p, q) index pairs
    covering every unordered pair exactly once per sweep."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    size = len(players)
    for _ in range(size - 1):
        pairs = [(players[i], players[size - 1 - i]) for i in range(size // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        if pairs:
            yield np.array(pairs, dtype=int).T
        players = [players[0]] + [players[-1]] + players[1:-1]


def _off_norm(a: np.ndarray) -> float:
    return float(np.linalg.norm(a - np.diag(np.diag(a))))


def _jacobi(a: np.ndarray, want_vectors: bool):
    n = a.shape[0]
    a = symmetrize(a.copy())
    v = np.eye(n) if want_vectors else None
    target = JACOBI_TOL * np.linalg.norm(a)
    if n == 1 or target == 0.0:
        return np.diag(a).copy(), v
    rounds = list(_round_robin(n))
    for sweep in range(JACOBI_MAX_SWEEPS):
        if _off_norm(a) <= target:
            break
        for p, q in rounds:
            apq = a[p, q]
            active = apq != 0.0
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.hypot(theta, 1.0))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            # rows, then columns: a <- J^T a J
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            if v is not None:
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = vp * c - vq * s
                v[:, q] = vp * s + vq * c
    else:
        raise ConvergenceError(
            "Jacobi eigensolver did not converge", residual=_off_norm(a), iterations=JACOBI_MAX_SWEEPS
        )
    return np.diag(a).copy(), v


def sym_eig(m, vectors: bool = False) -> Union[np.ndarray, Tuple[np.ndarray, np.ndarray]]:
    """Eigenvalues of a symmetric matrix, ascending.

    Args:
        m: square symmetric matrix (relative asymmetry at most 1e-9).
        vectors: also return the orthonormal eigenvector matrix (columns).

    Returns:
        ``w`` or ``(w, V)`` with ``V @ diag(w) @ V.T`` reproducing ``m``.
    """
    a = check_symmetric(m, "m")
    w, v = _jacobi(a, vectors)
    order = np.argsort(w, kind="stable")
    if vectors:
        return w[order], v[:, order]
    return w[order]


def lambda_min(m) -> float:
    return float(sym_eig(m)[0])


def lambda_max(m) -> float:
    return float(sym_eig(m)[-1])


def max_singular_value(m) -> float:
    a = as_matrix(m, "m")
    if a.size == 0:
        raise DimensionError("max_singular_value of an empty matrix")
    return float(np.linalg.svd(a, compute_uv=False)[0])


def condition_number(a: np.ndarray) -> float:
    s = np.linalg.svd(a, compute_uv=False)
    return float(np.inf) if s[-1] == 0.0 else float(s[0] / s[-1])


def solve_linear(a, b) -> np.ndarray:
    """Solve ``a x = b``; raises SingularMatrixError when cond(a) exceeds 1e12."""
    a = _square(a, "a")
    b_arr = np.asarray(b, dtype=float)
    if b_arr.shape[0] != a.shape[0]:
        raise DimensionError(f"right-hand side has {b_arr.shape[0]} rows, expected {a.shape[0]}")
    cond = condition_number(a)
    if not cond < COND_LIMIT:
        raise SingularMatrixError(f"matrix is singular or ill-conditioned (cond ~ {cond:.3g})", condition=cond)
    return np.linalg.solve(a, b_arr)


def _cholesky(m, name: str) -> np.ndarray:
    a = check_symmetric(m, name)
    try:
        return np.linalg.cholesky(symmetrize(a))
    except np.linalg.LinAlgError:
        raise DefinitenessError(f"{name} is not positive definite") from None


def is_positive_definite(m) -> bool:
    try:
        _cholesky(m, "m")
    except (DefinitenessError, SymmetryError, DimensionError):
        return False
    return True


def require_pd(m, name: str) -> np.ndarray:
    _cholesky(m, name)
    return as_matrix(m, name)


def logdet(m) -> float:
    """ln det of a symmetric positive definite matrix via its Cholesky factor."""
    chol = _cholesky(m, "m")
    return float(2.0 * np.sum(np.log(np.diag(chol))))


def _fixed_point(step, x0: np.ndarray, damping: float, tol: float, max_iter: int, what: str):
    if not 0.0 < damping <= 1.0:
        raise PreconditionError("damping must lie in (0, 1]")
    x = x0
    for it in range(1, max_iter + 1):
        x_new = symmetrize((1.0 - damping) * x + damping * step(x))
        if not np.all(np.isfinite(x_new)):
            raise ConvergenceError(f"{what} iteration diverged", residual=np.inf, iterations=it)
        diff = np.linalg.norm(x_new - x)
        x = x_new
        if diff <= tol * max(1.0, np.linalg.norm(x)):
            logger.debug("%s converged in %d iterations", what, it)
            return x, it
    raise ConvergenceError(
        f"{what} did not converge in {max_iter} iterations", residual=float(diff), iterations=max_iter
    )


def control_riccati_map(A, B, Q, R, K):
    gram = R + B.T @ K @ B
    return A.T @ K @ A - A.T @ K @ B @ np.linalg.solve(gram, B.T @ K @ A) + Q


def filter_riccati_map(A, C, V, W, S):
    innov = C @ S @ C.T + V
    return A @ (S - S @ C.T @ np.linalg.solve(innov, C @ S)) @ A.T + W


def solve_control_dare(A, B, Q, R, damping: float = 1.0, tol: float = DARE_TOL,
                       max_iter: int = DARE_MAX_ITER) -> np.ndarray:
    """Stabilizing solution K of the control Riccati equation

        K = A'KA - A'KB (R + B'KB)^-1 B'KA + Q,

    iterated from K = Q.  Controllability is not checked here (see
    ``synthesis.synthesize_gains``).
    """
    A = _square(A, "A")
    n = A.shape[0]
    B = as_matrix(B, "B")
    if B.shape[0] != n:
        raise DimensionError(f"B has {B.shape[0]} rows, expected {n}")
    Q = require_pd(Q, "Q")
    R = require_pd(R, "R")
    if Q.shape != (n, n) or R.shape != (B.shape[1], B.shape[1]):
        raise DimensionError("Q or R has the wrong size")
    K, _ = _fixed_point(lambda X: control_riccati_map(A, B, Q, R, X), symmetrize(Q),
                        damping, tol, max_iter, "control Riccati")
    residual = np.linalg.norm(K - control_riccati_map(A, B, Q, R, K))
    if residual > DARE_RESIDUAL_RTOL * max(np.linalg.norm(K), 1e-300):
        raise ConvergenceError("control Riccati residual above tolerance", residual=float(residual))
    return K


def solve_filter_dare(A, C, V, W, damping: float = 1.0, tol: float = DARE_TOL,
                      max_iter: int = DARE_MAX_ITER) -> np.ndarray:
    """A priori steady-state error covariance of the Kalman filter,

        S = A (S^-1 + C'V^-1 C)^-1 A' + W,

    evaluated in covariance form and iterated from S = W.
    """
    A = _square(A, "A")
    n = A.shape[0]
    C = as_matrix(C, "C")
    if C.shape[1] != n:
        raise DimensionError(f"C has {C.shape[1]} columns, expected {n}")
    W = require_pd(W, "W")
    try:
        V = require_pd(V, "V")
    except DefinitenessError:
        raise PreconditionError("V must be positive definite") from None
    if W.shape != (n, n) or V.shape != (C.shape[0], C.shape[0]):
        raise DimensionError("V or W has the wrong size")
    S, _ = _fixed_point(lambda X: filter_riccati_map(A, C, V, W, X), symmetrize(W),
                        damping, tol, max_iter, "filter Riccati")
    residual = np.linalg.norm(S - filter_riccati_map(A, C, V, W, S))
    if residual > DARE_RESIDUAL_RTOL * np.linalg.norm(S):
        raise ConvergenceError("filter Riccati residual above tolerance", residual=float(residual))
    return S


def block_diag(*blocks) -> np.ndarray:
    mats = [as_matrix(b) for b in blocks]
    rows = sum(b.shape[0] for b in mats)
    cols = sum(b.shape[1] for b in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for b in mats:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def spectral_radius(a) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(as_matrix(a)))))
