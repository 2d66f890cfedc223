"""Small dense linear algebra: pivoted solve, determinant, Perron pair.

Matrices here are at most 16x16, so everything is plain Gaussian
elimination on a copy of the input; no LAPACK involvement.
"""

from __future__ import annotations

import numpy as np

from .errors import ConvergenceError, EigenDomainError, SingularMatrixError

MAX_ORDER = 16
SINGULAR_RTOL = 1e-13
EIGEN_RTOL = 1e-14
EIGEN_RESIDUAL = 1e-12
EIGEN_MAX_ITER = 100_000


def as_matrix(A) -> np.ndarray:
    """Validate and copy ``A`` into a float square matrix."""
    M = np.array(A, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] > MAX_ORDER:
        raise ValueError(f"matrix order {M.shape[0]} exceeds supported maximum {MAX_ORDER}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    return M


def _eliminate(M: list, rhs: list | None, threshold: float | None) -> int:
    """In-place forward elimination with partial pivoting on row lists.

    Returns the sign of the row permutation. When ``threshold`` is given a
    pivot below it raises; otherwise elimination stops at the first zero
    column and the sign is 0 (singular). Plain floats: at these orders the
    per-call overhead of array operations dominates.
    """
    n = len(M)
    sign = 1
    for k in range(n):
        p = max(range(k, n), key=lambda i: abs(M[i][k]))
        pivot = M[p][k]
        if threshold is not None and abs(pivot) < threshold:
            raise SingularMatrixError(
                f"pivot {k} has magnitude {abs(pivot):.3e} below {threshold:.3e}", pivot_index=k
            )
        if pivot == 0.0:
            return 0
        if p != k:
            M[k], M[p] = M[p], M[k]
            if rhs is not None:
                rhs[k], rhs[p] = rhs[p], rhs[k]
            sign = -sign
        row_k = M[k]
        for i in range(k + 1, n):
            row_i = M[i]
            factor = row_i[k] / pivot
            if factor != 0.0:
                for j in range(k, n):
                    row_i[j] -= factor * row_k[j]
                if rhs is not None:
                    rhs[i] -= factor * rhs[k]
    return sign


def solve_linear(A, b) -> np.ndarray:
    """Solve ``A x = b`` by partially pivoted elimination.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-13 * ||A||_inf``.
    """
    A = as_matrix(A)
    rhs = np.array(b, dtype=float).reshape(-1)
    n = A.shape[0]
    if rhs.shape[0] != n:
        raise ValueError(f"right-hand side has length {rhs.shape[0]}, expected {n}")
    norm = float(np.abs(A).sum(axis=1).max()) if n else 0.0
    if norm == 0.0:
        raise SingularMatrixError("zero matrix", pivot_index=0)
    M = A.tolist()
    r = rhs.tolist()
    _eliminate(M, r, SINGULAR_RTOL * norm)
    x = [0.0] * n
    for i in range(n - 1, -1, -1):
        row = M[i]
        acc = r[i]
        for j in range(i + 1, n):
            acc -= row[j] * x[j]
        x[i] = acc / row[i]
    return np.array(x)


def determinant(A) -> float:
    M = as_matrix(A).tolist()
    sign = _eliminate(M, None, None)
    if sign == 0:
        return 0.0
    det = float(sign)
    for i in range(len(M)):
        det *= M[i][i]
    return det


def dominant_eigenpair(A, max_iter: int = EIGEN_MAX_ITER) -> tuple[float, np.ndarray]:
    """Perron eigenvalue and positive unit eigenvector by power iteration.

    Starts from the all-ones vector. Stops once two successive eigenvalue
    estimates agree to 1e-14 relative and the residual
    ``||A x - lam x||_inf`` is at most 1e-12.
    """
    M = as_matrix(A)
    if np.any(M < 0):
        raise EigenDomainError("power iteration requires a nonnegative matrix")
    n = M.shape[0]
    x = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(max_iter):
        y = M @ x
        new_lam = float(np.linalg.norm(y))
        if new_lam == 0.0:
            raise EigenDomainError("matrix annihilates the iterate; no Perron pair")
        y /= new_lam
        if y[0] < 0:
            y = -y
        residual = float(np.max(np.abs(M @ y - new_lam * y)))
        if abs(new_lam - lam) <= EIGEN_RTOL * new_lam and residual <= EIGEN_RESIDUAL:
            if np.any(y <= 0):
                raise EigenDomainError("Perron vector has non-positive components (reducible matrix?)")
            return new_lam, y
        lam, x = new_lam, y
    raise ConvergenceError(f"power iteration did not converge in {max_iter} iterations", last_estimate=lam)
