"""Jacobi-preconditioned conjugate gradient for the normal equations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import SolverError

DEFAULT_TOL = 1e-8
# Added to the diagonal so directions left free by disabled terms stay bounded.
DIAGONAL_LIFT = 1e-12


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    converged: bool
    relative_residual: float
    residual_history: list[float] = field(default_factory=list)


def solve(A, b, tol: float = DEFAULT_TOL, max_iter: int | None = None, x0=None,
          lift: float = DIAGONAL_LIFT) -> SolveResult:
    """Solve ``A x = b`` for symmetric positive semi-definite ``A``.

    Stops when ||A x - b|| / ||b|| <= tol or after ``max_iter`` iterations
    (default ``10 * dim``) and returns the iterate with the smallest residual.
    ``residual_history`` tracks that best iterate, so it never increases.
    """
    A = sp.csr_matrix(A) if not sp.issparse(A) else A.tocsr()
    b = np.asarray(b, dtype=np.float64)
    n = b.shape[0]
    if A.shape != (n, n):
        raise ValueError(f"matrix shape {A.shape} does not match rhs length {n}")
    if not (np.all(np.isfinite(A.data)) and np.all(np.isfinite(b))):
        raise SolverError("non-finite values in the linear system")
    if max_iter is None:
        max_iter = 10 * n
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if n == 0:
        return SolveResult(x, 0, True, 0.0, [0.0])

    diag = A.diagonal() + lift
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)

    def matvec(v):
        return A @ v + lift * v

    bnorm = np.linalg.norm(b)
    scale = bnorm if bnorm > 0 else 1.0
    r = b - matvec(x)
    res = np.linalg.norm(r) / scale
    history = [res]
    best_x, best_res = x.copy(), res
    if res <= tol:
        return SolveResult(x, 0, True, res, history)

    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    it = 0
    converged = False
    while it < max_iter:
        Ap = matvec(p)
        pAp = p @ Ap
        if not np.isfinite(pAp):
            raise SolverError("non-finite value during conjugate gradient")
        if pAp <= 0:
            break
        alpha = rz / pAp
        x = x + alpha * p
        r = r - alpha * Ap
        it += 1
        res = np.linalg.norm(r) / scale
        if not np.isfinite(res):
            raise SolverError("non-finite residual during conjugate gradient")
        if res < best_res:
            best_x, best_res = x.copy(), res
        history.append(best_res)
        if res <= tol:
            converged = True
            break
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    true_res = np.linalg.norm(b - matvec(best_x)) / scale
    return SolveResult(best_x, it, converged or true_res <= tol, float(true_res), history)
