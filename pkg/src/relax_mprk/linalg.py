"""Dense LU solver with scaled partial pivoting.

All linear systems in this package are small (<= a few hundred unknowns)
and, for conservative production-destruction systems, columnwise
diagonally dominant, so a plain dense factorization is adequate.
"""

from __future__ import annotations

import numpy as np

# A pivot below this fraction of its current row scale is treated as an
# exact zero (the row is linearly dependent on the rows above).
_PIVOT_RTOL = 1e-14


class SingularMatrixError(np.linalg.LinAlgError):
    pass


def lu_solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b by Gaussian elimination with scaled partial pivoting.

    Pivot rows are chosen by the largest entry relative to the row's
    remaining-submatrix scale, which keeps the factorization stable for
    the badly row-scaled matrices produced by stiff reaction systems.
    Raises SingularMatrixError when the best available pivot falls below
    1e-14 times its row scale.
    """
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("matrix must be square")
    if b.shape != (n,):
        raise ValueError("right-hand side length mismatch")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")

    for k in range(n):
        scale = np.max(np.abs(A[k:, k:]), axis=1)
        if np.any(scale == 0.0):
            raise SingularMatrixError("matrix has a linearly dependent row")
        p = k + int(np.argmax(np.abs(A[k:, k]) / scale))
        if abs(A[p, k]) <= _PIVOT_RTOL * scale[p - k]:
            raise SingularMatrixError(f"numerically singular pivot in column {k}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            b[[k, p]] = b[[p, k]]
        if k < n - 1:
            mult = A[k + 1:, k] / A[k, k]
            A[k + 1:, k + 1:] -= np.outer(mult, A[k, k + 1:])
            b[k + 1:] -= mult * b[k]

    x = np.empty(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x
