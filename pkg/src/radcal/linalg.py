"""Small dense linear algebra: LU with partial pivoting, Cholesky, one-sided Jacobi SVD.

The matrices handled here are tiny (a few dozen rows at most) but can be
severely graded, with entries spanning many orders of magnitude.  ``lu_det``
and ``jacobi_svd`` accept stacks of matrices with shape ``(..., rows, cols)``
so that grid scans run as a handful of vectorised sweeps.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailure, SingularMatrixError

PIVOT_FLOOR = 1e-300
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class LUFactors:
    lu: np.ndarray  # unit-lower L below the diagonal, U on and above
    perm: np.ndarray  # row k of the factored matrix is row perm[k] of the input
    sign: np.ndarray  # permutation parity, +1 or -1


def _square_stack(a):
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise InvalidInputError(f"expected square matrices, got shape {a.shape}")
    return a


def lu_factor(a):
    """Factor ``P A = L U`` for a single matrix or a stack of matrices."""
    a = _square_stack(a)
    n = a.shape[-1]
    batch_shape = a.shape[:-2]
    lu = a.reshape(-1, n, n).copy()
    nb = lu.shape[0]
    rows = np.arange(nb)
    perm = np.tile(np.arange(n), (nb, 1))
    sign = np.ones(nb)
    for k in range(n):
        p = k + np.argmax(np.abs(lu[:, k:, k]), axis=1)
        swap = p != k
        if swap.any():
            sign[swap] = -sign[swap]
            top = lu[rows, k].copy()
            lu[rows, k] = lu[rows, p]
            lu[rows, p] = top
            ptop = perm[rows, k].copy()
            perm[rows, k] = perm[rows, p]
            perm[rows, p] = ptop
        pivot = lu[:, k, k]
        ok = pivot != 0.0
        mult = np.zeros((nb, n - k - 1))
        mult[ok] = lu[ok, k + 1:, k] / pivot[ok, None]
        lu[:, k + 1:, k] = mult
        lu[:, k + 1:, k + 1:] -= mult[:, :, None] * lu[:, k, None, k + 1:]
    return LUFactors(
        lu=lu.reshape(batch_shape + (n, n)),
        perm=perm.reshape(batch_shape + (n,)),
        sign=sign.reshape(batch_shape),
    )


def lu_det(a):
    """Determinant via partial-pivoting LU; exactly 0 for an exactly singular pivot."""
    a = _square_stack(a)
    if a.shape[-1] == 0:
        return np.ones(a.shape[:-2]) if a.ndim > 2 else 1.0
    f = lu_factor(a)
    det = f.sign * np.prod(np.diagonal(f.lu, axis1=-2, axis2=-1), axis=-1)
    return float(det) if np.ndim(det) == 0 else det


def lu_solve(a, b, pivot_floor=PIVOT_FLOOR):
    """Solve ``A x = b`` for one square matrix; ``b`` may hold several columns."""
    a = _square_stack(a)
    if a.ndim != 2:
        raise InvalidInputError("lu_solve takes a single matrix")
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    if b.shape[0] != n:
        raise InvalidInputError(f"rhs has {b.shape[0]} rows, matrix has {n}")
    f = lu_factor(a)
    diag = np.abs(np.diagonal(f.lu))
    if n and diag.min() <= pivot_floor:
        raise SingularMatrixError(
            f"pivot {diag.min():.3e} below {pivot_floor:.0e}", indices=np.flatnonzero(diag <= pivot_floor)
        )
    x = b[f.perm].copy()
    for k in range(n):
        x[k + 1:] -= np.multiply.outer(f.lu[k + 1:, k], x[k])
    for k in range(n - 1, -1, -1):
        x[k] /= f.lu[k, k]
        x[:k] -= np.multiply.outer(f.lu[:k, k], x[k])
    return x


def cholesky(a):
    """Lower Cholesky factor of a symmetric matrix, or ``None`` if it is not positive definite."""
    a = _square_stack(a)
    n = a.shape[0]
    low = np.zeros_like(a)
    for k in range(n):
        d = a[k, k] - low[k, :k] @ low[k, :k]
        if not d > 0.0 or not np.isfinite(d):
            return None
        low[k, k] = np.sqrt(d)
        low[k + 1:, k] = (a[k + 1:, k] - low[k + 1:, :k] @ low[k, :k]) / low[k, k]
    return low


def cholesky_solve(low, b):
    """Solve ``L L^T x = b`` given the factor from :func:`cholesky`."""
    b = np.asarray(b, dtype=float)
    n = low.shape[0]
    y = b.copy()
    for k in range(n):
        y[k] = (y[k] - low[k, :k] @ y[:k]) / low[k, k]
    for k in range(n - 1, -1, -1):
        y[k] = (y[k] - low[k + 1:, k] @ y[k + 1:]) / low[k, k]
    return y


def jacobi_svd(a, max_sweeps=60):
    """Singular values (descending) by one-sided Jacobi rotations on columns.

    One-sided Jacobi keeps small singular values accurate relative to their
    own size on graded matrices, which the normal equations would not.
    Accepts a stack ``(..., rows, cols)``; returns ``(..., min(rows, cols))``.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim < 2:
        raise InvalidInputError(f"expected a matrix, got shape {a.shape}")
    if a.shape[-2] < a.shape[-1]:
        a = np.swapaxes(a, -1, -2)
    rows, cols = a.shape[-2:]
    batch_shape = a.shape[:-2]
    if not np.all(np.isfinite(a)):
        raise NumericalFailure("non-finite entries passed to jacobi_svd")
    w = a.reshape(-1, rows, cols).copy()
    tol = rows * _EPS
    for _ in range(max_sweeps):
        rotated = False
        for p in range(cols - 1):
            for q in range(p + 1, cols):
                ap = w[:, :, p]
                aq = w[:, :, q]
                alpha = np.einsum("bi,bi->b", ap, ap)
                beta = np.einsum("bi,bi->b", aq, aq)
                gamma = np.einsum("bi,bi->b", ap, aq)
                act = np.abs(gamma) > tol * np.sqrt(alpha * beta)
                if not act.any():
                    continue
                rotated = True
                g = np.where(act, gamma, 1.0)
                zeta = (beta - alpha) / (2.0 * g)
                t = np.where(zeta >= 0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
                c = np.where(act, 1.0 / np.hypot(1.0, t), 1.0)
                s = np.where(act, c * t, 0.0)
                new_p = c[:, None] * ap - s[:, None] * aq
                w[:, :, q] = s[:, None] * ap + c[:, None] * aq
                w[:, :, p] = new_p
        if not rotated:
            break
    else:
        raise NumericalFailure(f"one-sided Jacobi did not converge in {max_sweeps} sweeps")
    sv = np.sort(np.linalg.norm(w, axis=1), axis=-1)[:, ::-1]
    return sv.reshape(batch_shape + (cols,))
