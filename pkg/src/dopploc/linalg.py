"""Dense complex linear algebra used by the Newton corrector and path tracker.

All routines operate on stacks of small matrices: shapes are ``(B, n, n)``
and ``(B, n)`` with an arbitrary batch size B. Per-slice results are
independent of the batch they are computed in, which is what makes batched
path tracking bit-for-bit equal to tracking paths one at a time.
"""

from __future__ import annotations

import numpy as np

from .exceptions import DimensionMismatchError, SingularMatrixError

# A pivot below PIVOT_RTOL times the matrix inf-norm is treated as zero,
# consistent with double-precision backward error.
PIVOT_RTOL = 1e-14

__all__ = ["solve_linear", "condition_estimate", "lu_factor", "lu_solve", "PIVOT_RTOL"]


def lu_factor(a: np.ndarray, pivot_rtol: float = PIVOT_RTOL):
    """LU-factor a stack of square matrices with partial pivoting.

    Parameters
    ----------
    a : ndarray, shape (B, n, n)
        Stack of matrices. Not modified.
    pivot_rtol : float
        Relative pivot threshold; a pivot smaller than ``pivot_rtol`` times
        the matrix inf-norm marks that slice as singular.

    Returns
    -------
    lu : ndarray, shape (B, n, n)
        Packed L (unit lower) and U factors.
    piv : ndarray, shape (B, n) int
        Row interchanges: at step k, row k was swapped with row piv[:, k].
    singular : ndarray, shape (B,) bool
        True for slices where a pivot fell below the threshold. Factors of
        singular slices are not usable.
    """
    lu = np.array(a, dtype=complex)
    if lu.ndim != 3 or lu.shape[-1] != lu.shape[-2]:
        raise DimensionMismatchError(f"expected (B, n, n) matrix stack, got {lu.shape}")
    nbatch, n, _ = lu.shape
    piv = np.zeros((nbatch, n), dtype=np.intp)
    singular = np.zeros(nbatch, dtype=bool)
    # inf-norm sets the scale for the pivot threshold
    scale = np.abs(lu).sum(axis=2).max(axis=1)
    thresh = pivot_rtol * np.maximum(scale, np.finfo(float).tiny)
    bidx = np.arange(nbatch)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for k in range(n):
            p = np.argmax(np.abs(lu[:, k:, k]), axis=1) + k
            piv[:, k] = p
            rows_k = lu[bidx, k, :].copy()
            lu[bidx, k, :] = lu[bidx, p, :]
            lu[bidx, p, :] = rows_k
            pivot = lu[:, k, k]
            bad = np.abs(pivot) < thresh
            singular |= bad
            denom = np.where(bad, 1.0, pivot)
            lu[:, k + 1 :, k] /= denom[:, None]
            lu[:, k + 1 :, k + 1 :] -= lu[:, k + 1 :, k : k + 1] * lu[:, k : k + 1, k + 1 :]
    return lu, piv, singular


def lu_solve(lu: np.ndarray, piv: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` for each slice of a factored stack.

    ``b`` has shape (B, n); slices flagged singular by :func:`lu_factor`
    produce unusable values and must be masked out by the caller.
    """
    nbatch, n, _ = lu.shape
    x = np.array(b, dtype=complex)
    if x.shape != (nbatch, n):
        raise DimensionMismatchError(f"rhs shape {x.shape} does not match factor stack {lu.shape}")
    bidx = np.arange(nbatch)
    for k in range(n):
        p = piv[:, k]
        xk = x[bidx, k].copy()
        x[bidx, k] = x[bidx, p]
        x[bidx, p] = xk
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        for i in range(1, n):
            x[:, i] -= (lu[:, i, :i] * x[:, :i]).sum(axis=-1)
        for i in range(n - 1, -1, -1):
            if i < n - 1:
                x[:, i] -= (lu[:, i, i + 1 :] * x[:, i + 1 :]).sum(axis=-1)
            x[:, i] /= lu[:, i, i]
    return x


def _as_square(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {a.shape}")
    return a


def solve_linear(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve the square complex system ``a x = b`` by LU with partial pivoting.

    Raises
    ------
    SingularMatrixError
        If a pivot falls below ``PIVOT_RTOL`` times the matrix inf-norm.
    DimensionMismatchError
        If ``a`` is not square or ``b`` has the wrong length.
    """
    a = _as_square(a)
    b = np.asarray(b, dtype=complex)
    if b.shape != (a.shape[0],):
        raise DimensionMismatchError(f"rhs shape {b.shape} does not match matrix {a.shape}")
    lu, piv, singular = lu_factor(a[None])
    if singular[0]:
        raise SingularMatrixError("pivot below threshold; matrix is singular to working precision")
    return lu_solve(lu, piv, b[None])[0]


def condition_estimate(a: np.ndarray) -> float:
    """1-norm condition number ``||A||_1 * ||A^-1||_1`` via the LU factors.

    Within a factor of n of the 2-norm condition number, which satisfies the
    order-of-magnitude contract for the small systems used here.

    Raises
    ------
    SingularMatrixError
        If the matrix is singular to working precision.
    """
    a = _as_square(a)
    n = a.shape[0]
    lu, piv, singular = lu_factor(a[None])
    if singular[0]:
        raise SingularMatrixError("matrix is singular; condition number is infinite")
    norm_a = np.abs(a).sum(axis=0).max()
    eye = np.eye(n, dtype=complex)
    inv_cols = np.stack([lu_solve(lu, piv, eye[j][None])[0] for j in range(n)], axis=1)
    norm_inv = np.abs(inv_cols).sum(axis=0).max()
    return float(norm_a * norm_inv)
