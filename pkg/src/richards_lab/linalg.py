"""Sparse direct solves and 1-norm condition estimation.

Matrices are ``scipy.sparse.csr_matrix`` with sorted column indices.  The
LU factorization is SuperLU (through ``scipy.sparse.linalg.splu``) with a
reverse Cuthill--McKee pre-ordering; the condition estimator is a
block-size-one Hager--Higham iteration written out here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee

SparseMatrix = sp.csr_matrix


class SingularMatrixError(RuntimeError):
    """Raised when a factorization meets a (numerically) zero pivot."""


@dataclass(frozen=True)
class Factorization:
    lu: spla.SuperLU
    perm: np.ndarray  # symmetric RCM permutation applied before LU
    shape: tuple

    def solve(self, b: np.ndarray) -> np.ndarray:
        return solve(self, b)

    def solve_transpose(self, b: np.ndarray) -> np.ndarray:
        return solve_transpose(self, b)


def as_csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def factorize(A, pivot_tol: float = 1e-14) -> Factorization:
    """LU-factorize a square sparse matrix with partial (row) pivoting.

    Raises :class:`SingularMatrixError` when SuperLU reports an exactly
    singular factor or when a pivot of U is below ``pivot_tol`` times the
    largest entry of A.
    """
    A = as_csr(A)
    n, m = A.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if not np.all(np.isfinite(A.data)):
        raise SingularMatrixError("matrix has non-finite entries")
    perm = reverse_cuthill_mckee(A, symmetric_mode=False).astype(np.int64)
    Ap = A[perm][:, perm].tocsc()
    try:
        lu = spla.splu(Ap, permc_spec="NATURAL", diag_pivot_thresh=1.0,
                       options={"SymmetricMode": False})
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc
    udiag = np.abs(lu.U.diagonal())
    scale = np.abs(A.data).max() if A.nnz else 0.0
    if n and (scale == 0.0 or udiag.min() <= pivot_tol * scale):
        raise SingularMatrixError(f"pivot {udiag.min():.3e} below tolerance")
    return Factorization(lu=lu, perm=perm, shape=A.shape)


def solve(F: Factorization, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    y = F.lu.solve(b[F.perm])
    x = np.empty_like(y)
    x[F.perm] = y
    return x


def solve_transpose(F: Factorization, b) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    y = F.lu.solve(b[F.perm], trans="T")
    x = np.empty_like(y)
    x[F.perm] = y
    return x


def norm1(A) -> float:
    """Exact matrix 1-norm (maximum absolute column sum)."""
    A = sp.csc_matrix(A)
    if A.shape[1] == 0:
        return 0.0
    return float(np.max(np.asarray(abs(A).sum(axis=0)).ravel()))


def inverse_norm1_estimate(F: Factorization, max_sweeps: int = 5) -> float:
    """Hager--Higham lower bound for ||A^{-1}||_1 (block size 1).

    Starts from the uniform vector e/n, alternates solves with A and A^T,
    and finishes with Higham's alternating-sign test vector.
    """
    n = F.shape[0]
    if n == 0:
        return 0.0
    x = np.full(n, 1.0 / n)
    est = 0.0
    last_j = -1
    old_sign = None
    for k in range(max_sweeps):
        y = solve(F, x)
        new_est = float(np.abs(y).sum())
        sign = np.where(y >= 0.0, 1.0, -1.0)
        if k > 0 and (new_est <= est or (old_sign is not None and np.array_equal(sign, old_sign))):
            est = max(est, new_est)
            break
        est = new_est
        old_sign = sign
        z = solve_transpose(F, sign)
        j = int(np.argmax(np.abs(z)))
        if k > 0 and (np.abs(z[j]) <= z @ x or j == last_j):
            break
        last_j = j
        x = np.zeros(n)
        x[j] = 1.0

    alt = (-1.0) ** np.arange(n) * (1.0 + np.arange(n) / max(n - 1, 1))
    alt_est = 2.0 * float(np.abs(solve(F, alt)).sum()) / (3.0 * n)
    return max(est, alt_est)


def condest_1norm(F: Factorization, A) -> float:
    """Lower-bound estimate of kappa_1(A) = ||A||_1 ||A^{-1}||_1."""
    return norm1(A) * inverse_norm1_estimate(F)
