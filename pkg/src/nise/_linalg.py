from __future__ import annotations

from collections.abc import Sequence

import numpy as np
import scipy.linalg as sla

from nise.errors import ConditioningError

RANK_RTOL = 1e-10


def deficient_columns(M: np.ndarray, rtol: float = RANK_RTOL) -> list[int]:
    """Indices of columns that a pivoted QR flags as linearly dependent."""
    if M.shape[1] == 0:
        return []
    _, R, piv = sla.qr(M, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return list(range(M.shape[1]))
    rank = int(np.sum(diag > rtol * diag[0]))
    if M.shape[0] < M.shape[1]:
        rank = min(rank, M.shape[0])
    return sorted(int(j) for j in piv[rank:])


def require_full_rank(M: np.ndarray, labels: Sequence[str], what: str) -> None:
    bad = deficient_columns(M)
    if bad:
        names = ", ".join(labels[j] for j in bad)
        raise ConditioningError(f"{what} is rank deficient; dependent columns: {names}")


def qr_solve(M: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients of y (vector or matrix) on full-rank M via thin QR."""
    Q, R = np.linalg.qr(M)
    return sla.solve_triangular(R, Q.T @ y)


def project(M: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Orthogonal projection of the columns of A onto span(M)."""
    if M.shape[1] == 0:
        return np.zeros_like(A)
    Q, _ = np.linalg.qr(M)
    return Q @ (Q.T @ A)
