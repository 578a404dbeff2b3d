"""Small dense matrix kernel: minors, numeric rank, rank-one tests, spans."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerance:
    """Numerical thresholds shared across the toolkit.

    Attributes
    ----------
    rank_tol : float
        Relative singular-value threshold used by :func:`numeric_rank`.
    residual_tol : float
        Absolute threshold for equation residuals.
    """

    rank_tol: float = 1e-10
    residual_tol: float = 1e-9

    def __post_init__(self):
        for name in ("rank_tol", "residual_tol"):
            val = getattr(self, name)
            if not (0.0 < val < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {val}")


DEFAULT_TOL = Tolerance()


def as_matrix(M, shape=None) -> np.ndarray:
    A = np.asarray(M, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {A.shape}")
    if shape is not None and A.shape != shape:
        raise ValueError(f"expected shape {shape}, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def minor(M, i: int, j: int) -> float:
    """Determinant of the 2x2 block formed by rows ``i`` and ``j`` (1-based).

    Parameters
    ----------
    M : array_like, shape (3, 2)
    i, j : int
        Row indices with ``1 <= i < j <= 3``.
    """
    A = as_matrix(M, (3, 2))
    if not (1 <= i < j <= 3):
        raise ValueError(f"invalid row pair ({i}, {j}); need 1 <= i < j <= 3")
    a, b = A[i - 1], A[j - 1]
    return float(a[0] * b[1] - a[1] * b[0])


def minors(M) -> np.ndarray:
    """All three 2x2 minors ``(M12, M13, M23)`` of a 3x2 matrix, batched over leading axes."""
    A = np.asarray(M, dtype=float)
    r = A[..., :, 0, None] * A[..., None, :, 1] - A[..., :, 1, None] * A[..., None, :, 0]
    return np.stack([r[..., 0, 1], r[..., 0, 2], r[..., 1, 2]], axis=-1)


def singular_values(M) -> np.ndarray:
    return np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)


def numeric_rank(M, tol: Tolerance = DEFAULT_TOL) -> int:
    """Number of singular values above ``rank_tol`` times the largest one.

    The zero matrix has rank 0 regardless of tolerance.
    """
    A = as_matrix(M)
    if A.size == 0:
        return 0
    s = singular_values(A)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > tol.rank_tol * s[0]))


def is_rank1_connected(A, B, tol: Tolerance = DEFAULT_TOL) -> bool:
    """True iff ``A - B`` has numeric rank exactly one."""
    A, B = as_matrix(A), as_matrix(B)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch {A.shape} vs {B.shape}")
    return numeric_rank(A - B, tol) == 1


def sigma_ratio(M) -> float:
    """Ratio of second to first singular value (0 for the zero matrix)."""
    s = singular_values(M)
    if s.size < 2 or s[0] == 0.0:
        return 0.0
    return float(s[1] / s[0])


def span_dim(mats, tol: Tolerance = DEFAULT_TOL) -> int:
    """Dimension of the linear span of a nonempty list of equally shaped matrices."""
    mats = [as_matrix(m) for m in mats]
    if not mats:
        raise ValueError("span_dim needs at least one matrix")
    return numeric_rank(np.stack([m.ravel() for m in mats]), tol)


def cross3(x, y) -> np.ndarray:
    return np.cross(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def dot3(x, y) -> float:
    return float(np.dot(np.asarray(x, dtype=float), np.asarray(y, dtype=float)))


def normalize_direction(M) -> np.ndarray:
    """Scale to unit Frobenius norm with the first non-negligible entry positive."""
    A = np.asarray(M, dtype=float)
    n = np.linalg.norm(A)
    if n == 0.0:
        raise ValueError("cannot normalize the zero matrix")
    A = A / n
    flat = A.ravel()
    idx = int(np.argmax(np.abs(flat) > 1e-12))
    return -A if flat[idx] < 0 else A
