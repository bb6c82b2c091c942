"""Dense linear-algebra kernels.

Matrix exponential, characteristic polynomial (Faddeev-LeVerrier), Kalman
controllability matrix and SVD-based rank/spectrum helpers. Every function is
pure and works on plain ``numpy`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NonSquare, Singular

RANK_TOL = 1e-10
SINGULAR_COND = 1e14


@dataclass(frozen=True)
class SpectrumReport:
    """Singular values (descending) with the numerical rank they imply."""

    singular_values: np.ndarray
    rank_estimate: int
    threshold_used: float

    @property
    def sigma_max(self) -> float:
        return float(self.singular_values[0]) if self.singular_values.size else 0.0

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1]) if self.singular_values.size else 0.0


def as_matrix(M, name="matrix") -> np.ndarray:
    """Coerce to a finite 2-D float array."""
    try:
        arr = np.atleast_2d(np.asarray(M, dtype=float))
    except (TypeError, ValueError):
        raise DimensionMismatch("expected a rectangular array of numbers", name) from None
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D array, got shape {arr.shape}", name)
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch("entries must be finite", name)
    return arr


def _square(A, name="A") -> np.ndarray:
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise NonSquare(f"expected a square matrix, got shape {A.shape}", name)
    return A


def mat_exp(A, t: float = 1.0) -> np.ndarray:
    """Return ``exp(A t)``.

    Backed by ``scipy.linalg.expm`` (scaling and squaring with a degree-13
    Pade approximant).
    """
    A = _square(A)
    return scipy.linalg.expm(A * float(t))


def mat_exp_batch(A, ts) -> np.ndarray:
    """Stack of ``exp(A t)`` for every ``t`` in ``ts``, shape ``(len(ts), n, n)``."""
    A = _square(A)
    ts = np.asarray(ts, dtype=float).ravel()
    return scipy.linalg.expm(ts[:, None, None] * A[None, :, :])


def char_poly_coeffs(A) -> np.ndarray:
    """Coefficients ``[a_1, ..., a_n]`` of ``det(sI - A) = s^n + a_1 s^(n-1) + ... + a_n``.

    Faddeev-LeVerrier recursion::

        M_0 = 0, c_0 = 1
        M_k = A M_{k-1} + c_{k-1} I
        c_k = -trace(A M_k) / k
    """
    A = _square(A)
    n = A.shape[0]
    eye = np.eye(n)
    Mk = np.zeros_like(A)
    c_prev = 1.0
    coeffs = np.empty(n)
    for k in range(1, n + 1):
        Mk = A @ Mk + c_prev * eye
        c_prev = -np.trace(A @ Mk) / k
        coeffs[k - 1] = c_prev
    return coeffs


def kalman_matrix(A, B) -> np.ndarray:
    """Controllability matrix ``[B, AB, ..., A^(n-1) B]``."""
    A = _square(A)
    B = as_matrix(B, "B")
    if B.shape[0] == 1 and A.shape[0] != 1:
        B = B.T
    if B.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}", "B")
    blocks = [B]
    for _ in range(A.shape[0] - 1):
        blocks.append(A @ blocks[-1])
    return np.hstack(blocks)


def spectrum(M, tol: float = RANK_TOL) -> SpectrumReport:
    """Singular values of ``M`` and the count above ``tol * sigma_max``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return SpectrumReport(np.zeros(0), 0, 0.0)
    s = np.linalg.svd(M, compute_uv=False)
    threshold = tol * s[0] if s[0] > 0 else 0.0
    rank = int(np.count_nonzero(s > threshold)) if s[0] > 0 else 0
    return SpectrumReport(s, rank, float(threshold))


def kalman_rank(A, B, tol: float = RANK_TOL) -> SpectrumReport:
    """Numerical rank of the Kalman matrix of ``(A, B)``."""
    return spectrum(kalman_matrix(A, B), tol)


def solve_linear(M, rhs) -> np.ndarray:
    """Solve ``M X = rhs`` by LU with partial pivoting.

    Raises:
        Singular: if the 2-norm condition number of ``M`` exceeds 1e14.
    """
    M = _square(M, "M")
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != M.shape[0]:
        raise DimensionMismatch(f"rhs has {rhs.shape[0]} rows, M is {M.shape[0]}", "rhs")
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise Singular(f"matrix is numerically singular (cond={cond:.3g})")
    lu, piv = scipy.linalg.lu_factor(M)
    return scipy.linalg.lu_solve((lu, piv), rhs)
