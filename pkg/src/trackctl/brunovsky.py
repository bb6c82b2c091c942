"""Brunovsky (controllable companion) form of a single-input pair ``(A, b)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotControllable
from .linalg import as_matrix, char_poly_coeffs

COND_LIMIT = 1e12


@dataclass(frozen=True)
class BrunovskyForm:
    """``A = P A_tilde P^-1`` and ``b = P e_n`` with ``A_tilde`` a companion matrix."""

    alpha: np.ndarray
    P: np.ndarray
    P_inv: np.ndarray
    A_tilde: np.ndarray
    similarity_residual: float

    @property
    def n(self) -> int:
        return self.alpha.size


def companion_from_coeffs(alpha) -> np.ndarray:
    """Companion matrix: ones on the superdiagonal, last row ``(-a_n, ..., -a_1)``."""
    alpha = np.asarray(alpha, dtype=float).ravel()
    n = alpha.size
    if n < 1:
        raise DimensionMismatch("need at least one coefficient", "alpha")
    C = np.eye(n, k=1)
    C[-1, :] = -alpha[::-1]
    return C


def brunovsky_transform(A, b) -> BrunovskyForm:
    """Columns of ``P`` from ``p_n = b``, ``p_k = A p_(k+1) + a_(n-k) b``.

    Raises:
        NotControllable: if ``P`` has condition number above 1e12.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {A.shape}", "A")
    b = np.asarray(b, dtype=float)
    if b.ndim == 2 and 1 in b.shape:
        b = b.ravel()
    if b.shape != (n,):
        raise DimensionMismatch(f"b must be a single column of length {n}, got shape {b.shape}", "B")

    alpha = char_poly_coeffs(A)
    P = np.empty((n, n))
    P[:, n - 1] = b
    for k in range(n - 2, -1, -1):
        # zero-based column k is p_(k+1); its coefficient is a_(n-k-1)
        P[:, k] = A @ P[:, k + 1] + alpha[n - k - 2] * b

    cond = np.linalg.cond(P)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NotControllable(f"transform matrix is singular (cond={cond:.3g}); (A, b) is not controllable")
    P_inv = np.linalg.inv(P)
    A_tilde = companion_from_coeffs(alpha)
    residual = float(np.linalg.norm(A @ P - P @ A_tilde))
    return BrunovskyForm(alpha, P, P_inv, A_tilde, residual)
