"""Discrete control-to-output operator, its exact adjoint, Gramian and spectra.

The forward map is Crank-Nicolson from zero initial state::

    (I - dt/2 A) x_(k+1) = (I + dt/2 A) x_k + dt/2 B (u_k + u_(k+1)),   y_k = E x_k

Inner products on sampled signals use trapezoid weights ``w``. The adjoint
is the exact transpose of the forward map in those inner products, computed
by a backward sweep::

    (I - dt/2 A^T) phi_(k-1) = (I + dt/2 A^T) phi_k + w_k E^T psi_k,   phi_N = 0
    (adjoint psi)_j = dt / (2 w_j) * B^T (phi_j + phi_(j-1))

so ``<L u, psi>_w == <u, L^# psi>_w`` holds to rounding error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, TooLarge, ZeroCoefficient
from .linalg import RANK_TOL, spectrum
from .model import Grid, LtiSystem, SampledSignal

MAX_DENSE_ENTRIES = 4_000_000
UC_RATIO = 1e-10


@dataclass(frozen=True)
class AdjointRun:
    source: SampledSignal
    adjoint_state: np.ndarray  # (N+1, n), last row exactly zero
    observation: SampledSignal


class DiscreteOperator:
    """Matrix-free Crank-Nicolson realization of ``u -> E x`` on a grid."""

    def __init__(self, sys: LtiSystem, grid: Grid):
        self.sys, self.grid = sys, grid
        n, dt = sys.n, grid.dt
        C = np.eye(n) - 0.5 * dt * sys.A
        lu = scipy.linalg.lu_factor(C)
        self.M = scipy.linalg.lu_solve(lu, np.eye(n) + 0.5 * dt * sys.A)
        self.G = scipy.linalg.lu_solve(lu, 0.5 * dt * sys.B)
        self.CtE = scipy.linalg.lu_solve(lu, sys.E.T, trans=1)  # C^-T E^T
        self.w = grid.weights

    def inner(self, a, b) -> float:
        """Weighted inner product ``sum_k w_k a_k . b_k``."""
        a = np.asarray(a, dtype=float).reshape(self.w.size, -1)
        b = np.asarray(b, dtype=float).reshape(self.w.size, -1)
        return float(self.w @ np.sum(a * b, axis=1))

    def _as_samples(self, v, d, name):
        v = v.values if isinstance(v, SampledSignal) else np.asarray(v, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[:2] != (self.grid.N + 1, d):
            raise DimensionMismatch(f"expected shape {(self.grid.N + 1, d)}, got {v.shape}", name)
        return v

    def forward(self, u) -> np.ndarray:
        """Outputs ``E x_k`` at every node, shape ``(N+1, p)``.

        A trailing batch axis (shape ``(N+1, m, K)``) is carried through.
        """
        return np.einsum("pn,kn...->kp...", self.sys.E, self.states(u))

    def states(self, u) -> np.ndarray:
        """Crank-Nicolson states from ``x_0 = 0``, shape ``(N+1, n)``."""
        u = self._as_samples(u, self.sys.m, "u")
        v = u[:-1] + u[1:]
        forcing = np.einsum("nm,km...->kn...", self.G, v)
        X = np.zeros((u.shape[0], self.sys.n) + u.shape[2:])
        x = X[0]
        for k in range(forcing.shape[0]):
            x = np.tensordot(self.M, x, axes=1) + forcing[k]
            X[k + 1] = x
        return X

    def adjoint_state(self, psi) -> np.ndarray:
        """Backward sweep, shape ``(N+1, n)`` with ``phi_N = 0``."""
        psi = self._as_samples(psi, self.sys.p, "psi")
        src = np.einsum("np,kp...->kn...", self.CtE, self.w.reshape((-1,) + (1,) * (psi.ndim - 1)) * psi)
        Mt = self.M.T
        Phi = np.zeros((psi.shape[0], self.sys.n) + psi.shape[2:])
        phi = Phi[-1]
        for k in range(psi.shape[0] - 1, 0, -1):
            phi = np.tensordot(Mt, phi, axes=1) + src[k]
            Phi[k - 1] = phi
        return Phi

    def observe(self, Phi) -> np.ndarray:
        """``B^T`` applied to the adjoint state, weighted to make the pair exact."""
        s = Phi.copy()
        s[1:] += Phi[:-1]
        scale = (0.5 * self.grid.dt / self.w).reshape((-1,) + (1,) * (Phi.ndim - 1))
        return scale * np.einsum("nm,kn...->km...", self.sys.B, s)

    def transpose(self, psi) -> np.ndarray:
        """Weighted adjoint ``L^#``, shape ``(N+1, m)``."""
        return self.observe(self.adjoint_state(psi))

    def gramian(self, psi) -> np.ndarray:
        """``L (L^# psi)``."""
        return self.forward(self.transpose(psi))

    def check_dense_size(self):
        N1 = self.grid.N + 1
        size = self.sys.p * N1 * self.sys.m * N1
        if size > MAX_DENSE_ENTRIES:
            raise TooLarge(f"dense operator would have {size} entries (limit {MAX_DENSE_ENTRIES})")

    def matrix(self) -> np.ndarray:
        """Dense ``L``, shape ``(p(N+1), m(N+1))``; row ``k p + i``, column ``j m + c``.

        Assembled from the Markov parameters ``H_i = E M^i G``.
        """
        self.check_dense_size()
        N, p, m = self.grid.N, self.sys.p, self.sys.m
        H = np.empty((N, p, m))
        R = self.sys.E.copy()
        for i in range(N):
            H[i] = R @ self.G
            R = R @ self.M
        L = np.zeros((N + 1, p, N + 1, m))
        k, j = np.tril_indices(N + 1, -1)  # j < k
        L[k, :, j, :] += H[k - 1 - j]
        k, j = np.tril_indices(N + 1)
        keep = (j >= 1) & (k >= 1)
        k, j = k[keep], j[keep]
        L[k, :, j, :] += H[k - j]
        return L.reshape(p * (N + 1), m * (N + 1))


# --------------------------------------------------------------------------
# functional surface


def lambda_apply(sys: LtiSystem, u: SampledSignal) -> SampledSignal:
    """Output of the zero-initial-state system driven by ``u`` (``x0`` ignored)."""
    return SampledSignal(u.grid, DiscreteOperator(sys, u.grid).forward(u))


def lambda_adjoint_apply(sys: LtiSystem, psi: SampledSignal) -> SampledSignal:
    return SampledSignal(psi.grid, DiscreteOperator(sys, psi.grid).transpose(psi))


def adjoint_run(sys: LtiSystem, g: SampledSignal) -> AdjointRun:
    op = DiscreteOperator(sys, g.grid)
    Phi = op.adjoint_state(g)
    return AdjointRun(g, Phi, SampledSignal(g.grid, op.observe(Phi)))


def assemble_lambda_matrix(sys: LtiSystem, grid: Grid) -> np.ndarray:
    return DiscreteOperator(sys, grid).matrix()


def gramian_apply(sys: LtiSystem, psi: SampledSignal) -> SampledSignal:
    return SampledSignal(psi.grid, DiscreteOperator(sys, psi.grid).gramian(psi))


def _weight_roots(grid: Grid, d: int) -> np.ndarray:
    return np.repeat(np.sqrt(grid.weights), d)


def weighted_lambda_matrix(sys: LtiSystem, grid: Grid) -> np.ndarray:
    """``W^(1/2) L W^(-1/2)``: the operator in orthonormal coordinates of the weighted spaces."""
    L = assemble_lambda_matrix(sys, grid)
    return _weight_roots(grid, sys.p)[:, None] * L / _weight_roots(grid, sys.m)[None, :]


def gramian_matrix(sys: LtiSystem, grid: Grid) -> np.ndarray:
    """Symmetric PSD Gramian in weighted-orthonormal coordinates.

    ``gramian_apply(psi) == W^(-1/2) G W^(1/2) psi``.
    """
    Lw = weighted_lambda_matrix(sys, grid)
    return Lw @ Lw.T


def _integrator_factor(grid: Grid) -> np.ndarray:
    """Cholesky factor of the Gram matrix of the scalar CN integrator (rows ``1..N``).

    ``|R^-1 y|`` is the least weighted-L2 norm of a control whose CN
    integral is ``y``: the discrete counterpart of ``|y'|_L2`` on outputs
    vanishing at ``t = 0``.
    """
    one = LtiSystem([[0.0]], [[1.0]], [[1.0]])
    Lint = assemble_lambda_matrix(one, grid)[1:]
    gram = (Lint / grid.weights[None, :]) @ Lint.T
    return np.linalg.cholesky(gram)


def observability_matrix(sys: LtiSystem, grid: Grid) -> np.ndarray:
    """Operator matrix from weighted-L2 controls to outputs in the discrete H0^1 norm.

    The ``t = 0`` output row is dropped (it is identically zero).
    """
    N, p, m = grid.N, sys.p, sys.m
    L = assemble_lambda_matrix(sys, grid).reshape(N + 1, p, m * (N + 1))[1:]
    R = _integrator_factor(grid)
    out = np.empty((N, p, m * (N + 1)))
    for i in range(p):
        out[:, i, :] = scipy.linalg.solve_triangular(R, L[:, i, :], lower=True)
    return out.reshape(N * p, -1) / _weight_roots(grid, m)[None, :]


@dataclass(frozen=True)
class ObservabilityReport:
    grids: list
    spectra: list  # SpectrumReport per grid
    decay: list  # rows (N, dt, sigma_min, local exponent vs. previous grid)


def observability_spectrum(sys: LtiSystem, grids, tol: float = RANK_TOL) -> ObservabilityReport:
    """Singular values of the control-to-output map on each grid, with a decay table.

    A shrinking ``sigma_min`` under refinement is the discrete trace of
    derivative loss; the local exponent is ``log(s_i/s_(i-1)) / log(dt_i/dt_(i-1))``.
    """
    grids = list(grids)
    spectra, decay = [], []
    for i, grid in enumerate(grids):
        rep = spectrum(observability_matrix(sys, grid), tol)
        spectra.append(rep)
        slope = float("nan")
        if i and rep.sigma_min > 0 and spectra[i - 1].sigma_min > 0:
            slope = np.log(rep.sigma_min / spectra[i - 1].sigma_min) / np.log(grid.dt / grids[i - 1].dt)
        decay.append((grid.N, grid.dt, rep.sigma_min, float(slope)))
    return ObservabilityReport(grids, spectra, decay)


def unique_continuation_test(sys: LtiSystem, grid: Grid) -> dict:
    """Discrete injectivity of ``g -> B^T phi``: ratio of extreme singular values."""
    Lw = observability_matrix(sys, grid)
    rows, cols = Lw.shape
    s = np.linalg.svd(Lw, compute_uv=False)
    if s.size == 0 or s[0] == 0 or rows > cols:
        ratio = 0.0
    else:
        ratio = float(s[-1] / s[0])
    holds = ratio > UC_RATIO
    return {"sigma_min_rel": ratio, "holds": holds,
            "verdict": "UC holds numerically" if holds else "UC fails numerically"}


# --------------------------------------------------------------------------
# moment formula


@dataclass(frozen=True)
class MomentControl:
    u: SampledSignal
    max_deviation: float
    deviations: list  # per component k != 1


def moment_control(lambdas, c, f_components, grid: Grid) -> MomentControl:
    """``u = f_1'/c_1 - l_1 f_1/c_1`` with the cross-mode compatibility report.

    Raises:
        ZeroCoefficient: if some ``c_k`` is zero.
    """
    lambdas = np.asarray(lambdas, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    fs = list(f_components)
    if not (lambdas.size == c.size == len(fs)) or not fs:
        raise DimensionMismatch("lambdas, c and targets must have equal nonzero length", "c")
    zero = np.nonzero(c == 0)[0]
    if zero.size:
        raise ZeroCoefficient(f"c[{zero[0]}] = 0: that mode cannot be tracked by this formula")
    t = grid.nodes

    def candidate(k):
        d = fs[k].derivs(1, t)
        return (d[1] - lambdas[k] * d[0]) / c[k]

    u = candidate(0)
    devs = [float(np.max(np.abs(candidate(k) - u))) for k in range(1, len(fs))]
    return MomentControl(SampledSignal(grid, u), max(devs, default=0.0), devs)
