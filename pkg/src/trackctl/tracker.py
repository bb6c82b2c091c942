"""Exact tracking-control synthesis for scalar input and scalar output.

Pipeline: shift the target to zero initial data, move to Brunovsky
coordinates ``x = P y``, read the output weights ``eta = E P``, find the
critical index ``k*`` (top nonzero weight), integrate the order ``k*-1``
zero-dynamics ODE for ``y_1``, lift the remaining derivatives of ``y_1``
algebraically and close with the companion last row::

    u = y_1^(n) + sum_j a_(n+1-j) y_1^(j-1)

``simulate`` is the independent check: RK4 on a refined grid.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .brunovsky import BrunovskyForm, brunovsky_transform
from .errors import AllZeroOutput, CompatibilityViolation, DimensionMismatch, InsufficientRegularity
from .model import (
    COMPAT_TOL,
    Grid,
    LtiSystem,
    SampledSignal,
    TargetSignal,
    Trajectory,
    shift_target,
    target_samples,
)

ETA_REL_TOL = 1e-10


@dataclass(frozen=True)
class CascadeState:
    eta: np.ndarray
    k_star: int
    y1_derivs: np.ndarray | None = None  # shape (n+1, N+1): y_1^(j) at nodes

    @property
    def n(self) -> int:
        return self.eta.size

    @property
    def required_target_order(self) -> int:
        return self.n - self.k_star + 1


@dataclass(frozen=True)
class TrackingSynthesis:
    u: SampledSignal
    form: BrunovskyForm
    state: CascadeState
    shifted: TargetSignal


# --------------------------------------------------------------------------
# linear RK4


def rk4_matrices(F, G, h):
    """One RK4 step of ``x' = F x + G v(t)`` written as
    ``x+ = R x + Q0 v(t) + Qh v(t + h/2) + Q1 v(t + h)``."""
    F = np.atleast_2d(F)
    n = F.shape[0]
    I = np.eye(n)
    H = h * F
    H2 = H @ H
    H3 = H2 @ H
    R = I + H + H2 / 2 + H3 / 6 + H2 @ H2 / 24
    Q0 = (h / 6) * (I + H + H2 / 2 + H3 / 4) @ G
    Qh = (h / 6) * (4 * I + 2 * H + H2 / 2) @ G
    Q1 = (h / 6) * G
    return R, Q0, Qh, Q1


def rk4_propagate(F, G, h, x0, v_nodes, v_mid):
    """Integrate ``x' = F x + G v`` from ``x0`` with fixed step ``h``.

    ``v_nodes`` has shape ``(K+1, m)`` (values at step points) and ``v_mid``
    shape ``(K, m)`` (values at midpoints). Returns states, shape ``(K+1, n)``.
    """
    R, Q0, Qh, Q1 = rk4_matrices(F, G, h)
    forcing = v_nodes[:-1] @ Q0.T + v_mid @ Qh.T + v_nodes[1:] @ Q1.T
    X = np.empty((forcing.shape[0] + 1, R.shape[0]))
    x = X[0] = np.asarray(x0, dtype=float)
    for k in range(forcing.shape[0]):
        x = R @ x + forcing[k]
        X[k + 1] = x
    return X


# --------------------------------------------------------------------------
# cascade stages


def output_coefficients(E, form: BrunovskyForm) -> np.ndarray:
    """``eta_i = <E, p_i>``."""
    E = np.asarray(E, dtype=float)
    if E.ndim == 2:
        if E.shape[0] != 1:
            raise DimensionMismatch(f"scalar output needs a single row, got {E.shape}", "E")
        E = E[0]
    if E.shape != (form.n,):
        raise DimensionMismatch(f"E must have length {form.n}", "E")
    return E @ form.P


def critical_index(eta, rel_tol: float = ETA_REL_TOL) -> int:
    """Largest 1-based ``k`` with ``|eta_k| > rel_tol * max|eta|``."""
    eta = np.abs(np.asarray(eta, dtype=float).ravel())
    if eta.size == 0:
        raise DimensionMismatch("empty coefficient list", "eta")
    top = eta.max()
    if top == 0:
        raise AllZeroOutput("E annihilates every Brunovsky column; only f = 0 is trackable")
    return int(np.nonzero(eta > rel_tol * top)[0][-1]) + 1


def _check_order(g: TargetSignal, order: int):
    if g.max_order < order:
        raise InsufficientRegularity(
            f"target must have {order} derivatives, it declares {g.max_order}")


def cascade_solve(state: CascadeState, g: TargetSignal, grid: Grid) -> CascadeState:
    """Fill ``y_1^(j)``, ``j = 0..k*-1``, at the grid nodes.

    The first ``k*-1`` orders solve
    ``sum_(j<=k*) eta_j y_1^(j-1) = g`` with zero initial data by fixed-step
    RK4; order ``k*-1`` then follows from the same relation algebraically.
    """
    _check_order(g, state.required_target_order)
    n, ks, eta = state.n, state.k_star, state.eta
    t = grid.nodes
    D = np.zeros((n + 1, t.size))
    g_nodes = g(t)
    d = ks - 1
    if d > 0:
        F = np.eye(d, k=1)
        F[-1, :] = -eta[:d] / eta[ks - 1]
        G = np.zeros((d, 1))
        G[-1, 0] = 1.0 / eta[ks - 1]
        g_mid = g(t[:-1] + 0.5 * grid.dt)
        Z = rk4_propagate(F, G, grid.dt, np.zeros(d), g_nodes[:, None], g_mid[:, None])
        D[:d] = Z.T
    D[d] = (g_nodes - eta[:d] @ D[:d]) / eta[ks - 1]
    return replace(state, y1_derivs=D)


def derivative_lift(state: CascadeState, g: TargetSignal, grid: Grid) -> CascadeState:
    """Extend ``y_1^(j)`` to ``j = k*..n`` via
    ``y_1^(k*-1+m) = (g^(m) - sum_(j<k*) eta_j y_1^(j-1+m)) / eta_k*``."""
    order = state.required_target_order
    _check_order(g, order)
    if state.y1_derivs is None:
        raise ValueError("run cascade_solve first")
    n, ks, eta = state.n, state.k_star, state.eta
    D = state.y1_derivs.copy()
    gd = g.derivs(order, grid.nodes)
    for mstep in range(1, order + 1):
        lower = D[mstep:mstep + ks - 1]
        D[ks - 1 + mstep] = (gd[mstep] - eta[:ks - 1] @ lower) / eta[ks - 1]
    return replace(state, y1_derivs=D)


def check_initial_derivatives(f: TargetSignal, g: TargetSignal, order: int):
    """Require ``g^(m)(0) = 0`` for ``m < order`` (zero initial Brunovsky state).

    ``f`` only sets the scale of the tolerance.
    """
    gd = g.derivs(order - 1, 0.0)
    fd = f.derivs(order - 1, 0.0)
    for m in range(order):
        if abs(gd[m]) > COMPAT_TOL * (1 + abs(fd[m]) + abs(fd[m] - gd[m])):
            raise CompatibilityViolation(
                f"derivative {m} of the target at t=0 disagrees with the free output "
                f"by {gd[m]:.3g}; exact tracking from x0 is impossible")


def tracking_synthesis(sys: LtiSystem, f: TargetSignal, grid: Grid,
                       check_compatibility: bool = True) -> TrackingSynthesis:
    """Run the full synthesis and keep the intermediate objects.

    With ``check_compatibility`` the target must match the free output in
    value and in its first ``n - k*`` derivatives at ``t = 0``; without it the
    control formula is still evaluated but will not track from ``x0``.
    """
    if sys.m != 1 or sys.p != 1:
        raise DimensionMismatch(f"needs m = p = 1, got m = {sys.m}, p = {sys.p}", "B")
    g = shift_target(sys, f, grid)
    form = brunovsky_transform(sys.A, sys.B[:, 0])
    eta = output_coefficients(sys.E, form)
    state = CascadeState(eta, critical_index(eta))
    _check_order(f, state.required_target_order)
    if check_compatibility:
        check_initial_derivatives(f, g, state.n - state.k_star + 1)
    state = derivative_lift(cascade_solve(state, g, grid), g, grid)
    D = state.y1_derivs
    n = state.n
    # companion last row: y_n' = -sum_j a_(n+1-j) y_j + u
    u = D[n] + form.alpha[::-1] @ D[:n]
    return TrackingSynthesis(SampledSignal(grid, u), form, state, g)


def synthesize_tracking_control(sys: LtiSystem, f: TargetSignal, grid: Grid,
                                check_compatibility: bool = True) -> SampledSignal:
    """Control ``u`` on ``grid`` with ``E x(t) = f(t)`` for the plant started at ``x0``."""
    return tracking_synthesis(sys, f, grid, check_compatibility).u


# --------------------------------------------------------------------------
# verification


def simulate(sys: LtiSystem, u: SampledSignal, grid: Grid | None = None,
             refine: int = 4, interp: str = "cubic") -> Trajectory:
    """RK4 reference solution, stepped on a grid ``refine`` times finer.

    Between nodes the control is interpolated (``"cubic"``: not-a-knot
    spline, fourth order; ``"linear"``: second order).
    """
    grid = u.grid if grid is None else grid
    if u.values.shape != (grid.N + 1, sys.m):
        raise DimensionMismatch(f"control must have shape {(grid.N + 1, sys.m)}", "u")
    refine = int(refine)
    if refine < 1:
        raise ValueError("refine must be >= 1")
    h = grid.dt / refine
    fine = np.linspace(0.0, grid.T, grid.N * refine + 1)
    mid = fine[:-1] + 0.5 * h
    if interp == "cubic":
        spline = CubicSpline(grid.nodes, u.values, axis=0)
        v_nodes, v_mid = spline(fine), spline(mid)
    elif interp == "linear":
        v_nodes = np.column_stack([np.interp(fine, grid.nodes, c) for c in u.values.T])
        v_mid = np.column_stack([np.interp(mid, grid.nodes, c) for c in u.values.T])
    else:
        raise ValueError(f"unknown interpolation {interp!r}")
    X = rk4_propagate(sys.A, sys.B, h, sys.x0, v_nodes, v_mid)
    return Trajectory.from_states(sys, grid, X[::refine])


def tracking_error(traj: Trajectory, f) -> dict:
    """Node-mean squared error and worst node deviation between ``E x`` and ``f``."""
    ref = target_samples(f, traj.grid, traj.outputs.shape[1])
    err = traj.outputs - ref
    sq = np.sum(err ** 2, axis=1)
    return {"mse": float(np.mean(sq)), "max_abs": float(np.sqrt(sq.max()))}
