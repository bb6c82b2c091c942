"""Penalized HUM: minimal-energy control with a quadratic tracking penalty.

Discrete objective on a grid with trapezoid weights ``w``::

    J(u) = beta*c/2 <u, u>_w + alpha/2 <L u + y_free - f, L u + y_free - f>_w

``L`` is the Crank-Nicolson control-to-output map and ``c`` an extra weight on
the control norm (the spatial step for distributed heat control). The
minimizer solves ``(beta c I + alpha L^# L) u = alpha L^# (f - y_free)``;
the operator is self-adjoint and positive in ``<.,.>_w`` so plain conjugate
gradients in that inner product apply.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import NoConvergence, ValidationError
from .model import Grid, LtiSystem, SampledSignal, TargetSignal, Trajectory, free_response, target_samples
from .operators import DiscreteOperator
from .pde import ChainSpec, heat_distributed_system


@dataclass(frozen=True)
class HumProblem:
    sys: LtiSystem
    f: TargetSignal
    grid: Grid
    alpha: float
    beta: float = 1.0
    cg_tol: float = 1e-10
    cg_max_iters: int = 5000
    control_weight: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "cg_tol", "control_weight"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValidationError(f"must be a positive number, got {v!r}", name)
        if int(self.cg_max_iters) != self.cg_max_iters or self.cg_max_iters < 1:
            raise ValidationError(f"must be a positive integer, got {self.cg_max_iters!r}", "cg_max_iters")


@dataclass(frozen=True)
class HumSolution:
    u: SampledSignal
    traj: Trajectory
    mse: float
    max_abs: float
    objective: float
    cg_iters: int
    residual: float  # relative, in the weighted norm
    converged: bool

    @property
    def control_norm(self) -> float:
        """``||u||_w`` (trapezoid L2 norm in time)."""
        w = self.u.grid.weights
        return float(np.sqrt(w @ np.sum(self.u.values ** 2, axis=1)))


def conjugate_gradient(apply, b, inner, tol, max_iters, x0=None):
    """CG for ``apply(x) = b`` with ``apply`` self-adjoint positive in ``inner``.

    Stops when ``||r|| <= tol ||b||``. Returns ``(x, iters, rel_residual, converged)``.
    """
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply(x) if x0 is not None else b.copy()
    bnorm = np.sqrt(inner(b, b))
    if bnorm == 0:
        return np.zeros_like(b), 0, 0.0, True
    d = r.copy()
    rr = inner(r, r)
    it = 0
    while np.sqrt(rr) > tol * bnorm and it < max_iters:
        Ad = apply(d)
        step = rr / inner(d, Ad)
        x += step * d
        r -= step * Ad
        rr_new = inner(r, r)
        d = r + (rr_new / rr) * d
        rr = rr_new
        it += 1
    rel = float(np.sqrt(rr) / bnorm)
    return x, it, rel, rel <= tol


class _Normal:
    """The penalized normal equations of one problem, matrix-free."""

    def __init__(self, prob: HumProblem):
        self.prob = prob
        self.op = DiscreteOperator(prob.sys, prob.grid)
        free, _ = free_response(prob.sys, prob.grid)
        self.free = free
        self.target = target_samples(prob.f, prob.grid, prob.sys.p)
        self.ref = self.target - free.outputs
        self.shift = prob.beta * prob.control_weight

    def apply(self, u):
        return self.shift * u + self.prob.alpha * self.op.transpose(self.op.forward(u))

    def rhs(self):
        return self.prob.alpha * self.op.transpose(self.ref)

    def objective(self, u) -> float:
        e = self.op.forward(u) - self.ref
        return 0.5 * self.shift * self.op.inner(u, u) + 0.5 * self.prob.alpha * self.op.inner(e, e)


def _package(nrm: _Normal, u, iters, residual, converged) -> HumSolution:
    prob = nrm.prob
    X = nrm.op.states(u) + nrm.free.states
    traj = Trajectory.from_states(prob.sys, prob.grid, X)
    err = traj.outputs - nrm.target
    sq = np.sum(err ** 2, axis=1)
    return HumSolution(SampledSignal(prob.grid, u), traj, float(np.mean(sq)), float(np.sqrt(sq.max())),
                       nrm.objective(u), iters, residual, converged)


def hum_objective(prob: HumProblem, u) -> float:
    """Discrete ``J(u)``; used to check optimality against perturbations."""
    nrm = _Normal(prob)
    u = u.values if isinstance(u, SampledSignal) else np.asarray(u, dtype=float)
    return nrm.objective(u.reshape(prob.grid.N + 1, prob.sys.m))


def normal_equations(prob: HumProblem):
    """``(apply, rhs, inner)`` of the penalized normal equations."""
    nrm = _Normal(prob)
    return nrm.apply, nrm.rhs(), nrm.op.inner


def hum_solve(prob: HumProblem, raise_on_failure: bool = True) -> HumSolution:
    """Minimize the penalized objective by CG.

    Raises:
        NoConvergence: if ``cg_max_iters`` is reached; the partial solution is
            attached as ``exc.solution``. Pass ``raise_on_failure=False`` to get
            it back with ``converged=False`` instead.
    """
    nrm = _Normal(prob)
    u, iters, res, ok = conjugate_gradient(nrm.apply, nrm.rhs(), nrm.op.inner, prob.cg_tol, prob.cg_max_iters)
    sol = _package(nrm, u, iters, res, ok)
    if not ok and raise_on_failure:
        raise NoConvergence(f"CG stopped after {iters} iterations at relative residual {res:.3g}", sol)
    return sol


def hum_solve_distributed(spec: ChainSpec, f: TargetSignal, grid: Grid, alpha: float, beta: float,
                          raise_on_failure: bool = True, **solver) -> HumSolution:
    """Heat chain controlled at every interior node; control norm carries the factor ``h``."""
    prob = HumProblem(heat_distributed_system(spec), f, grid, alpha, beta, control_weight=spec.h, **solver)
    return hum_solve(prob, raise_on_failure)


def _zero_solution(prob: HumProblem) -> HumSolution:
    nrm = _Normal(prob)
    u = np.zeros((prob.grid.N + 1, prob.sys.m))
    return _package(nrm, u, 0, 0.0, True)


def thread_count() -> int:
    env = os.environ.get("TRACKCTL_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"must be a positive integer, got {env!r}", "TRACKCTL_THREADS") from None
        if n < 1:
            raise ValidationError(f"must be a positive integer, got {env!r}", "TRACKCTL_THREADS")
        return n
    return os.cpu_count() or 1


def alpha_sweep(prob: HumProblem, alphas, max_workers: int | None = None) -> list[dict]:
    """Solve for each penalty weight; ``alpha = 0`` gives the zero control.

    Rows hold ``alpha, mse, control_norm, cg_iters, converged`` in input order.
    """
    alphas = [float(a) for a in alphas]
    for a in alphas:
        if not (np.isfinite(a) and a >= 0):
            raise ValidationError(f"alphas must be finite and non-negative, got {a!r}", "alphas")

    def one(a):
        if a == 0:
            sol = _zero_solution(prob)
        else:
            sol = hum_solve(replace(prob, alpha=a), raise_on_failure=False)
        return {"alpha": a, "mse": sol.mse, "control_norm": sol.control_norm,
                "cg_iters": sol.cg_iters, "converged": sol.converged}

    workers = max_workers or thread_count()
    with ThreadPoolExecutor(max_workers=min(workers, max(len(alphas), 1))) as pool:
        return list(pool.map(one, alphas))
