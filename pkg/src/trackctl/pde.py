"""Semi-discrete heat and wave chains with boundary or distributed control.

Nodes ``x_j = j h``, ``h = L / (M+1)``; the control sits at ``x_0`` and the
tracked quantity is the one-sided flux ``(v_(M+1) - v_M) / h`` with
``v_(M+1) = 0``.

The explicit tracking controls come from the backward recursion obtained by
imposing ``v_M = -h f`` and solving each chain equation for the left
neighbour::

    wave:  w_(j-1) = h^2 w_j'' + 2 w_j - w_(j+1)
    heat:  z_(j-1) = h^2 z_j'  + 2 z_j - z_(j+1)

Every level is kept as an exact table ``{(derivative order, power of h): integer}``
and only evaluated at the end.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from .errors import CompatibilityViolation, InsufficientRegularity, ValidationError
from .model import COMPAT_TOL, Grid, LtiSystem, SampledSignal, TargetSignal


@dataclass(frozen=True)
class ChainSpec:
    M: int
    L: float = 1.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ValidationError(f"need an integer M >= 1, got {self.M}", "M")
        if not self.L > 0:
            raise ValidationError(f"need L > 0, got {self.L}", "L")

    @property
    def h(self) -> float:
        return self.L / (self.M + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.h * np.arange(self.M + 2)


def _laplacian(spec: ChainSpec) -> np.ndarray:
    M, h = spec.M, spec.h
    return (np.eye(M, k=-1) - 2 * np.eye(M) + np.eye(M, k=1)) / h ** 2


def _flux_row(spec: ChainSpec) -> np.ndarray:
    E = np.zeros((1, spec.M))
    E[0, -1] = -1.0 / spec.h
    return E


def heat_boundary_system(spec: ChainSpec) -> LtiSystem:
    """``z' = (z_(j-1) - 2 z_j + z_(j+1)) / h^2`` with ``z_0 = u``."""
    B = np.zeros((spec.M, 1))
    B[0, 0] = 1.0 / spec.h ** 2
    return LtiSystem(_laplacian(spec), B, _flux_row(spec))


def heat_distributed_system(spec: ChainSpec) -> LtiSystem:
    """Heat chain with Dirichlet ends and a control on every interior node."""
    return LtiSystem(_laplacian(spec), np.eye(spec.M), _flux_row(spec))


def wave_boundary_system(spec: ChainSpec) -> LtiSystem:
    """First-order form of the wave chain; state ``(w, w')``, control ``w_0 = u``."""
    M = spec.M
    A = np.zeros((2 * M, 2 * M))
    A[:M, M:] = np.eye(M)
    A[M:, :M] = _laplacian(spec)
    B = np.zeros((2 * M, 1))
    B[M, 0] = 1.0 / spec.h ** 2
    E = np.zeros((1, 2 * M))
    E[0, :M] = _flux_row(spec)[0]
    return LtiSystem(A, B, E)


def wave_energy(spec: ChainSpec, states) -> np.ndarray:
    """``1/2 |w'|^2 + 1/2 |D_h w|^2`` (grid sums, boundary values zero)."""
    M, h = spec.M, spec.h
    X = np.atleast_2d(states)
    w, v = X[:, :M], X[:, M:]
    padded = np.pad(w, ((0, 0), (1, 1)))
    grad = np.diff(padded, axis=1) / h
    return 0.5 * np.sum(v ** 2, axis=1) + 0.5 * np.sum(grad ** 2, axis=1)


# --------------------------------------------------------------------------
# backward cascade


def cascade_tables(M: int, step: int) -> list[dict]:
    """Coefficient tables for levels ``j = 0..M+1`` (index ``j``).

    ``step`` is the time-derivative order of the chain equation: 2 for the
    wave chain, 1 for the heat chain.
    """
    levels = [dict() for _ in range(M + 2)]
    levels[M] = {(0, 1): -1}
    for j in range(M, 0, -1):
        acc = defaultdict(int)
        for (d, q), c in levels[j].items():
            acc[(d + step, q + 2)] += c
            acc[(d, q)] += 2 * c
        for key, c in levels[j + 1].items():
            acc[key] -= c
        levels[j - 1] = {key: c for key, c in sorted(acc.items()) if c}
    return levels


def table_order(table: dict) -> int:
    return max((d for d, _ in table), default=0)


def evaluate_table(table: dict, f_derivs: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros(f_derivs.shape[1:])
    for (d, q), c in table.items():
        out += c * h ** q * f_derivs[d]
    return out


@dataclass(frozen=True)
class CascadeControl:
    u: SampledSignal
    states: np.ndarray  # (N+1, M): chain values v_1..v_M
    max_derivative_used: int
    tables: list


def _cascade(spec: ChainSpec, f: TargetSignal, grid: Grid, step: int) -> CascadeControl:
    M = spec.M
    tables = cascade_tables(M, step)
    order = table_order(tables[0])
    if f.max_order < order:
        raise InsufficientRegularity(f"chain of length {M} needs {order} derivatives of the target, "
                                     f"it declares {f.max_order}")
    # zero initial chain data: every derivative that enters v_j(0), v_j'(0) must vanish
    d0 = f.derivs(order - 1, 0.0)
    bad = np.nonzero(np.abs(d0) > COMPAT_TOL)[0]
    if bad.size:
        raise CompatibilityViolation(f"target derivative of order {bad[0]} is {d0[bad[0]]:.3g} at t=0; "
                                     f"orders 0..{order - 1} must vanish")
    fd = f.derivs(order, grid.nodes)
    values = np.stack([evaluate_table(tables[j], fd, spec.h) for j in range(M + 1)], axis=1)
    return CascadeControl(SampledSignal(grid, values[:, 0]), values[:, 1:], order, tables)


def wave_cascade_control(spec: ChainSpec, f: TargetSignal, grid: Grid) -> CascadeControl:
    """Boundary control of the wave chain with flux equal to ``f``; uses ``f^(2M)``."""
    return _cascade(spec, f, grid, 2)


def heat_cascade_control(spec: ChainSpec, f: TargetSignal, grid: Grid) -> CascadeControl:
    """Boundary control of the heat chain with flux equal to ``f``; uses ``f^(M)``."""
    return _cascade(spec, f, grid, 1)


def cascade_residual(tables: list, step: int) -> list[dict]:
    """Symbolic residual of each interior chain equation; all entries zero when consistent.

    Level ``j`` residual: ``v_j^(step) - (v_(j-1) - 2 v_j + v_(j+1)) / h^2``,
    expressed in the same table form after multiplying by ``h^2``.
    """
    out = []
    for j in range(1, len(tables) - 1):
        acc = defaultdict(int)
        for (d, q), c in tables[j].items():
            acc[(d + step, q + 2)] += c
            acc[(d, q)] += 2 * c
        for side in (tables[j - 1], tables[j + 1]):
            for key, c in side.items():
                acc[key] -= c
        out.append({k: c for k, c in acc.items() if c})
    return out


def cascade_growth_report(f: TargetSignal, Ms, grid: Grid, kind: str = "wave", L: float = 1.0) -> list:
    """``(M, max|u|)`` for each chain length; a report, nothing is asserted."""
    build = wave_cascade_control if kind == "wave" else heat_cascade_control
    return [(M, float(np.max(np.abs(build(ChainSpec(M, L), f, grid).u.values)))) for M in Ms]
