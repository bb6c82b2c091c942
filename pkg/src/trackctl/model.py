"""Problem definition: plant, time grid, targets with exact derivatives, sampled signals.

Targets are evaluated in closed form. ``derivs(kmax, t)`` returns all
derivatives of order ``0..kmax`` at once so that products and shifted targets
can be composed without re-evaluating their parts.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.polynomial import Polynomial as _NpPoly
from scipy.interpolate import CubicSpline
from scipy.special import comb

from .errors import (
    CompatibilityViolation,
    DimensionMismatch,
    InsufficientRegularity,
    ValidationError,
)
from .linalg import as_matrix, mat_exp_batch

COMPAT_TOL = 1e-9


# --------------------------------------------------------------------------
# plant and grid


@dataclass(frozen=True)
class LtiSystem:
    """``x' = A x + B u``, ``x(0) = x0``, tracked output ``E x``."""

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    x0: np.ndarray = None

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}", "A")
        B = as_matrix(self.B, "B")
        if B.shape[0] != n and B.shape[1] == n and B.shape[0] == 1:
            B = B.T
        if B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got {B.shape}", "B")
        E = as_matrix(self.E, "E")
        if E.shape[1] != n:
            raise DimensionMismatch(f"E must have {n} columns, got {E.shape}", "E")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float).ravel()
        if x0.shape != (n,):
            raise DimensionMismatch(f"x0 must have length {n}, got {x0.size}", "x0")
        if not np.all(np.isfinite(x0)):
            raise DimensionMismatch("entries must be finite", "x0")
        if not 1 <= B.shape[1] <= n:
            raise DimensionMismatch(f"need 1 <= m <= n, got m={B.shape[1]}", "B")
        if not 1 <= E.shape[0] <= n:
            raise DimensionMismatch(f"need 1 <= p <= n, got p={E.shape[0]}", "E")
        for name, val in (("A", A), ("B", B), ("E", E), ("x0", x0)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.E.shape[0]

    def with_x0(self, x0) -> "LtiSystem":
        return LtiSystem(self.A, self.B, self.E, x0)


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``t_k = k T / N`` on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not (math.isfinite(self.T) and self.T > 0):
            raise ValidationError(f"horizon must be positive, got {self.T}", "T")
        if int(self.N) != self.N or self.N < 2:
            raise ValidationError(f"step count must be an integer >= 2, got {self.N}", "N")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "N", int(self.N))

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights: ``dt/2`` at the ends, ``dt`` inside."""
        w = np.full(self.N + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def refined(self, factor: int) -> "Grid":
        return Grid(self.T, self.N * int(factor))


@dataclass(frozen=True)
class SampledSignal:
    """Node values of a vector signal; ``values`` has shape ``(N+1, d)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.N + 1:
            raise DimensionMismatch(
                f"expected {self.grid.N + 1} samples, got {v.shape[0]}", "values")
        if not np.all(np.isfinite(v)):
            raise ValidationError("samples must be finite", "values")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Trajectory:
    grid: Grid
    states: np.ndarray
    outputs: np.ndarray

    @classmethod
    def from_states(cls, sys: LtiSystem, grid: Grid, states) -> "Trajectory":
        states = np.asarray(states, dtype=float)
        return cls(grid, states, states @ sys.E.T)


# --------------------------------------------------------------------------
# targets


class TargetSignal:
    """Scalar target ``f(t)`` with closed-form derivatives up to ``max_order``."""

    max_order: float = math.inf

    def derivs(self, kmax: int, t) -> np.ndarray:
        """Array of shape ``(kmax + 1,) + shape(t)`` holding ``f, f', ..., f^(kmax)``."""
        self._check_order(kmax)
        t = np.asarray(t, dtype=float)
        return self._derivs(int(kmax), t)

    def derivative(self, k: int, t):
        out = self.derivs(k, t)[k]
        return float(out) if out.ndim == 0 else out

    def __call__(self, t):
        return self.derivative(0, t)

    def _check_order(self, k):
        if k < 0:
            raise ValueError("derivative order must be nonnegative")
        if k > self.max_order:
            raise InsufficientRegularity(
                f"derivative of order {k} requested, target provides {self.max_order}")

    def _derivs(self, kmax, t):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class Polynomial(TargetSignal):
    """``c_0 + c_1 t + c_2 t^2 + ...`` (ascending coefficients)."""

    def __init__(self, coeffs: Sequence[float]):
        self.coeffs = [float(c) for c in coeffs] or [0.0]
        self._poly = _NpPoly(self.coeffs)

    def _derivs(self, kmax, t):
        out = np.empty((kmax + 1,) + t.shape)
        p = self._poly
        for k in range(kmax + 1):
            out[k] = p(t)
            p = p.deriv()
        return out

    def to_dict(self):
        return {"kind": "polynomial", "coeffs": list(self.coeffs)}


class Sinusoid(TargetSignal):
    """``amp * sin(freq * t + phase)``."""

    def __init__(self, amp=1.0, freq=1.0, phase=0.0):
        self.amp, self.freq, self.phase = float(amp), float(freq), float(phase)

    def _derivs(self, kmax, t):
        k = np.arange(kmax + 1).reshape((-1,) + (1,) * t.ndim)
        return self.amp * self.freq ** k * np.sin(self.freq * t + self.phase + k * (np.pi / 2))

    def to_dict(self):
        return {"kind": "sinusoid", "amp": self.amp, "freq": self.freq, "phase": self.phase}


class Exponential(TargetSignal):
    """``amp * exp(rate * t)``."""

    def __init__(self, amp=1.0, rate=1.0):
        self.amp, self.rate = float(amp), float(rate)

    def _derivs(self, kmax, t):
        k = np.arange(kmax + 1).reshape((-1,) + (1,) * t.ndim)
        return self.amp * self.rate ** k * np.exp(self.rate * t)

    def to_dict(self):
        return {"kind": "exponential", "amp": self.amp, "rate": self.rate}


class Sum(TargetSignal):
    """Weighted sum ``sum_i w_i f_i``."""

    def __init__(self, terms: Sequence[tuple[float, TargetSignal]]):
        self.terms = [(float(w), f) for w, f in terms]
        self.max_order = min((f.max_order for _, f in self.terms), default=math.inf)

    def _derivs(self, kmax, t):
        out = np.zeros((kmax + 1,) + t.shape)
        for w, f in self.terms:
            out += w * f._derivs(kmax, t)
        return out

    def to_dict(self):
        return {"kind": "sum",
                "terms": [{"weight": w, "target": f.to_dict()} for w, f in self.terms]}


class Product(TargetSignal):
    """Pointwise product; derivatives by the Leibniz rule."""

    def __init__(self, factors: Sequence[TargetSignal]):
        if not factors:
            raise ValidationError("product needs at least one factor", "factors")
        self.factors = list(factors)
        self.max_order = min(f.max_order for f in self.factors)

    def _derivs(self, kmax, t):
        out = self.factors[0]._derivs(kmax, t)
        binom = comb(np.arange(kmax + 1)[:, None], np.arange(kmax + 1)[None, :], exact=False)
        for f in self.factors[1:]:
            g = f._derivs(kmax, t)
            new = np.zeros_like(out)
            for k in range(kmax + 1):
                for i in range(k + 1):
                    new[k] += binom[k, i] * out[i] * g[k - i]
            out = new
        return out

    def to_dict(self):
        return {"kind": "product", "factors": [f.to_dict() for f in self.factors]}


class FloorShift(TargetSignal):
    """``floor(t + offset)``, right-continuous at the jumps; no derivatives."""

    max_order = 0

    def __init__(self, offset=1.0):
        self.offset = float(offset)

    def _derivs(self, kmax, t):
        x = t + self.offset
        xr = np.round(x)
        # grid nodes like 3*0.01*100 land a few ulps below an integer
        x = np.where(np.abs(x - xr) <= 1e-9 * np.maximum(1.0, np.abs(x)), xr, x)
        return np.floor(x)[None, ...]

    def to_dict(self):
        return {"kind": "floor", "offset": self.offset}


class Tabulated(TargetSignal):
    """Cubic-spline interpolant of samples; derivatives up to order 2 only.

    Spline derivatives are an approximation of whatever produced the samples,
    so creating one emits a ``UserWarning`` unless ``quiet`` is set.
    """

    max_order = 2

    def __init__(self, times, values, quiet=False):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.ndim != 1 or self.times.shape != self.values.shape or self.times.size < 2:
            raise ValidationError("need matching 1-D 't' and 'values' with >= 2 samples", "target")
        if not quiet:
            warnings.warn("tabulated target: derivatives come from a cubic spline", stacklevel=2)
        self._spline = CubicSpline(self.times, self.values)

    def _derivs(self, kmax, t):
        return np.stack([self._spline(t, nu=k) for k in range(kmax + 1)])

    def to_dict(self):
        return {"kind": "tabulated", "t": self.times.tolist(), "values": self.values.tolist()}


class Limited(TargetSignal):
    """Wraps a target and caps the derivative order it will serve."""

    def __init__(self, inner: TargetSignal, max_order: int):
        self.inner = inner
        self.max_order = min(int(max_order), inner.max_order)

    def _derivs(self, kmax, t):
        return self.inner._derivs(kmax, t)

    def to_dict(self):
        d = self.inner.to_dict()
        d["max_order"] = self.max_order
        return d


class Zero(Polynomial):
    def __init__(self):
        super().__init__([0.0])


class ShiftedTarget(TargetSignal):
    """``g(t) = f(t) - E exp(A t) x0``, the target seen from zero initial data."""

    def __init__(self, sys: LtiSystem, f: TargetSignal):
        if sys.p != 1:
            raise DimensionMismatch(f"scalar target needs p = 1, got p = {sys.p}", "E")
        self.sys, self.f = sys, f
        self.max_order = f.max_order

    def _derivs(self, kmax, t):
        out = self.f._derivs(kmax, t)
        if not np.any(self.sys.x0):
            return out
        return out - free_output_derivs(self.sys, kmax, t)[..., 0]

    def to_dict(self):
        return {"kind": "shifted", "target": self.f.to_dict()}


def eval_target(f: TargetSignal, k: int, t):
    """k-th derivative of ``f`` at ``t`` (scalar or array)."""
    return f.derivative(k, t)


def target_samples(f, grid: Grid, p: int = 1) -> np.ndarray:
    """Node values of a scalar target or a list of ``p`` scalar targets, shape ``(N+1, p)``."""
    fs = list(f) if isinstance(f, (list, tuple)) else [f]
    if len(fs) != p:
        raise DimensionMismatch(f"need {p} target components, got {len(fs)}", "target")
    t = grid.nodes
    return np.stack([np.broadcast_to(g(t), t.shape) for g in fs], axis=1)


# --------------------------------------------------------------------------
# free response and shift


def free_output_derivs(sys: LtiSystem, kmax: int, t) -> np.ndarray:
    """``d^k/dt^k [E exp(At) x0] = E A^k exp(At) x0`` for ``k = 0..kmax``.

    Returns shape ``(kmax + 1,) + shape(t) + (p,)``.
    """
    t = np.asarray(t, dtype=float)
    flat = t.ravel()
    x = np.einsum("kij,j->ki", mat_exp_batch(sys.A, flat), sys.x0) if flat.size else np.zeros((0, sys.n))
    out = np.empty((kmax + 1, flat.size, sys.p))
    for k in range(kmax + 1):
        out[k] = x @ sys.E.T
        x = x @ sys.A.T
    return out.reshape((kmax + 1,) + t.shape + (sys.p,))


def free_response(sys: LtiSystem, grid: Grid):
    """Uncontrolled trajectory from ``x0`` and its output-derivative evaluator.

    Returns:
        ``(trajectory, deriv)`` where ``deriv(k, t)`` gives ``E A^k exp(At) x0``.
    """
    states = np.einsum("kij,j->ki", mat_exp_batch(sys.A, grid.nodes), sys.x0)

    def deriv(k, t):
        return free_output_derivs(sys, k, t)[k]

    return Trajectory.from_states(sys, grid, states), deriv


def shift_target(sys: LtiSystem, f: TargetSignal, grid: Grid | None = None) -> ShiftedTarget:
    """Reduce tracking of ``f`` from ``x0`` to tracking of ``g`` from zero.

    Raises:
        CompatibilityViolation: if ``f(0) != E x0``.
    """
    f0 = float(f(0.0))
    y0 = float((sys.E @ sys.x0)[0]) if sys.p == 1 else None
    if y0 is None:
        raise DimensionMismatch(f"scalar target needs p = 1, got p = {sys.p}", "E")
    if abs(f0 - y0) > COMPAT_TOL * (1 + abs(f0)):
        raise CompatibilityViolation(f"f(0) = {f0!r} but E x0 = {y0!r}")
    return ShiftedTarget(sys, f)


# --------------------------------------------------------------------------
# JSON target schema

_KINDS = ("polynomial", "sinusoid", "exponential", "sum", "product", "floor", "tabulated")


def _num(d, key, path, default=None):
    if key not in d:
        if default is not None:
            return default
        raise ValidationError("missing required field", f"{path}.{key}")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ValidationError(f"expected a finite number, got {v!r}", f"{path}.{key}")
    return float(v)


def _numlist(d, key, path, min_len=1):
    if key not in d:
        raise ValidationError("missing required field", f"{path}.{key}")
    v = d[key]
    if not isinstance(v, list) or len(v) < min_len:
        raise ValidationError(f"expected a list of >= {min_len} numbers", f"{path}.{key}")
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ValidationError(f"expected a finite number, got {x!r}", f"{path}.{key}[{i}]")
    return [float(x) for x in v]


def target_from_dict(d, path="target") -> TargetSignal:
    """Build a target from its JSON description; errors name the field path."""
    if not isinstance(d, dict):
        raise ValidationError("expected an object", path)
    kind = d.get("kind")
    if kind not in _KINDS:
        raise ValidationError(f"unknown kind {kind!r}, expected one of {_KINDS}", f"{path}.kind")
    if kind == "polynomial":
        f = Polynomial(_numlist(d, "coeffs", path))
    elif kind == "sinusoid":
        f = Sinusoid(_num(d, "amp", path, 1.0), _num(d, "freq", path), _num(d, "phase", path, 0.0))
    elif kind == "exponential":
        f = Exponential(_num(d, "amp", path, 1.0), _num(d, "rate", path))
    elif kind == "floor":
        f = FloorShift(_num(d, "offset", path, 0.0))
    elif kind == "tabulated":
        ts, vs = _numlist(d, "t", path, 2), _numlist(d, "values", path, 2)
        if len(ts) != len(vs):
            raise ValidationError("length differs from 't'", f"{path}.values")
        if np.any(np.diff(ts) <= 0):
            raise ValidationError("sample times must increase", f"{path}.t")
        f = Tabulated(ts, vs, quiet=True)
    elif kind == "sum":
        terms = d.get("terms")
        if not isinstance(terms, list) or not terms:
            raise ValidationError("expected a nonempty list", f"{path}.terms")
        parsed = []
        for i, term in enumerate(terms):
            tp = f"{path}.terms[{i}]"
            if not isinstance(term, dict):
                raise ValidationError("expected an object", tp)
            parsed.append((_num(term, "weight", tp, 1.0), target_from_dict(term.get("target"), f"{tp}.target")))
        f = Sum(parsed)
    else:
        factors = d.get("factors")
        if not isinstance(factors, list) or not factors:
            raise ValidationError("expected a nonempty list", f"{path}.factors")
        f = Product([target_from_dict(g, f"{path}.factors[{i}]") for i, g in enumerate(factors)])
    if "max_order" in d:
        mo = d["max_order"]
        if isinstance(mo, bool) or not isinstance(mo, int) or mo < 0:
            raise ValidationError(f"expected a nonnegative integer, got {mo!r}", f"{path}.max_order")
        f = Limited(f, mo)
    return f
