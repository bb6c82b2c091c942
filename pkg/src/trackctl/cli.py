"""``trackctl`` command line.

Every subcommand reads one JSON problem file, writes its results into the
output directory and prints a one-line summary. Exit status: 0 success,
2 invalid input, 3 solver did not converge, 4 target rejected (regularity,
compatibility, controllability).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from .brunovsky import brunovsky_transform
from .errors import NoConvergence, TrackingError, ValidationError
from .hum import HumProblem, alpha_sweep, hum_solve, hum_solve_distributed
from .model import Grid, LtiSystem, target_from_dict, target_samples
from .operators import moment_control, observability_spectrum, unique_continuation_test
from .pde import (
    ChainSpec,
    heat_boundary_system,
    heat_cascade_control,
    wave_boundary_system,
    wave_cascade_control,
)
from .tracker import critical_index, output_coefficients, simulate, tracking_error, tracking_synthesis

SUBCOMMANDS = ("brunovsky", "track", "hum", "pde-heat", "pde-wave", "gramian", "moment", "sweep")


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    input: str
    outdir: str
    T: float | None = None
    N: int | None = None
    alpha: float | None = None
    beta: float | None = None
    cg_tol: float | None = None
    emit_plot_script: bool = True


# --------------------------------------------------------------------------
# JSON field readers


def _is_num(x) -> bool:
    return not isinstance(x, bool) and isinstance(x, (int, float)) and math.isfinite(x)


def _number(doc, key, default=None, positive=False):
    if key not in doc:
        if default is None:
            raise ValidationError("missing required field", key)
        return default
    v = doc[key]
    if not _is_num(v):
        raise ValidationError(f"expected a finite number, got {v!r}", key)
    if positive and v <= 0:
        raise ValidationError(f"must be positive, got {v!r}", key)
    return float(v)


def _integer(doc, key, default=None, minimum=1):
    if key not in doc:
        if default is None:
            raise ValidationError("missing required field", key)
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ValidationError(f"expected an integer >= {minimum}, got {v!r}", key)
    return v


def _vector(doc, key, required=True):
    if key not in doc:
        if required:
            raise ValidationError("missing required field", key)
        return None
    v = doc[key]
    if not isinstance(v, list) or not v:
        raise ValidationError("expected a nonempty list of numbers", key)
    for i, x in enumerate(v):
        if not _is_num(x):
            raise ValidationError(f"expected a finite number, got {x!r}", f"{key}[{i}]")
    return np.array(v, dtype=float)


def _matrix(doc, key, flat="row", required=True):
    """Nested list of numbers; a flat list is read as one row or one column."""
    if key not in doc:
        if required:
            raise ValidationError("missing required field", key)
        return None
    v = doc[key]
    if not isinstance(v, list) or not v:
        raise ValidationError("expected a nonempty nested list", key)
    if all(not isinstance(r, list) for r in v):
        vec = _vector(doc, key)
        return vec[None, :] if flat == "row" else vec[:, None]
    width = None
    for i, row in enumerate(v):
        if not isinstance(row, list) or not row:
            raise ValidationError("expected a nonempty list", f"{key}[{i}]")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ValidationError(f"row has {len(row)} entries, expected {width}", f"{key}[{i}]")
        for j, x in enumerate(row):
            if not _is_num(x):
                raise ValidationError(f"expected a finite number, got {x!r}", f"{key}[{i}][{j}]")
    return np.array(v, dtype=float)


def _target(doc, key="target"):
    if key not in doc:
        raise ValidationError("missing required field", key)
    return target_from_dict(doc[key], key)


def _plant(doc) -> LtiSystem:
    return LtiSystem(_matrix(doc, "A"), _matrix(doc, "B", flat="col"), _matrix(doc, "E"),
                     _vector(doc, "x0", required=False))


def _grid(doc, cfg: RunConfig) -> Grid:
    T = cfg.T if cfg.T is not None else _number(doc, "T", positive=True)
    N = cfg.N if cfg.N is not None else _integer(doc, "N", minimum=2)
    return Grid(T, N)


def _hum_problem(doc, cfg: RunConfig) -> HumProblem:
    sysm = _plant(doc)
    grid = _grid(doc, cfg)
    alpha = cfg.alpha if cfg.alpha is not None else _number(doc, "alpha", positive=True)
    beta = cfg.beta if cfg.beta is not None else _number(doc, "beta", 1.0, positive=True)
    tol = cfg.cg_tol if cfg.cg_tol is not None else _number(doc, "cg_tol", 1e-10, positive=True)
    iters = _integer(doc, "cg_max_iters", 5000)
    return HumProblem(sysm, _target(doc), grid, alpha, beta, tol, iters)


def _chain(doc) -> ChainSpec:
    return ChainSpec(_integer(doc, "M"), _number(doc, "L", 1.0, positive=True))


# --------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    return "%.17g" % x


def _names(prefix, d):
    return [prefix] if d == 1 else [f"{prefix}{i + 1}" for i in range(d)]


def write_csv(path, t, u, y, f):
    """Columns ``t``, controls, outputs, targets; 17 significant digits, LF endings."""
    u, y, f = (np.asarray(a, dtype=float).reshape(len(t), -1) for a in (u, y, f))
    header = ["t"] + _names("u", u.shape[1]) + _names("Ex", y.shape[1]) + _names("f", f.shape[1])
    data = np.column_stack([t, u, y, f])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in data:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def read_csv(path):
    """Inverse of ``write_csv``: ``(header, values)``."""
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
        rows = [[float(x) for x in line.split(",")] for line in fh.read().splitlines() if line]
    return header, np.array(rows)


def _write_table(path, header, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(x) if isinstance(x, (bool, int, str)) else _fmt(x) for x in row) + "\n")


def emit_plot_script(path, csv_name, m, p, panes=2):
    """Gnuplot script: solid output, dashed target and, with two panes, the control below."""
    ycol, fcol = 2 + m, 2 + m + p
    out = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,%d" % (700 if panes == 2 else 400),
        "set output '%s'" % (os.path.splitext(csv_name)[0] + ".png"),
        "set xlabel 't'",
    ]
    if panes == 2:
        out.append("set multiplot layout 2,1")
    curves = []
    for i in range(p):
        curves.append(f"'{csv_name}' using 1:{ycol + i} with lines lw 2 lc rgb 'blue'")
        curves.append(f"'{csv_name}' using 1:{fcol + i} with lines lw 2 dt 2 lc rgb 'red'")
    out.append("plot " + ", \\\n     ".join(curves))
    if panes == 2:
        ctrl = [f"'{csv_name}' using 1:{2 + j} with lines lw 1 lc rgb 'black'" for j in range(m)]
        out.append("plot " + ", \\\n     ".join(ctrl))
        out.append("unset multiplot")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def _emit(cfg, grid, u, y, f, panes=2):
    t = grid.nodes
    u = np.asarray(u).reshape(len(t), -1)
    y = np.asarray(y).reshape(len(t), -1)
    write_csv(os.path.join(cfg.outdir, "trajectory.csv"), t, u, y, f)
    if cfg.emit_plot_script:
        emit_plot_script(os.path.join(cfg.outdir, "trajectory.gp"), "trajectory.csv",
                         u.shape[1], y.shape[1], panes)


def _metrics(mse, maxerr, iters):
    print(f"MSE={mse!r} MAXERR={maxerr!r} ITERS={iters}")


# --------------------------------------------------------------------------
# subcommands


def cmd_brunovsky(doc, cfg):
    A = _matrix(doc, "A")
    B = _matrix(doc, "B", flat="col")
    form = brunovsky_transform(A, B)
    result = {"alpha": form.alpha.tolist(), "P": form.P.tolist(), "A_tilde": form.A_tilde.tolist(),
              "similarity_residual": form.similarity_residual}
    line = f"RESIDUAL={form.similarity_residual!r}"
    if "E" in doc:
        eta = output_coefficients(_matrix(doc, "E"), form)
        ks = critical_index(eta)
        result.update(eta=eta.tolist(), k_star=ks, target_order=form.n - ks + 1)
        line += f" KSTAR={ks}"
    with open(os.path.join(cfg.outdir, "brunovsky.json"), "w", newline="\n") as fh:
        json.dump(result, fh, indent=2)
        fh.write("\n")
    print(line)
    return 0


def cmd_track(doc, cfg):
    sysm = _plant(doc)
    grid = _grid(doc, cfg)
    f = _target(doc)
    refine = _integer(doc, "refine", 4)
    syn = tracking_synthesis(sysm, f, grid)
    traj = simulate(sysm, syn.u, refine=refine)
    err = tracking_error(traj, f)
    _emit(cfg, grid, syn.u.values, traj.outputs, target_samples(f, grid))
    _metrics(err["mse"], err["max_abs"], 0)
    return 0


def _finish_hum(cfg, prob_f, sol, panes):
    grid = sol.u.grid
    _emit(cfg, grid, sol.u.values, sol.traj.outputs, target_samples(prob_f, grid, sol.traj.outputs.shape[1]), panes)
    _metrics(sol.mse, sol.max_abs, sol.cg_iters)


def cmd_hum(doc, cfg):
    prob = _hum_problem(doc, cfg)
    try:
        sol = hum_solve(prob)
    except NoConvergence as exc:
        _finish_hum(cfg, prob.f, exc.solution, 2)
        raise
    _finish_hum(cfg, prob.f, sol, 2)
    return 0


def cmd_pde_heat(doc, cfg):
    spec = _chain(doc)
    grid = _grid(doc, cfg)
    f = _target(doc)
    mode = doc.get("control", "boundary")
    if mode == "distributed":
        alpha = cfg.alpha if cfg.alpha is not None else _number(doc, "alpha", positive=True)
        beta = cfg.beta if cfg.beta is not None else _number(doc, "beta", 1.0, positive=True)
        tol = cfg.cg_tol if cfg.cg_tol is not None else _number(doc, "cg_tol", 1e-10, positive=True)
        try:
            sol = hum_solve_distributed(spec, f, grid, alpha, beta, cg_tol=tol,
                                        cg_max_iters=_integer(doc, "cg_max_iters", 5000))
        except NoConvergence as exc:
            _finish_hum(cfg, f, exc.solution, 1)
            raise
        _finish_hum(cfg, f, sol, 1)
        return 0
    if mode != "boundary":
        raise ValidationError(f"expected 'boundary' or 'distributed', got {mode!r}", "control")
    casc = heat_cascade_control(spec, f, grid)
    return _closed_loop(cfg, heat_boundary_system(spec), casc, f, grid, doc)


def cmd_pde_wave(doc, cfg):
    spec = _chain(doc)
    grid = _grid(doc, cfg)
    f = _target(doc)
    casc = wave_cascade_control(spec, f, grid)
    return _closed_loop(cfg, wave_boundary_system(spec), casc, f, grid, doc)


def _closed_loop(cfg, sysm, casc, f, grid, doc):
    traj = simulate(sysm, casc.u, refine=_integer(doc, "refine", 1))
    err = tracking_error(traj, f)
    _emit(cfg, grid, casc.u.values, traj.outputs, target_samples(f, grid))
    print(f"DERIVATIVES={casc.max_derivative_used}")
    _metrics(err["mse"], err["max_abs"], 0)
    return 0


def cmd_gramian(doc, cfg):
    sysm = _plant(doc)
    T = cfg.T if cfg.T is not None else _number(doc, "T", positive=True)
    if cfg.N is not None:
        Ns = [cfg.N]
    elif "Ns" in doc:
        Ns = [int(v) for v in _vector(doc, "Ns")]
        if any(float(a) != b for a, b in zip(doc["Ns"], Ns)):
            raise ValidationError("grid sizes must be integers", "Ns")
    else:
        Ns = [_integer(doc, "N", minimum=2)]
    grids = [Grid(T, N) for N in Ns]
    rep = observability_spectrum(sysm, grids)
    _write_table(os.path.join(cfg.outdir, "spectrum.csv"), ["N", "dt", "sigma_min", "exponent"], rep.decay)
    uc = unique_continuation_test(sysm, grids[-1])
    for N, _, s, _ in rep.decay:
        print(f"N={N} SIGMA_MIN={s!r}")
    print(f"{uc['verdict']} (ratio {uc['sigma_min_rel']!r})")
    return 0


def cmd_moment(doc, cfg):
    grid = _grid(doc, cfg)
    lambdas = _vector(doc, "lambdas")
    c = _vector(doc, "c")
    targets = doc.get("targets")
    if not isinstance(targets, list) or not targets:
        raise ValidationError("expected a nonempty list of targets", "targets")
    fs = [target_from_dict(t, f"targets[{i}]") for i, t in enumerate(targets)]
    res = moment_control(lambdas, c, fs, grid)
    t = grid.nodes
    _write_table(os.path.join(cfg.outdir, "control.csv"), ["t", "u"], zip(t, res.u.values[:, 0]))
    print(f"MAXDEV={res.max_deviation!r}")
    return 0


def cmd_sweep(doc, cfg):
    alphas = _vector(doc, "alphas")
    if np.any(alphas < 0):
        raise ValidationError("penalty weights must be non-negative", "alphas")
    base = dict(doc)
    base.setdefault("alpha", 1.0)
    prob = _hum_problem(base, RunConfig(**{**cfg.__dict__, "alpha": None}))
    rows = alpha_sweep(prob, alphas)
    _write_table(os.path.join(cfg.outdir, "sweep.csv"), ["alpha", "mse", "control_norm", "cg_iters", "converged"],
                 [(r["alpha"], r["mse"], r["control_norm"], r["cg_iters"], str(r["converged"]).lower())
                  for r in rows])
    for r in rows:
        print(f"ALPHA={r['alpha']!r} MSE={r['mse']!r} ITERS={r['cg_iters']}")
    if not all(r["converged"] for r in rows):
        raise NoConvergence("at least one sweep point did not converge")
    return 0


_DISPATCH = {
    "brunovsky": cmd_brunovsky,
    "track": cmd_track,
    "hum": cmd_hum,
    "pde-heat": cmd_pde_heat,
    "pde-wave": cmd_pde_wave,
    "gramian": cmd_gramian,
    "moment": cmd_moment,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trackctl", description="Tracking controls for linear systems.")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("input", help="JSON problem file")
        p.add_argument("-o", "--outdir", default=".", help="output directory (default: current)")
        p.add_argument("--T", type=float, help="override the horizon")
        p.add_argument("--N", type=int, help="override the number of time steps")
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--cg-tol", type=float, dest="cg_tol")
        p.add_argument("--no-plot", action="store_false", dest="emit_plot_script",
                       help="skip the gnuplot script")
    return parser


def _check_overrides(cfg: RunConfig):
    if cfg.T is not None and not (math.isfinite(cfg.T) and cfg.T > 0):
        raise ValidationError(f"must be positive, got {cfg.T}", "--T")
    if cfg.N is not None and cfg.N < 2:
        raise ValidationError(f"must be >= 2, got {cfg.N}", "--N")
    for name in ("alpha", "beta", "cg_tol"):
        v = getattr(cfg, name)
        if v is not None and not (math.isfinite(v) and v > 0):
            raise ValidationError(f"must be positive, got {v}", f"--{name.replace('_', '-')}")


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    cfg = RunConfig(**vars(args))
    try:
        _check_overrides(cfg)
        try:
            with open(cfg.input) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"not valid JSON ({exc.msg} at line {exc.lineno})", "input") from None
        except OSError as exc:
            raise ValidationError(f"cannot read {cfg.input!r}: {exc.strerror}", "input") from None
        if not isinstance(doc, dict):
            raise ValidationError("top level must be an object", "input")
        if not os.path.isdir(cfg.outdir):
            raise ValidationError(f"{cfg.outdir!r} is not a directory", "outdir")
        return _DISPATCH[cfg.subcommand](doc, cfg)
    except TrackingError as exc:
        print(f"trackctl {cfg.subcommand}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"trackctl {cfg.subcommand}: cannot write results: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())
