import copy
import json
import re
import subprocess
import sys

import numpy as np
import pytest

from trackctl.cli import emit_plot_script, read_csv, run, write_csv

HALF_PI = 1.5707963267948966
PLANT = {"A": [[0, 1], [-2, -3]], "B": [[0], [1]], "x0": [1, 1], "T": 10, "N": 1000}
COSINE = {"kind": "sinusoid", "amp": 1, "freq": 0.5, "phase": HALF_PI}


def _write(tmp_path, name, doc):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def _run(tmp_path, capsys, sub, doc, *extra):
    out = tmp_path / "out"
    out.mkdir(exist_ok=True)
    code = run([sub, _write(tmp_path, "in.json", doc), "-o", str(out), *extra])
    cap = capsys.readouterr()
    return code, cap.out, cap.err, out


def _metrics(line):
    return dict(kv.split("=") for kv in line.split())


def test_track_benchmark(tmp_path, capsys):
    doc = {**PLANT, "E": [[0, 1]], "target": COSINE}
    code, out, _, d = _run(tmp_path, capsys, "track", doc)
    assert code == 0
    m = _metrics(out.strip().splitlines()[-1])
    assert set(m) == {"MSE", "MAXERR", "ITERS"}
    assert float(m["MAXERR"]) < 1e-8
    header, data = read_csv(d / "trajectory.csv")
    assert header == ["t", "u", "Ex", "f"]
    assert data.shape == (1001, 4)
    assert (d / "trajectory.gp").exists()


def test_hum_floor_target(tmp_path, capsys):
    doc = {**PLANT, "E": [[1, 0]], "target": {"kind": "floor", "offset": 1}, "alpha": 1e4}
    code, out, _, _ = _run(tmp_path, capsys, "hum", doc)
    assert code == 0
    m = _metrics(out.strip())
    assert 0.005 <= float(m["MSE"]) <= 0.05
    assert int(m["ITERS"]) > 0


def test_track_floor_rejected(tmp_path, capsys):
    doc = {**PLANT, "E": [[1, 0]], "target": {"kind": "floor", "offset": 1}}
    code, _, err, _ = _run(tmp_path, capsys, "track", doc)
    assert code == 4
    assert "derivative" in err


def test_track_incompatible_start(tmp_path, capsys):
    doc = {**PLANT, "E": [[1, 0]], "target": COSINE}
    assert _run(tmp_path, capsys, "track", doc)[0] == 4


def test_hum_no_convergence(tmp_path, capsys):
    doc = {**PLANT, "E": [[1, 0]], "target": COSINE, "alpha": 1e4, "cg_max_iters": 1}
    code, out, err, d = _run(tmp_path, capsys, "hum", doc)
    assert code == 3
    assert "ITERS=1" in out and (d / "trajectory.csv").exists()


def test_overrides(tmp_path, capsys):
    doc = {**PLANT, "E": [[0, 1]], "target": COSINE, "alpha": 1e4}
    code, out, _, d = _run(tmp_path, capsys, "hum", doc, "--N", "2", "--T", "1", "--no-plot")
    assert code == 0
    lines = (d / "trajectory.csv").read_bytes().split(b"\n")
    assert len(lines) == 5 and lines[-1] == b""  # header + 3 nodes, LF terminated
    assert b"\r" not in (d / "trajectory.csv").read_bytes()
    assert not (d / "trajectory.gp").exists()
    assert run(["hum", _write(tmp_path, "x.json", doc), "-o", str(d), "--alpha", "-1"]) == 2


def test_deterministic_output(tmp_path, capsys):
    doc = {**PLANT, "E": [[1, 0]], "target": COSINE, "alpha": 1e3, "N": 300}
    blobs = []
    for _ in range(2):
        _run(tmp_path, capsys, "hum", doc)
        blobs.append((tmp_path / "out" / "trajectory.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_csv_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(0)
    t = np.linspace(0, 1, 7)
    u, y, f = rng.normal(size=(7, 2)) * 1e-300, rng.normal(size=(7, 1)) * 1e300, rng.normal(size=7) / 3
    path = tmp_path / "x.csv"
    write_csv(path, t, u, y, f)
    header, data = read_csv(path)
    assert header == ["t", "u1", "u2", "Ex", "f"]
    assert np.array_equal(data, np.column_stack([t, u, y, f]))


def test_plot_templates(tmp_path):
    emit_plot_script(tmp_path / "a.gp", "trajectory.csv", 1, 1, panes=2)
    text = (tmp_path / "a.gp").read_text()
    assert "multiplot layout 2,1" in text and text.count("plot '") == 2
    assert "'trajectory.csv' using 1:3" in text and "dt 2" in text
    emit_plot_script(tmp_path / "b.gp", "trajectory.csv", 99, 1, panes=1)
    text = (tmp_path / "b.gp").read_text()
    assert "multiplot" not in text and text.count("plot '") == 1
    assert "using 1:101" in text and "using 1:102" in text


def test_heat_distributed_single_pane(tmp_path, capsys):
    doc = {"M": 9, "T": 1, "N": 40, "control": "distributed", "alpha": 1e3, "beta": 1e-3,
           "target": {"kind": "sinusoid", "freq": 6.283185307179586}}
    code, out, _, d = _run(tmp_path, capsys, "pde-heat", doc)
    assert code == 0 and "ITERS=" in out
    assert "multiplot" not in (d / "trajectory.gp").read_text()
    header, _ = read_csv(d / "trajectory.csv")
    assert header[1:10] == [f"u{i}" for i in range(1, 10)] and header[-2:] == ["Ex", "f"]


def test_heat_and_wave_cascades(tmp_path, capsys):
    poly = {"kind": "polynomial", "coeffs": [0] * 8 + [1]}
    code, out, _, _ = _run(tmp_path, capsys, "pde-heat", {"M": 3, "T": 1, "N": 400, "target": poly})
    assert code == 0 and "DERIVATIVES=3" in out
    code, out, _, _ = _run(tmp_path, capsys, "pde-wave", {"M": 3, "T": 1, "N": 400, "target": poly})
    assert code == 0 and "DERIVATIVES=6" in out
    code, _, err, _ = _run(tmp_path, capsys, "pde-wave", {"M": 3, "T": 1, "N": 400,
                                                           "target": {"kind": "sinusoid", "freq": 1}})
    assert code == 4
    code, _, err, _ = _run(tmp_path, capsys, "pde-heat", {"M": 3, "T": 1, "N": 40, "control": "both",
                                                          "target": poly})
    assert code == 2 and err.split(": ", 1)[1].startswith("control:")


def test_brunovsky_gramian_moment_sweep(tmp_path, capsys):
    code, out, _, d = _run(tmp_path, capsys, "brunovsky", {"A": PLANT["A"], "B": [0, 1], "E": [1, 0]})
    assert code == 0 and "KSTAR=1" in out
    assert json.loads((d / "brunovsky.json").read_text())["alpha"] == [3.0, 2.0]
    assert _run(tmp_path, capsys, "brunovsky", {"A": [[1, 0], [0, 2]], "B": [[1], [0]]})[0] == 4

    code, out, _, d = _run(tmp_path, capsys, "gramian", {**PLANT, "E": [[1, 0]], "Ns": [50, 100]})
    assert code == 0 and "UC holds numerically" in out
    assert (d / "spectrum.csv").read_text().startswith("N,dt,sigma_min,exponent\n50,")

    doc = {"lambdas": [-1], "c": [1], "targets": [{"kind": "polynomial", "coeffs": [0, 1]}], "T": 1, "N": 4}
    code, out, _, d = _run(tmp_path, capsys, "moment", doc)
    assert code == 0 and out.strip() == "MAXDEV=0.0"
    assert _run(tmp_path, capsys, "moment", {**doc, "c": [0]})[0] == 4

    doc = {**PLANT, "E": [[0, 1]], "target": COSINE, "N": 100, "alphas": [0, 10, 100]}
    code, out, _, d = _run(tmp_path, capsys, "sweep", doc)
    assert code == 0 and len(out.strip().splitlines()) == 3
    rows = (d / "sweep.csv").read_text().splitlines()
    assert rows[0] == "alpha,mse,control_norm,cg_iters,converged" and len(rows) == 4


def test_bad_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["hum", str(bad)]) == 2
    assert run(["hum", str(tmp_path / "missing.json")]) == 2
    assert run(["nope", str(bad)]) == 2
    assert run(["hum", _write(tmp_path, "l.json", [1, 2])]) == 2
    capsys.readouterr()


_FIELDS = ["A", "A[0]", "A[1][0]", "B", "B[1]", "E", "E[0][1]", "x0", "x0[1]", "T", "N",
           "alpha", "beta", "cg_tol", "cg_max_iters", "target", "target.kind", "target.freq",
           "target.amp", "target.phase"]
_POSITIVE = {"T", "N", "alpha", "beta", "cg_tol", "cg_max_iters"}


def _set(doc, path, value):
    node, parts = doc, path.replace("]", "").replace("[", ".").split(".")
    for p in parts[:-1]:
        node = node[int(p)] if p.isdigit() else node[p]
    last = parts[-1]
    node[int(last) if last.isdigit() else last] = value


def _mutations(count=50):
    rng = np.random.default_rng(2024)
    junk = ["x", None, True, {}, [], [["x"]]]
    out = []
    while len(out) < count:
        path = _FIELDS[rng.integers(len(_FIELDS))]
        if path in _POSITIVE and rng.random() < 0.3:
            value = -1
        else:
            value = junk[rng.integers(len(junk))]
        if path in {"A", "B", "E", "x0"} and value == [["x"]]:
            path = path + ("[0][0]" if path != "x0" else "[0]")
            value = "x"
        out.append((path, value))
    return out


@pytest.mark.parametrize("path, value", _mutations())
def test_validation_fuzz(tmp_path, capsys, path, value):
    doc = copy.deepcopy({**PLANT, "E": [[1, 0]], "target": COSINE, "alpha": 1e4, "beta": 1.0,
                         "cg_tol": 1e-10, "cg_max_iters": 100, "N": 20})
    _set(doc, path, value)
    code, _, err, _ = _run(tmp_path, capsys, "hum", doc)
    assert code == 2
    # the message names the mutated field or an entry inside it
    assert re.search(re.escape(path) + r"[:.\[]", err)


def test_module_entry_point(tmp_path):
    doc = {**PLANT, "E": [[0, 1]], "target": COSINE, "N": 50}
    res = subprocess.run([sys.executable, "-m", "trackctl", "track", _write(tmp_path, "m.json", doc),
                          "-o", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("MSE=")
