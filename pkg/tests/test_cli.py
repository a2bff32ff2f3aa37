import json
import subprocess
import sys

import numpy as np
import pytest

from heatcoeff import __version__
from heatcoeff.cli import main
from heatcoeff.spectral_reduction import read_csv_columns


@pytest.fixture
def files(tmp_path):
    def coeff(name, bp, vals):
        doc = {"breakpoints": bp, "pieces": [[v] for v in vals], "c0": 0.25, "c1": 4.0}
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)

    out = {
        "one": coeff("one.json", [0, 1], [1.0]),
        "two": coeff("two.json", [0, 0.5, 1], [1.0, 2.0]),
        "a_two": coeff("a_two.json", [0, 0.5, 1], [1.0, 0.5]),
        "dir": tmp_path,
    }
    h = tmp_path / "h.json"
    h.write_text(json.dumps({"breakpoints": [0, 0.5, 1], "pieces": [[-1.0], [1.0]]}))
    out["h"] = str(h)
    return out


def header(path):
    return [line for line in open(path) if line.startswith("#")]


def test_solve_sl_cosh(files):
    out = files["dir"] / "u.csv"
    assert main(["solve-sl", "--coeff", files["one"], "--k", "1", "--out", str(out)]) == 0
    cols = read_csv_columns(out)
    assert cols["u"][-1] == pytest.approx(1.5430806, abs=1e-7)
    assert cols["x"][0] == 0.0 and cols["x"][-1] == 1.0
    lines = header(out)
    assert lines[0] == f"# heatcoeff {__version__}\n"
    assert lines[1] == "# command: solve-sl\n"
    assert json.loads(lines[2][len("# args: "):])["k"] == "1"


def test_solve_sl_log_columns(files):
    out = files["dir"] / "u.csv"
    assert main(["solve-sl", "--coeff", files["one"], "--k", "720", "--n", "200000", "--out", str(out)]) == 0
    cols = read_csv_columns(out)
    assert np.isinf(cols["u"][-1])
    assert cols["log_u"][-1] == pytest.approx(720 - np.log(2), rel=1e-6)


def test_selftest_passes(capsys):
    assert main(["selftest"]) == 0
    text = capsys.readouterr().out
    assert "FAIL" not in text and "7/7 checks passed" in text


def test_usage_errors(files, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["solve-sl", "--k", "1"])
    assert exc.value.code == 2
    out = str(files["dir"] / "x.csv")
    assert main(["solve-sl", "--coeff", "missing.json", "--k", "1", "--out", out]) == 2
    assert main(["solve-sl", "--coeff", files["one"], "--k", "lin:0:1:3", "--out", out]) == 2
    assert main(["forward", "--coeff", files["one"], "--source", "builtin:nope", "--out", out]) == 2
    assert "error" in capsys.readouterr().err


def test_numerical_error_exit_one(files, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"breakpoints": [0, 1], "pieces": [[0.0]]}))
    assert main(["solve-sl", "--coeff", str(bad), "--k", "1", "--out", str(tmp_path / "u.csv")]) == 1
    # dt too coarse for the source duration
    out = str(tmp_path / "fg.csv")
    assert main(["forward", "--coeff", files["one"], "--dt", "0.1", "--out", out]) == 1


def test_deterministic_output(files):
    out = files["dir"] / "d.csv"
    runs = []
    for _ in range(2):
        assert main(["spectral-forward", "--coeff", files["a_two"], "--kgrid", "geom:0.5:5:6",
                     "--out", str(out)]) == 0
        runs.append(out.read_bytes())
    assert runs[0] == runs[1]
    assert b"\r" not in runs[0]


def test_forward_reduce_matches_spectral_forward(files):
    d = files["dir"]
    fg, red, spec = d / "fg.csv", d / "red.csv", d / "spec.csv"
    assert main(["forward", "--coeff", files["a_two"], "--out", str(fg)]) == 0
    cols = read_csv_columns(fg)
    assert set(cols) == {"t", "F", "G"}
    assert main(["reduce", "--fg", str(fg), "--kgrid", "geom:0.5:5:6", "--out", str(red)]) == 0
    assert main(["spectral-forward", "--coeff", files["a_two"], "--kgrid", "geom:0.5:5:6",
                 "--out", str(spec)]) == 0
    a, b = read_csv_columns(red), read_csv_columns(spec)
    assert list(a) == ["k", "g", "k2f"]
    assert np.allclose(a["g"], b["g"], rtol=1e-3)
    assert np.allclose(a["k2f"], b["k2f"], rtol=1e-3)


def test_forward_field_dump(files):
    d = files["dir"]
    fld = d / "field.csv"
    assert main(["forward", "--coeff", files["one"], "--nx", "20", "--dt", "0.01", "--tsim", "1.5",
                 "--field-out", str(fld), "--out", str(d / "fg.csv")]) == 0
    cols = read_csv_columns(fld)
    assert set(cols) == {"x", "t", "U"} and cols["U"].min() >= -1e-12


def test_property_c(files):
    out = files["dir"] / "pc.csv"
    assert main(["property-c", "--h", files["h"], "--q1", files["one"], "--q2", files["one"],
                 "--kgrid", "geom:2:40:5", "--out", str(out)]) == 0
    cols = read_csv_columns(out)
    assert list(cols) == ["k", "I", "I_normalized", "bound_B"]
    ks = cols["k"]
    exact = 0.5 * np.cosh(0.5 * ks) ** 2 / np.cosh(0.75 * ks) ** 2
    assert np.allclose(cols["bound_B"], exact, rtol=1e-6)


def test_reconstruct(files):
    d = files["dir"]
    data = d / "data.csv"
    assert main(["spectral-forward", "--coeff", files["a_two"], "--kgrid", "geom:0.5:5:12",
                 "--out", str(data)]) == 0
    model = d / "model.json"
    model.write_text(json.dumps({"breakpoints": [0, 0.5, 1], "degree": 0, "c0": 0.25, "c1": 4.0}))
    init = d / "init.json"
    init.write_text(json.dumps({"values": [1.5, 1.5]}))
    out = d / "fit.json"
    assert main(["reconstruct", "--data", str(data), "--model", str(model), "--init", str(init),
                 "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["converged"] and np.allclose(doc["parameters"], [1, 2], rtol=1e-6)
    assert doc["coefficient"]["breakpoints"] == [0, 0.5, 1]
    assert doc["provenance"][1] == "command: reconstruct"
    bad = d / "bad.json"
    bad.write_text(json.dumps({"degree": 0}))
    assert main(["reconstruct", "--data", str(data), "--model", str(bad), "--out", str(out)]) == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "heatcoeff.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == f"heatcoeff {__version__}"
