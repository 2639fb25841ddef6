import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from dlngeom.cli import emit_report, parse_and_dispatch
from dlngeom.errors import ReportIOError
from dlngeom.manifold import center_of_fiber


def run(argv, capsys):
    code = parse_and_dispatch(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_entropy_command(capsys):
    code, out, _ = run(["entropy", "--sigma", "2,1", "--depth", "2", "--convention", "embedded"], capsys)
    assert code == 0
    data = json.loads(out)
    assert set(data) == {"total", "constant_part", "ratio_part", "convention"}
    assert data["total"] == pytest.approx(math.log(4 * math.sqrt(2) * math.pi) + 0.5 * math.log(3))


def test_bad_depth_is_usage_error(capsys, tmp_path):
    out_file = tmp_path / "r.json"
    code, out, err = run(["entropy", "--sigma", "2,1", "--depth", "0", "--output", str(out_file)], capsys)
    assert code == 2
    assert "--depth" in err
    assert out == ""
    assert not out_file.exists()


@pytest.mark.parametrize(
    "argv,flag",
    [
        (["entropy", "--sigma", "2,-1"], "--sigma"),
        (["entropy", "--matrix", "missing.json"], "--matrix"),
        (["flow", "--dt", "-1"], "--dt"),
        (["flow", "--beta-sweep", "1,2"], "--beta-sweep"),
        (["verify", "--tol", "jacobi"], "--tol"),
        (["entropy", "--width", "3", "--sigma", "2,1"], "--sigma"),
    ],
)
def test_usage_errors_name_flag(argv, flag, capsys):
    code, _, err = run(argv, capsys)
    assert code == 2
    assert flag in err


def test_argparse_errors_exit_2(capsys):
    code, _, err = run(["entropy", "--depth", "two"], capsys)
    assert code == 2
    assert "--depth" in err


def test_numerical_error_exit_1(capsys, tmp_path):
    m = tmp_path / "x.json"
    m.write_text(json.dumps({"dim": 2, "rows": [[1.0, 0.0], [0.0, 0.0]]}))
    code, _, err = run(["entropy", "--matrix", str(m), "--depth", "2"], capsys)
    assert code == 1
    assert "RankDeficient" in err


def test_verify_jacobi(capsys):
    code, out, _ = run(["verify", "--suite", "jacobi", "--depth", "3", "--width", "2"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data["status"] == "PASS"
    check = data["checks"][0]
    assert {"name", "value", "tolerance", "pass"} <= set(check)
    assert check["formula"] == pytest.approx(21) and check["lu"] == pytest.approx(21)


@pytest.mark.parametrize("suite", ["chebyshev", "pmatrix", "volume", "basis", "submersion", "renorm"])
def test_verify_suites_pass(suite, capsys):
    code, out, _ = run(["verify", "--suite", suite, "--depth", "2", "--width", "2"], capsys)
    data = json.loads(out)
    assert code == 0 and data["status"] == "PASS" and data["suite"] == suite


def test_verify_failure_exits_1(capsys):
    code, out, _ = run(["verify", "--suite", "jacobi", "--depth", "3", "--width", "2", "--tol", "jacobi=-1"], capsys)
    assert code == 1
    assert json.loads(out)["status"] == "FAIL"


def test_volume_command(capsys):
    code, out, _ = run(["volume", "--sigma", "4,1", "--depth", "2"], capsys)
    data = json.loads(out)
    assert code == 0
    assert data["relative_error"] < 1e-6
    assert data["formula"] == pytest.approx(4 * math.sqrt(2) * math.pi * math.sqrt(5))


def test_basis_command_with_network(capsys, tmp_path):
    net = tmp_path / "w.json"
    net.write_text(json.dumps(center_of_fiber(np.diag([8.0, 2.0, 1.0]), 3).to_json()))
    code, out, _ = run(["basis", "--network", str(net)], capsys)
    data = json.loads(out)
    assert code == 0
    assert data["basis_size"] == 3 + 4 * 3
    assert data["gram_error"] < 1e-9


def test_flow_csv_schema_and_determinism(tmp_path, capsys):
    args = ["flow", "--width", "2", "--depth", "2", "--steps", "50", "--record-every", "10", "--seed", "3"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(args + ["--output", str(a)], capsys)[0] == 0
    assert run(args + ["--output", str(b)], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    text = a.read_text()
    assert text.splitlines()[0] == "t,loss,free_energy,entropy,balance_residual,sigma_1,sigma_2"
    assert text.endswith("\n") and "\r" not in text
    rows = list(csv.reader(text.splitlines()))[1:]
    assert len(rows) == 6
    assert all(len(r) == 7 for r in rows)


@pytest.mark.parametrize("mode", ["param", "closed", "balanced", "free-energy"])
def test_flow_modes(mode, capsys):
    code, out, _ = run(["flow", "--mode", mode, "--depth", "3", "--width", "2", "--steps", "20", "--beta", "5", "--record-every", "20"], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 3
    balance = float(lines[-1].split(",")[4])
    assert math.isnan(balance) == (mode in ("balanced", "free-energy"))


def test_flow_with_inputs(tmp_path, capsys):
    y = tmp_path / "y.csv"
    y.write_text("1,0\n0,1\n")
    m = tmp_path / "m.csv"
    m.write_text("1,0\n1,1\n")
    x = tmp_path / "x.json"
    x.write_text(json.dumps({"dim": 2, "rows": [[1.2, 0.3], [0.1, 0.8]]}))
    code, out, _ = run(["flow", "--matrix", str(x), "--target", str(y), "--mask", str(m), "--depth", "2",
                        "--mode", "free-energy", "--beta", "10", "--dt", "0.01", "--steps", "100", "--record-every", "50"], capsys)
    assert code == 0
    assert len(out.splitlines()) == 4


def test_beta_sweep_writes_files(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("DLN_GEOM_THREADS", "2")
    code, _, _ = run(["flow", "--mode", "free-energy", "--width", "2", "--depth", "2", "--steps", "10",
                      "--beta-sweep", "1,10,inf", "--output-dir", str(tmp_path / "sweep")], capsys)
    assert code == 0
    names = sorted(p.name for p in (tmp_path / "sweep").iterdir())
    assert names == ["flow_beta=1.csv", "flow_beta=10.csv", "flow_beta=inf.csv"]


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sigma": "2,1", "depth": 3, "convention": "ponting"}))
    code, out, _ = run(["entropy", "--config", str(cfg), "--depth", "2"], capsys)
    data = json.loads(out)
    assert code == 0 and data["convention"] == "ponting"
    assert data["constant_part"] == pytest.approx(math.log(32 * math.pi))


def test_config_validation_applies(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"depth": 0}))
    code, _, err = run(["entropy", "--config", str(cfg)], capsys)
    assert code == 2 and "--depth" in err


def test_emit_report_json_is_deterministic(tmp_path):
    p = tmp_path / "r.json"
    emit_report({"b": np.float64(1.5), "a": [math.nan, math.inf, np.int64(2)]}, "json", p)
    first = p.read_bytes()
    emit_report({"a": [math.nan, math.inf, 2], "b": 1.5}, "json", p)
    assert p.read_bytes() == first
    assert json.loads(first) == {"a": [None, None, 2], "b": 1.5}


def test_emit_report_io_error(tmp_path):
    with pytest.raises(ReportIOError, match="nowhere"):
        emit_report({"a": 1}, "json", tmp_path / "nowhere" / "r.json")


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dlngeom", "entropy", "--sigma", "2,1", "--depth", "2"],
                         capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert json.loads(res.stdout)["total"] == pytest.approx(3.426904, abs=1e-6)
