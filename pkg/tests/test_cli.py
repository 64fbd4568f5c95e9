import csv
import json

import numpy as np
import pytest

from rilab.cli import SWEEP_HEADER, main, parse_args, sweep_tasks
from rilab.params import lambda_circ


def read_csv(path):
    with open(path) as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def ref_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("ref")
    code = main(["analyze", "--n", "3", "--gamma", "1.4", "--lambda", "1.05", "--out", str(out)])
    return code, out, json.loads((out / "report.json").read_text())


def test_analyze_reference(ref_run):
    code, out, rep = ref_run
    assert code == 0
    assert rep["schema_version"] and rep["relevant"] is True
    kinds = {cp["label"]: cp["kind"] for cp in rep["critical_points"]}
    assert kinds["P8"] == kinds["P9"] == "node"
    assert rep["hugoniot"]["verdict"]["kind"] == "NoIntersection"
    assert all({"name", "value", "target", "tol", "pass"} <= set(c) for c in rep["checks"])
    assert all(c["pass"] for c in rep["checks"])
    for key in ("thresholds", "barrier", "trajectory", "collapse_profile", "integrals"):
        assert key in rep
    assert read_csv(out / "trajectory.csv")[0] == ["s", "V", "C", "lnx", "D", "F", "G", "branch"]
    assert read_csv(out / "locus.csv")[0] == ["x", "V_ahead", "C_ahead", "V_behind", "C_behind", "entropy_jump"]
    assert (out / "asymptotics.json").exists()


def test_analyze_is_deterministic(ref_run, tmp_path):
    _, out, _ = ref_run
    assert main(["analyze", "--n", "3", "--gamma", "1.4", "--lambda", "1.05", "--out", str(tmp_path)]) == 0
    for name in ("report.json", "trajectory.csv", "locus.csv", "asymptotics.json"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_analyze_negative_control(tmp_path):
    code = main(["analyze", "--n", "2", "--gamma", "1.4", "--lambda", "1.01", "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "report.json").read_text())
    assert code == 2
    assert rep["barrier"]["propA"] is False
    assert "trajectory" not in rep
    assert rep["status"]["stage"] == "barrier"


def test_analyze_irrelevant(tmp_path):
    code = main(["analyze", "--n", "3", "--gamma", "1.4", "--lambda", "1.3", "--out", str(tmp_path)])
    rep = json.loads((tmp_path / "report.json").read_text())
    assert code == 2 and rep["relevant"] is False
    assert "critical_points" not in rep


def test_analyze_invalid_params(tmp_path, capsys):
    code = main(["analyze", "--n", "3", "--gamma", "1.4", "--lambda", "0.9", "--out", str(tmp_path)])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "DomainError" in err["status"]["cause"]


def test_bad_flags_exit_nonzero():
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--n", "4", "--gamma", "1.4", "--lambda", "1.05"])
    assert exc.value.code != 0


def test_out_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RIL_OUT_DIR", str(tmp_path))
    assert main(["analyze", "--n", "3", "--gamma", "1.4", "--lambda", "1.3"]) == 2
    assert (tmp_path / "report.json").exists()


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("gamma: 1.4\nlambda: 1.3\nn: 3\nsamples: 7\n")
    args = parse_args(["field", "--config", str(cfg), "--lambda", "1.05"])
    assert args.gamma == 1.4 and args.lam == 1.05 and args.samples == 7


def test_field_rows(tmp_path):
    code = main(["field", "--n", "3", "--gamma", "1.4", "--lambda", "1.05", "--ell", "21.4", "--t", "0", "1", "-1",
                 "--rmin", "1e-6", "--rmax", "10", "--samples", "40", "--out", str(tmp_path)])
    assert code == 0
    rows = read_csv(tmp_path / "field.csv")
    assert rows[0] == ["t", "r", "rho", "u", "c", "p", "e", "S_proxy"]
    data = np.array(rows[1:], dtype=float)
    assert data.shape == (120, 8)
    assert np.all(np.isfinite(data))
    t0 = data[data[:, 0] == 0.0]
    slope = np.polyfit(np.log(t0[:, 1]), np.log(t0[:, 3]), 1)[0]
    assert slope == pytest.approx(1 - 1.05, abs=1e-6)
    assert np.all(t0[:, 3] > 0.0)


def test_field_empty_t_list(tmp_path):
    code = main(["field", "--n", "3", "--gamma", "1.4", "--lambda", "1.05", "--t", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "field.csv").read_text() == "t,r,rho,u,c,p,e,S_proxy\n"


def test_field_reports_singular_points(tmp_path, capsys, ref_run):
    _, out, _ = ref_run
    code = main(["field", "--report", str(out / "report.json"), "--t", "0", "1", "--rmin", "0", "--samples", "5",
                 "--out", str(tmp_path)])
    assert code == 0
    msg = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert msg["excluded"] == [[0.0, 0.0]]
    assert msg["rows"] == 9


def test_sweep_rows_and_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["sweep", "--n", "3", "--gamma", "1.4", "2.0", "--lambda-count", "6"]
    assert main(base + ["--out", str(a)]) == 0
    assert main(base + ["--out", str(b), "--jobs", "2"]) == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    rows = read_csv(a / "sweep.csv")
    assert rows[0] == SWEEP_HEADER and len(rows) == 13
    row14 = [r for r in rows[1:] if float(r[1]) == 1.4]
    flags = [r[5] == "true" for r in row14]
    # propA holds on an initial band of lambda values and fails beyond it
    k = flags.index(False)
    assert k > 0 and not any(flags[k:])


def test_sweep_negative_control(tmp_path):
    assert main(["sweep", "--n", "2", "--gamma", "1.2", "1.4", "3", "--lambda-count", "5", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")[1:]
    assert rows and all(r[4] == "true" and r[5] == "false" for r in rows)


def test_sweep_single_point_matches_analyze(tmp_path, ref_run):
    _, _, rep = ref_run
    assert main(["sweep", "--n", "3", "--gamma", "1.4", "--lambdas", "1.05", "--trace", "--out", str(tmp_path)]) == 0
    row = read_csv(tmp_path / "sweep.csv")[1]
    assert row[4] == "true"
    assert row[5:8] == ["true" if rep["barrier"][k] else "false" for k in ("propA", "propB", "propC")]
    assert row[8] == rep["hugoniot"]["verdict"]["kind"]


def test_sweep_task_rule():
    tasks = sweep_tasks(3, [1.4], count=3)
    lc = lambda_circ(3, 1.4)
    assert [t[2] for t in tasks] == pytest.approx([1 + (lc - 1) * k / 4 for k in (1, 2, 3)])
