import json

import pytest

from qdcouple import cli, solver


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = cli.main([*args, "--out", str(out)] if args[0] != "report" else
                    [*args, "--out", str(out)])
    return code, out


def test_stopband(tmp_path):
    code, out = run(["stopband", "--pairs", "25"], tmp_path)
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["peak_reflectance"] > 0.999
    assert abs(s["peak_reflectance"] - s["quarter_wave_formula"]) < 1e-4
    m = json.loads((out / "manifest.json").read_text())
    assert set(m["files"]) == {"stopband.csv", "summary.json", "manifest.json"}
    assert m["versions"]["numpy"] and "total" in m["timings"]


def test_unknown_preset_names_key(tmp_path, capsys):
    code, out = run(["solve", "--preset", "micropillar-9300"], tmp_path)
    assert code == cli.EXIT_CONFIG
    err = json.loads((out / "error.json").read_text())
    assert err["key"] == "preset" and "micropillar-9300" in err["message"]
    assert json.loads(capsys.readouterr().err)["exit_code"] == 2


def test_bad_arguments(tmp_path):
    assert cli.main(["solve", "--resolution", "abc"]) == cli.EXIT_CONFIG
    assert cli.main(["frobnicate"]) == cli.EXIT_CONFIG
    code, _ = run(["solve", "--preset", "micromesa-930", "--resolution", "5"], tmp_path)
    assert code == cli.EXIT_CONFIG


def test_fiber_modes(tmp_path):
    code, out = run(["fiber-modes", "--fiber", "780HP", "--wavelength", "930"], tmp_path)
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["labels"] == ["LP01"] and s["v_number"] < 2.405
    assert (out / "profile_LP01.csv").exists()
    code, out = run(["fiber-modes", "--fiber", "nope", "--wavelength", "930"], tmp_path, "b")
    assert code == cli.EXIT_CONFIG


def test_optimize_branin_and_budget(tmp_path):
    code, out = run(["optimize", "--problem", "branin", "--budget", "12", "--seed", "3"], tmp_path)
    assert code == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["evaluations"] == 12
    assert len((out / "history.csv").read_text().splitlines()) == 13
    code, out = run(["optimize", "--problem", "branin", "--budget", "14", "--resume"], tmp_path)
    assert code == 0
    assert json.loads((out / "summary.json").read_text())["evaluations"] == 14
    code, _ = run(["optimize", "--problem", "branin", "--budget", "500", "--max-budget", "100"],
                  tmp_path, "big")
    assert code == cli.EXIT_BUDGET


def test_domain_too_large_is_budget(tmp_path, monkeypatch):
    from qdcouple import geometry
    orig = geometry.build_map

    def tiny(*a, **k):
        k["max_unknowns"] = 100
        return orig(*a, **k)

    monkeypatch.setattr(geometry, "build_map", tiny)
    code, _ = run(["solve", "--preset", "micromesa-930"], tmp_path)
    assert code == cli.EXIT_BUDGET


def test_numerical_failure(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise solver.SolverError("relative residual 1e-2 exceeds tolerance")

    monkeypatch.setattr(solver, "solve", boom)
    code, out = run(["solve", "--preset", "micromesa-930"], tmp_path)
    assert code == cli.EXIT_NUMERIC
    assert json.loads((out / "error.json").read_text())["error"] == "SolverError"


def test_config_file_defaults(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"pairs": 5}))
    code, out = run(["stopband", "--config", str(cfg)], tmp_path)
    assert code == 0
    assert json.loads((out / "summary.json").read_text())["pairs"] == 5
    cfg.write_text(json.dumps({"colour": 5}))
    assert run(["stopband", "--config", str(cfg)], tmp_path, "x")[0] == cli.EXIT_CONFIG


@pytest.fixture(scope="module")
def mesa_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mesa")
    assert cli.main(["solve", "--preset", "micromesa-930", "--resolution", "15",
                     "--out", str(out / "solve")]) == 0
    return out


def test_solve_outputs(mesa_run):
    d = mesa_run / "solve"
    s = json.loads((d / "summary.json").read_text())
    assert s["purcell"] > 0 and 0 < s["eta_ext_na04"] < 1 and s["preset"] == "micromesa-930"
    m = json.loads((d / "manifest.json").read_text())
    for f in m["files"]:
        assert (d / f).exists()
    assert "farfield.npz" in m["files"] and "extraction_vs_na.csv" in m["files"]


def test_couple_scan_report(mesa_run):
    d = mesa_run
    assert cli.main(["couple", "--from-run", str(d / "solve"), "--lens", "table-s5-mesa",
                     "--fiber", "780HP", "--out", str(d / "couple")]) == 0
    c = json.loads((d / "couple" / "summary.json").read_text())
    assert 0 < c["eta_total"] < 1 and c["distance_um"] == 19.0
    assert cli.main(["scan", "--from-run", str(d / "solve"), "--distances", "17", "21", "2",
                     "--out", str(d / "scan")]) == 0
    assert len((d / "scan" / "scan.csv").read_text().splitlines()) == 4
    assert cli.main(["couple", "--from-run", str(d / "solve"), "--scan", "17", "21", "2",
                     "--out", str(d / "couple-best")]) == 0
    b = json.loads((d / "couple-best" / "summary.json").read_text())
    assert b["eta_total"] >= c["eta_total"] - 1e-12 and b["distance_source"] == "scan"
    assert cli.main(["report", str(d), "--out", str(d / "report")]) == 0
    rows = (d / "report" / "report.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("micromesa,930")


def test_from_run_missing(tmp_path):
    code, _ = run(["couple", "--from-run", str(tmp_path), "--lens", "micromesa-930"], tmp_path)
    assert code == cli.EXIT_CONFIG


def test_report_empty(tmp_path, caplog):
    (tmp_path / "runs").mkdir()
    code = cli.main(["report", str(tmp_path / "runs"), "--out", str(tmp_path / "rep")])
    assert code == 0
    assert (tmp_path / "rep" / "report.csv").read_text().splitlines() == [
        ",".join(cli.REPORT_COLUMNS)]
    assert "no completed runs" in caplog.text


def test_report_orders_families(tmp_path):
    for fam, eta in (("micropillar", 0.8), ("micromesa", 0.3), ("cbg", 0.7), ("microlens", 0.5)):
        d = tmp_path / "r" / fam
        d.mkdir(parents=True)
        (d / "summary.json").write_text(json.dumps({
            "command": "couple", "status": "ok", "family": fam, "design_wavelength": 930.0,
            "eta_total": eta}))
    rows, problems = cli.report_table(tmp_path / "r")
    assert [r["family"] for r in rows] == ["micromesa", "microlens", "cbg", "micropillar"]
    assert problems == []


def test_thread_limit(tmp_path, monkeypatch):
    monkeypatch.setenv("QDCOUPLE_THREADS", "1")
    code, out = run(["stopband", "--pairs", "3"], tmp_path)
    assert code == 0
    assert json.loads((out / "manifest.json").read_text())["versions"]["threads"] == "1"
    monkeypatch.setenv("QDCOUPLE_THREADS", "many")
    assert run(["stopband"], tmp_path, "y")[0] == cli.EXIT_CONFIG
