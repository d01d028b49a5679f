import json
import os

import pytest

from couplemc.cli import (EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO, EXIT_OK, main)

SOLVE = """
kind = solve
seed = 12
field.name = constant
field.dim = 1
terminal.name = gaussian-bump
terminal.width = 1.0
grid.horizon = 0.5
grid.steps = 50
n_paths = 400
base_point = 0.0
"""

COUPLE = """
kind = couple
seed = 5
field.name = constant
field.dim = 1
grid.horizon = 1.0
grid.steps = 200
n_paths = 600
ladder = 0.2, 0.1, 0.05
"""


def _cfg(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_validate_ok(tmp_path, capsys):
    rc = main(["validate", _cfg(tmp_path, SOLVE)])
    out = capsys.readouterr().out
    assert rc == EXIT_OK
    assert "config ok" in out
    assert "pass" in out


def test_validate_rejects_unknown_key(tmp_path, capsys):
    rc = main(["validate", _cfg(tmp_path, SOLVE + "\nsurprise = 1\n")])
    assert rc == EXIT_CONFIG
    assert "config-error" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    rc = main(["run", str(tmp_path / "absent.cfg")])
    assert rc == EXIT_CONFIG


def test_run_solve_artifacts(tmp_path, capsys):
    run_dir = tmp_path / "out"
    rc = main(["run", _cfg(tmp_path, SOLVE), "--run-dir", str(run_dir)])
    assert rc == EXIT_OK
    assert capsys.readouterr().out.strip() == str(run_dir)
    csv_text = (run_dir / "results.csv").read_text()
    assert csv_text.startswith("estimate,stderr,n_paths,horizon,dt\n")
    summary = json.loads((run_dir / "summary.json").read_text())
    assert summary["kind"] == "solve"
    assert summary["seed"] == 12
    assert summary["version"].startswith("couplemc ")
    assert summary["config"]["field.name"] == "constant"
    assert summary["wall_time_s"] >= 0.0


def test_rerun_is_byte_identical(tmp_path, capsys):
    cfg = _cfg(tmp_path, COUPLE)
    d1, d2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["run", cfg, "--run-dir", str(d1)]) == EXIT_OK
    assert main(["run", cfg, "--run-dir", str(d2)]) == EXIT_OK
    assert (d1 / "results.csv").read_bytes() == (d2 / "results.csv").read_bytes()


def test_output_root_env(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("COUPLEMC_OUTPUT_ROOT", str(tmp_path / "envroot"))
    rc = main(["run", _cfg(tmp_path, SOLVE)])
    assert rc == EXIT_OK
    out = capsys.readouterr().out.strip()
    assert out.startswith(str(tmp_path / "envroot"))
    assert os.path.exists(os.path.join(out, "results.csv"))


def test_oracle_zero_drift_matches_heat_kernel(tmp_path, capsys):
    shared = "oracle.t = 0.8\noracle.x = 0.3\noracle.y_min = -4\n" \
             "oracle.y_max = 4\noracle.y_count = 33\n"
    sgn = _cfg(tmp_path, "kind = oracle\nseed = 0\noracle.name = sgn\n"
               "oracle.theta = 0.0\n" + shared, "sgn.cfg")
    heat = _cfg(tmp_path, "kind = oracle\nseed = 0\noracle.name = heat\n"
                "oracle.a0 = 1.0\noracle.b0 = 0.0\n" + shared, "heat.cfg")
    d1, d2 = tmp_path / "o1", tmp_path / "o2"
    assert main(["oracle", sgn, "--run-dir", str(d1)]) == EXIT_OK
    assert main(["oracle", heat, "--run-dir", str(d2)]) == EXIT_OK
    a = (d1 / "results.csv").read_text()
    b = (d2 / "results.csv").read_text()
    assert a.splitlines()[0] == "y,density"
    assert b.splitlines()[0] == "y,density"
    for row_a, row_b in zip(a.splitlines()[1:], b.splitlines()[1:], strict=True):
        ya, da = (float(v) for v in row_a.split(","))
        yb, db = (float(v) for v in row_b.split(","))
        assert ya == yb
        assert da == pytest.approx(db, abs=1e-12)


def test_oracle_subcommand_requires_oracle_kind(tmp_path, capsys):
    rc = main(["oracle", _cfg(tmp_path, SOLVE)])
    assert rc == EXIT_CONFIG


def test_report_emits_fits(tmp_path, capsys):
    cfg = _cfg(tmp_path, COUPLE)
    d = tmp_path / "rep"
    assert main(["run", cfg, "--run-dir", str(d)]) == EXIT_OK
    capsys.readouterr()
    assert main(["report", str(d)]) == EXIT_OK
    fits = json.loads(capsys.readouterr().out)
    assert "tau_power_fit" in fits
    assert 0.5 < fits["tau_power_fit"]["slope"] < 1.5


def test_diverged_exit_code(tmp_path, capsys):
    bad = SOLVE.replace("field.dim = 1", "field.dim = 1\nfield.b0 = 1e308")
    bad = bad.replace("grid.horizon = 0.5", "grid.horizon = 4.0")
    rc = main(["run", _cfg(tmp_path, bad), "--run-dir", str(tmp_path / "d")])
    assert rc == EXIT_DIVERGED
    assert "simulation-diverged" in capsys.readouterr().err


def test_io_error_exit_code(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    rc = main(["run", _cfg(tmp_path, SOLVE),
               "--run-dir", str(blocker / "sub")])
    assert rc == EXIT_IO


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    assert capsys.readouterr().out.startswith("couplemc ")
