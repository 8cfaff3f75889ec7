import json
import subprocess
import sys

import pytest

from bellext.cli import EXIT_FAIL, EXIT_IO, EXIT_OK, EXIT_USAGE, build_parser, main, sha256_file
from bellext.polytope import DATA_ENV, default_table_path


def run(*argv):
    return main(list(argv))


def test_help_shows_defaults(capsys):
    for cmd in ("sweep", "max-violation", "verify-table"):
        with pytest.raises(SystemExit):
            build_parser().parse_args([cmd, "--help"])
    out = " ".join(capsys.readouterr().out.split())
    assert "(default: 500)" in out
    assert "(default: 0.75)" in out
    assert "(default: 8)" in out
    assert "(default: 100)" in out


def test_verify_table_classical(capsys):
    assert run("verify-table") == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 26
    assert "26/26 rows pass" in out


def test_verify_table_tampered(tmp_path, capsys):
    lines = default_table_path().read_text().splitlines()
    fields = lines[15].split(",")  # row 15
    assert fields[0] == "15"
    fields[6] = str(int(fields[6]) + 1)
    lines[15] = ",".join(fields)
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    assert run("verify-table", "--table", str(bad)) == EXIT_FAIL
    out = capsys.readouterr().out
    assert "#15  FAIL" in out
    assert out.count("FAIL") == 1


def test_verify_table_missing_file(tmp_path, capsys):
    assert run("verify-table", "--table", str(tmp_path / "nope.csv")) == EXIT_USAGE
    assert "cannot read" in capsys.readouterr().err


def test_env_var_table(tmp_path, monkeypatch, capsys):
    lines = default_table_path().read_text().splitlines()
    p = tmp_path / "t.csv"
    p.write_text("\n".join(lines[:3]) + "\n")
    monkeypatch.setenv(DATA_ENV, str(p))
    assert run("verify-table") == EXIT_OK
    assert "2/2 rows pass" in capsys.readouterr().out


def test_verify_table_quantum_small(tmp_path, capsys):
    lines = default_table_path().read_text().splitlines()
    p = tmp_path / "t.csv"
    p.write_text("\n".join([lines[0], lines[1], lines[26]]) + "\n")
    assert run("verify-table", "--quantum", "--seeds", "20", "--table", str(p), "--threads", "1") == EXIT_OK
    out = capsys.readouterr().out
    assert "seesaw" in out and "2/2 rows pass" in out


def test_max_violation_writes_dump_and_manifest(tmp_path, capsys):
    out = tmp_path / "m.json"
    assert run("max-violation", "--ineq", "26", "--seeds", "20", "--out", str(out)) == EXIT_OK
    printed = capsys.readouterr().out
    assert "best value 2.828" in printed
    dump = json.loads(out.read_text())
    assert dump["inequality"] == 26
    assert dump["model"]["dims"] == [2, 4]
    man = json.loads((tmp_path / "m.json.manifest.json").read_text())
    assert man["command"] == "max-violation"
    assert man["master_seed"] == 0
    assert man["config"]["seeds"] == 20
    assert man["outputs"]["model"]["sha256"] == sha256_file(out)
    assert {"version", "wall_clock_seconds", "started_utc", "argv"} <= set(man)


@pytest.mark.parametrize("bad", ["0", "27"])
def test_max_violation_bad_id(bad, capsys):
    assert run("max-violation", "--ineq", bad) == EXIT_USAGE


def test_max_violation_no_advantage(tmp_path, capsys):
    assert run("max-violation", "--ineq", "1", "--seeds", "10", "--out", str(tmp_path / "a.json")) == EXIT_OK
    assert "best value 1.0000000000" in capsys.readouterr().out


def test_sweep_chsh_and_replay(tmp_path, capsys):
    out = tmp_path / "chsh.csv"
    assert run("sweep", "--family", "rho", "--ineq", "chsh", "--alpha-grid", "100", "--out", str(out),
               "--threads", "1") == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "alpha,w_critical,inequality,method"
    assert len(lines) == 101
    assert all(line.endswith("chsh,horodecki-exact") for line in lines[1:])
    capsys.readouterr()
    assert run("replay", str(out) + ".manifest.json") == EXIT_OK
    assert "csv: identical" in capsys.readouterr().out


def test_sweep_seesaw_replay(tmp_path, capsys):
    out = tmp_path / "s.csv"
    args = ["sweep", "--family", "sigma", "--ineq", "15", "--alpha", "0.8", "--alpha", "0.9",
            "--seeds", "10", "--bisection-steps", "3", "--out", str(out), "--threads", "1"]
    assert run(*args) == EXIT_OK
    rows = out.read_text().splitlines()[1:]
    assert [r.split(",")[0] for r in rows] == ["0.80000000000000004", "0.90000000000000002"]
    assert all(r.endswith("15,seesaw-upper-bound") for r in rows)
    assert run("replay", str(out) + ".manifest.json") == EXIT_OK
    # tamper with the recorded digest
    man_path = tmp_path / "s.csv.manifest.json"
    man = json.loads(man_path.read_text())
    man["outputs"]["csv"]["sha256"] = "0" * 64
    man_path.write_text(json.dumps(man))
    assert run("replay", str(man_path)) == EXIT_FAIL


def test_sweep_usage_errors(tmp_path, capsys):
    out = str(tmp_path / "x.csv")
    assert run("sweep", "--family", "rho", "--ineq", "bogus", "--out", out) == EXIT_USAGE
    assert run("sweep", "--family", "rho", "--ineq", "99", "--out", out) == EXIT_USAGE
    assert run("sweep", "--family", "rho", "--ineq", "chsh", "--alpha", "1.5", "--out", out) == EXIT_USAGE
    assert run("sweep", "--family", "rho", "--ineq", "chsh", "--w-start", "0", "--out", out) == EXIT_USAGE
    assert run("sweep", "--family", "werner", "--ineq", "chsh", "--out", out) == EXIT_USAGE


def test_sweep_io_error(tmp_path, capsys):
    out = str(tmp_path / "missing" / "x.csv")
    assert run("sweep", "--family", "rho", "--ineq", "chsh", "--alpha-grid", "2", "--out", out) == EXIT_IO


@pytest.mark.parametrize("n, expected", [(4, "96 product vertices (16 NC + 8 contextual Bob, 4 Alice)"),
                                         (3, "48 product vertices (8 NC + 4 contextual Bob, 4 Alice)")])
def test_vertices(tmp_path, capsys, n, expected):
    from bellext.behavior import enumerate_vertices, read_vertices_csv
    from bellext.scenario import build_cycle_scenario

    out = tmp_path / "v.csv"
    assert run("vertices", "--n", str(n), "--out", str(out)) == EXIT_OK
    assert expected in capsys.readouterr().out
    back = read_vertices_csv(out)
    assert (back == enumerate_vertices(build_cycle_scenario(n)).product).all()


def test_vertices_bad_n(tmp_path):
    assert run("vertices", "--n", "2", "--out", str(tmp_path / "v.csv")) == EXIT_USAGE


def test_facets_three_cycle_and_replay(tmp_path, capsys):
    out = tmp_path / "classes.csv"
    assert run("facets", "--n", "3", "--out", str(out)) == EXIT_OK
    assert "7 classes, 864 facets" in capsys.readouterr().out
    assert run("replay", f"{out}.manifest.json") == EXIT_OK
    assert "csv: identical" in capsys.readouterr().out


def test_facets_budget_exhausted(tmp_path, capsys):
    out = tmp_path / "classes.csv"
    code = run("facets", "--n", "3", "--budget", "1e-9", "--dd-max-vertices", "0", "--out", str(out))
    assert code == EXIT_FAIL
    assert "(partial)" in capsys.readouterr().out
    assert out.read_text().startswith("class,orbit_size,beta_L,")
    assert run("facets", "--budget", "0", "--out", str(out)) == EXIT_USAGE


def test_replay_bad_manifest(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{}")
    assert run("replay", str(p)) == EXIT_USAGE


def test_no_command():
    assert run() == EXIT_USAGE


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "bellext", "vertices", "--out", str(tmp_path / "v.csv")],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "96 product vertices" in proc.stdout
