import json
from pathlib import Path

import pytest

from tdreflect.cli import load_config, load_summary, main, render_report, run
from tdreflect.errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

INTERIOR = """
[domain]
kind = "interval"
horizon = 1.0
a = 0.0
b = 1.0

[skorohod]
input = { kind = "sine", x0 = [0.5], amplitude = [0.3], omega = 5.0, steps = 200 }
"""

SDE = """
seed = 5

[domain]
kind = "disk"
horizon = 0.5
center = [0.0, 0.0]
radius = { kind = "linear", intercept = 0.6, slope = -0.4 }

[sde]
x0 = [0.1, 0.0]
steps = 40
paths = 5000
diffusion = 1.0
"""


def write(tmp_path, text, name="exp.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_interior_skorohod_run_passes(tmp_path, capsys):
    cfg = write(tmp_path, INTERIOR)
    out = tmp_path / "out"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    s = load_summary(out)
    assert s["schema_version"] == 1 and s["experiment"] == "skorohod" and s["passed"] and s["error"] is None
    rows = {r["check_name"]: r for r in s["reports"][0]["rows"]}
    for k in ("SP1_decomposition", "SP2_constraint", "SP3_variation", "SP4_interior_accumulation", "SP5_direction"):
        assert rows[k]["passed"] and rows[k]["worst_violation"] == 0.0
    assert (out / "solution.csv").read_text().splitlines()[0] == "t,phi1,lambda1,tv"
    assert main(["report", str(out)]) == 0
    text = capsys.readouterr().out
    assert "FAIL" not in text and "overall: PASS" in text


def test_tiny_budget_is_a_recorded_failure(tmp_path, capsys):
    out = tmp_path / "neg"
    assert run(CONFIGS / "skorohod_tiny_budget.toml", out) == 1
    s = load_summary(out)
    assert not s["passed"]
    assert s["error"]["type"] == "ConvergenceError"
    assert s["records"]["trace"] and not s["records"]["trace"][0]["passed"]
    assert main(["report", str(out)]) == 1
    assert "ERROR  ConvergenceError" in capsys.readouterr().out


def test_failing_rows_are_listed_first():
    data = {
        "schema_version": 1,
        "experiment": "x",
        "seed": 0,
        "passed": False,
        "reports": [{"name": "r", "rows": [{"check_name": "good", "samples": 1, "worst_violation": 0.0, "passed": True}, {"check_name": "bad", "samples": 1, "worst_violation": 2.0, "passed": False}]}],
    }
    lines = render_report(data).splitlines()
    assert lines[2].startswith("FAIL") and "r.bad" in lines[2]
    assert lines[3].startswith("PASS")


def test_sde_csv_is_byte_identical_across_workers(tmp_path):
    cfg = write(tmp_path, SDE)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert main(["run", str(cfg), "--out", str(a), "--workers", "1"]) == 0
    assert main(["run", str(cfg), "--out", str(b), "--workers", "3"]) == 0
    assert (a / "terminal.csv").read_bytes() == (b / "terminal.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    main(["run", str(cfg), "--out", str(c), "--seed", "6"])
    assert (a / "terminal.csv").read_bytes() != (c / "terminal.csv").read_bytes()
    assert load_summary(c)["seed"] == 6


def test_pde_run_writes_solution_and_rows(tmp_path):
    out = tmp_path / "pde"
    assert run(CONFIGS / "pde_moving.toml", out) == 0
    s = load_summary(out)
    names = [r["check_name"] for rep in s["reports"] for r in rep["rows"]]
    for k in ("monotone_scheme", "maximum_principle", "boundary_residual", "ordering"):
        assert k in names
    assert (out / "solution.csv").read_text().startswith("t,xi,x,u\n")


def test_summary_has_stable_key_order(tmp_path):
    cfg = write(tmp_path, INTERIOR)
    run(cfg, tmp_path / "o")
    keys = list(json.loads((tmp_path / "o" / "summary.json").read_text()))
    assert keys == ["schema_version", "experiment", "seed", "passed", "error", "reports", "records", "files"]


# -- errors ----------------------------------------------------------------------------


def test_report_on_empty_directory(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 2
    assert "no summary found" in capsys.readouterr().err


def test_report_on_corrupt_summary(tmp_path):
    (tmp_path / "summary.json").write_text("{not json")
    with pytest.raises(ConfigError, match="corrupt"):
        load_summary(tmp_path)
    (tmp_path / "summary.json").write_text("{}")
    with pytest.raises(ConfigError, match="schema_version"):
        load_summary(tmp_path)


def test_report_does_not_touch_artifacts(tmp_path):
    cfg = write(tmp_path, INTERIOR)
    out = tmp_path / "o"
    run(cfg, out)
    before = {p.name: p.read_bytes() for p in out.iterdir()}
    main(["report", str(out)])
    assert {p.name: p.read_bytes() for p in out.iterdir()} == before


@pytest.mark.parametrize(
    "text,match",
    [
        ("[domain\nkind = 1", "parse error"),
        ('[domain]\nkind = "interval"\n', "exactly one experiment"),
        ('[skorohod]\n[pde]\n[domain]\nkind = "interval"\n', "exactly one experiment"),
        ('[sde]\nx0 = 0.5\n[domain]\nkind = "interval"\nhorizon = 1.0\na = 0.0\n', "'seed' is required"),
        ('[skorohod]\ninput = { kind = "csv", file = "nope.csv" }\n[domain]\nkind = "interval"\nhorizon = 1.0\na = 0.0\n', "does not exist"),
        ('[tolerances]\nbogus = 1.0\n[skorohod]\n[domain]\nkind = "interval"\nhorizon = 1.0\na = 0.0\n', "unknown tolerance"),
    ],
    ids=["syntax", "no_experiment", "two_experiments", "no_seed", "missing_file", "unknown_tolerance"],
)
def test_config_errors(tmp_path, text, match):
    cfg = write(tmp_path, text)
    with pytest.raises(ConfigError, match=match):
        run(cfg, tmp_path / "o")


def test_config_errors_exit_two(tmp_path, capsys):
    cfg = write(tmp_path, "[domain\n")
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "parse error" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.toml")]) == 2


def test_missing_field_names_the_path(tmp_path):
    cfg = write(tmp_path, '[skorohod]\ninput = { kind = "linear", x0 = [0.5], steps = 10 }\n[domain]\nkind = "interval"\nhorizon = 1.0\na = 0.0\n')
    with pytest.raises(ConfigError, match="skorohod.input.velocity"):
        run(cfg, tmp_path / "o")


def test_csv_input_round_trip(tmp_path):
    (tmp_path / "psi.csv").write_text("t,x1\n0,0.5\n0.5,-0.2\n1,0.3\n")
    cfg = write(tmp_path, '[skorohod]\ninput = { kind = "csv", file = "psi.csv" }\n[domain]\nkind = "interval"\nhorizon = 1.0\na = 0.0\n')
    assert run(cfg, tmp_path / "o") == 0
    rows = {r["check_name"] for rep in load_summary(tmp_path / "o")["reports"] for r in rep["rows"]}
    assert "half_line_oracle" in rows


def test_load_config_reports_experiment():
    assert load_config(CONFIGS / "sde_disk.toml").experiment == "sde"
