import csv
import json
import shutil
import subprocess
import sys

import pytest

from luckock.cli import EXIT_IDENTITY, EXIT_INVALID, EXIT_IO, EXIT_OK, crosscheck, main

from conftest import MODELS

UNIFORM = str(MODELS / "uniform_0.25_0.75.json")
TRANSIENT = str(MODELS / "uniform_0.3_0.9.json")


def call(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if out.strip() else None)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_validate(capsys):
    code, out = call(capsys, "validate", "--model", UNIFORM)
    assert code == EXIT_OK
    assert out["a6"] is True
    code, _ = call(capsys, "validate", "--model", str(MODELS / "uniform.json"), "--require", "a6")
    assert code == EXIT_INVALID


def test_solve_writes_table(capsys, tmp_path):
    path = tmp_path / "f.csv"
    code, out = call(capsys, "solve", "--model", UNIFORM, "--grid", 512, "--csv", path)
    assert code == EXIT_OK
    assert out["classification"] == "PositiveRecurrent"
    rows = read_csv(path)
    assert rows[0] == ["x", "f_minus", "f_plus"]
    assert float(rows[-1][1]) == pytest.approx(1.0)


def test_solve_rejects_models_without_market_orders(capsys):
    code, _ = call(capsys, "solve", "--model", str(MODELS / "uniform.json"))
    assert code == EXIT_INVALID


def test_weights(capsys, tmp_path):
    path = tmp_path / "w.csv"
    code, out = call(capsys, "weights", "--model", UNIFORM, "--z", 0.5, "--side", "plus", "--csv", path)
    assert code == EXIT_OK
    assert out["side"] == "plus"
    assert read_csv(path)[0] == ["x", "w_minus", "w_plus"]


def test_tick_solve_exact(capsys, tmp_path):
    path = tmp_path / "t.csv"
    code, out = call(capsys, "tick-solve", "--model", MODELS / "tick6.json", "--exact", "--csv", path)
    assert code == EXIT_OK
    assert out["n"] == 6 and out["exact"] is True
    assert read_csv(path)[0] == ["point", "u_mp", "u_pm", "f_minus", "f_plus"]


def test_tick_solve_of_discretised_and_atomic_models(capsys):
    code, out = call(capsys, "tick-solve", "--model", UNIFORM, "--n", 20)
    assert code == EXIT_OK and out["n"] == 20
    code, out = call(capsys, "tick-solve", "--model", MODELS / "atomic.json")
    assert code == EXIT_OK and out["classification"] == "PositiveRecurrent"


def test_window(capsys, tmp_path):
    path = tmp_path / "phi.csv"
    code, out = call(capsys, "window", "--model", MODELS / "uniform.json", "--csv", path)
    assert code == EXIT_OK
    assert out["v_l"] == pytest.approx(0.7821882942802, abs=1e-10)
    assert read_csv(path)[0] == ["v", "phi"]


def test_region(capsys, tmp_path):
    path = tmp_path / "r.csv"
    code, out = call(capsys, "region", "--model", MODELS / "uniform.json", "--resolution", 16, "--csv", path)
    assert code == EXIT_OK
    assert out["intersection"][0] == pytest.approx(0.2178117057, abs=1e-8)
    assert len(read_csv(path)) == 1 + 16 * 16
    code, _ = call(capsys, "region", "--model", MODELS / "uniform.json", "--resolution", 4)
    assert code == EXIT_INVALID


def test_simulate(capsys, tmp_path):
    path = tmp_path / "s.csv"
    code, out = call(capsys, "simulate", "--model", UNIFORM, "--steps", 20000, "--collect", "f,returns,sizes",
                     "--episodes", 50, "--csv", path)
    assert code == EXIT_OK
    assert len(out["empirical_f_minus"]) == 16
    assert out["return_time_stats"]["episodes"] == 50
    assert read_csv(path)[0][:3] == ["step", "n_buys", "n_sells"]


def test_simulate_functional_needs_z(capsys, tmp_path):
    code, _ = call(capsys, "simulate", "--model", UNIFORM, "--steps", 1000, "--collect", "functionals")
    assert code == EXIT_INVALID
    code, _ = call(capsys, "simulate", "--model", UNIFORM, "--steps", 1000, "--collect", "functionals",
                   "--z", 0.5, "--csv", tmp_path / "fn.csv")
    assert code == EXIT_OK


def test_figure1(capsys, tmp_path):
    path = tmp_path / "fig.csv"
    code, out = call(capsys, "figure1", "--steps", 2000, "--csv", path)
    assert code == EXIT_OK
    assert out["n_buys"] + out["n_sells"] > 0
    assert read_csv(path)[0] == ["x", "cumulative"]


def test_classify(capsys):
    code, out = call(capsys, "classify", "--model", TRANSIENT)
    assert code == EXIT_OK
    assert out["classification"] == "NotPositiveRecurrent"


def test_missing_file_is_an_io_error(capsys, tmp_path):
    code, _ = call(capsys, "solve", "--model", tmp_path / "nope.json")
    assert code == EXIT_IO


def test_malformed_model_is_invalid(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"interval": [1, 0], "demand": {"family": "uniform"}}))
    code, _ = call(capsys, "solve", "--model", path)
    assert code == EXIT_INVALID
    path.write_text("{not json")
    code, _ = call(capsys, "solve", "--model", path)
    assert code == EXIT_IO


def test_bad_arguments_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["solve"])
    assert exc.value.code == 2


def test_crosscheck_passes_and_detects_a_fault(capsys):
    code, out = call(capsys, "crosscheck", "--model", UNIFORM, "--grid", 2048, "--sim-steps", 100000)
    assert code == EXIT_OK and out["passed"]
    names = {c["name"] for c in out["checks"]}
    assert {"pointwise_identity", "generator_closure", "simulation_f_minus_max_z"} <= names
    code, out = call(capsys, "crosscheck", "--model", UNIFORM, "--grid", 2048, "--sim-steps", 0, "--inject-fault")
    assert code == EXIT_IDENTITY
    assert out["first_failure"] == "pointwise_identity"


def test_crosscheck_of_tick_model():
    res = crosscheck(str(MODELS / "tick6.json"), None, False, 0, 0, None)
    assert res["passed"]


@pytest.mark.skipif(shutil.which("luckock") is None, reason="console script not installed")
def test_console_script_help():
    out = subprocess.run(["luckock", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "crosscheck" in out.stdout


def test_module_help():
    out = subprocess.run([sys.executable, "-m", "luckock.cli", "simulate", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "--collect" in out.stdout
