import json

import numpy as np
import pytest

from fairdice.cli import main

from conftest import random_momdp


@pytest.fixture()
def env_file(tmp_path):
    path = tmp_path / "env.json"
    assert main(["gen-env", "random-momdp", "--seed", "1", "--out", str(path)]) == 0
    return path


def test_full_pipeline(tmp_path, env_file, capsys):
    data = tmp_path / "data.json"
    sol = tmp_path / "sol.json"
    assert main(["collect", "--env", str(env_file), "--policy", "optimality:0.5", "--n", "50",
                 "--horizon", "30", "--out", str(data)]) == 0
    assert main(["solve", "--env", str(env_file), "--data", str(data), "--beta", "0.5",
                 "--out", str(sol)]) == 0
    doc = json.loads(sol.read_text())
    assert doc["config"]["beta"] == 0.5 and doc["config"]["e_mode"] == "mle_model"
    capsys.readouterr()
    assert main(["eval", "--env", str(env_file), "--policy", str(sol)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert {"returns", "nsw", "util", "jain"} <= set(out)


def test_four_room_uniform_eval(tmp_path, capsys):
    env = tmp_path / "fr.json"
    assert main(["gen-env", "four-room", "--out", str(env)]) == 0
    capsys.readouterr()
    assert main(["eval", "--env", str(env), "--policy", "uniform", "--unnormalized"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["nsw"] == pytest.approx(-16.37142608800247, abs=1e-6)


@pytest.mark.parametrize("variant,d0", [("p1", 7 / 12), ("p2reg", 0.66093), ("p3reg", 0.66093)])
def test_oracle_worked_examples(capsys, variant, d0):
    assert main(["oracle", "--problem", "appendix-b", "--variant", variant]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["converged"]
    assert out["d"][0][0] == pytest.approx(d0, abs=1e-5)


def test_oracle_problem_file(tmp_path, capsys):
    m = random_momdp(np.random.default_rng(0), 4, 2, 2, 0.9)
    problem = {"momdp": m.to_dict(), "d_data": [[1.0, 1.0]] * 4, "beta": 1.0}
    path = tmp_path / "prob.json"
    path.write_text(json.dumps(problem))
    assert main(["oracle", "--problem", str(path), "--variant", "p2reg"]) == 0
    assert json.loads(capsys.readouterr().out)["converged"]


def test_experiment_counterexample(tmp_path, capsys):
    assert main(["experiment", "counterexample", "--out", str(tmp_path / "ce")]) == 0
    out = capsys.readouterr().out
    assert out.count("[PASS]") == 11
    assert (tmp_path / "ce" / "results.csv").exists()


def test_experiment_with_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seeds": [0], "alpha_grid": [1.0], "beta_grid": [1.0]}))
    assert main(["experiment", "random-sweep", "--config", str(cfg),
                 "--out", str(tmp_path / "rs")]) == 0
    lines = (tmp_path / "rs" / "results.csv").read_text().splitlines()
    assert len(lines) == 4


def test_errors_exit_with_code_two(tmp_path, capsys):
    assert main(["eval", "--env", str(tmp_path / "missing.json"), "--policy", "uniform"]) == 2
    bad = tmp_path / "cfg.json"
    bad.write_text(json.dumps({"nonsense": 1}))
    assert main(["experiment", "perturb-mu", "--config", str(bad), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        main(["collect"])
