import json

import numpy as np
import pytest

from fairdice.experiments import (
    OFFSET_GRID,
    ExperimentConfig,
    ResultRow,
    cmd_counterexample,
    perturb_grid_heatmaps,
    read_rows_csv,
    run_experiment,
    write_rows_csv,
)

HEADER = "experiment,seed,alpha,beta,sigma,ret_1,ret_2,ret_3,nsw,util,jain,df,iters,converged"


def test_counterexample_checks_all_pass():
    res = cmd_counterexample()
    assert res.passed, [c.line() for c in res.checks if not c.passed]
    assert len(res.checks) == 11
    assert all(r.experiment.startswith("counterexample/") for r in res.rows)


def test_config_defaults_and_validation():
    cfg = ExperimentConfig.defaults("random-sweep")
    assert cfg.experiment == "random_sweep"
    assert len(cfg.seeds) == 50 and cfg.reward_scale == 1.0
    fr = ExperimentConfig.defaults("four_room")
    assert fr.reward_scale == pytest.approx(20.0)
    with pytest.raises(ValueError):
        ExperimentConfig.defaults("nope")
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"seeds": [0], "bogus": 1}, "four_room")
    with pytest.raises(ValueError):
        ExperimentConfig.defaults("random_sweep", seeds=[1, 1])
    with pytest.raises(ValueError):
        ExperimentConfig.defaults("random_sweep", beta_grid=[0.0])
    with pytest.raises(ValueError):
        ExperimentConfig.defaults("perturb_mu", sigma_grid=[0.1])
    with pytest.raises(ValueError):
        ExperimentConfig.defaults("perturb_grid", offset_grid=[0.5, 2.0])
    assert 1.0 in OFFSET_GRID


def _small_sweep():
    return ExperimentConfig.defaults("random_sweep", seeds=[0, 1], alpha_grid=[0.0, 1.0],
                                     beta_grid=[0.1, 10.0])


def test_sweep_csv_is_reproducible(tmp_path):
    a = run_experiment(_small_sweep()).write(tmp_path / "a")
    b = run_experiment(_small_sweep()).write(tmp_path / "b")
    text = (a / "results.csv").read_text()
    assert text == (b / "results.csv").read_text()
    assert text.splitlines()[0] == HEADER
    # behavior and data-policy rows carry empty alpha/beta/sigma
    assert "random_sweep/behavior,0,,,," in text
    meta = json.loads((a / "meta.json").read_text())
    assert meta["failures"] == [] and "1.96" in meta["ci_method"]
    assert (a / "summary.csv").exists() and (a / "config-echo.json").exists()
    assert len(list((a / "solutions").glob("*.json"))) == 8


def test_rows_csv_round_trip(tmp_path):
    rows = [ResultRow("x/a", 1, None, 0.5, None, (0.1, 0.2, 0.3), -5.0, 0.6, 0.9, 0.01, 7, False),
            ResultRow("x/a", 0, 1.0, 0.5, 0.2, (0.1, 0.2, 0.3), -4.0, 0.6, 0.9)]
    write_rows_csv(rows, tmp_path / "r.csv")
    back = read_rows_csv(tmp_path / "r.csv")
    assert back == sorted(rows, key=ResultRow.sort_key)


def test_non_finite_rows_are_rejected(tmp_path):
    row = ResultRow("x", 0, None, None, None, (np.nan,), 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        write_rows_csv([row], tmp_path / "r.csv")


def test_summary_ci():
    res = run_experiment(_small_sweep())
    beh = [e for e in res.summary() if e["experiment"] == "random_sweep/behavior"][0]
    nsw = [r.nsw for r in res.select("random_sweep/behavior")]
    assert beh["n"] == 2
    assert beh["nsw"] == pytest.approx(np.mean(nsw))
    assert beh["nsw_ci"] == pytest.approx(1.96 * np.std(nsw, ddof=1) / np.sqrt(2))


def test_perturb_mu_sigma_zero_is_unperturbed():
    cfg = ExperimentConfig.defaults("perturb_mu", seeds=[3], sigma_grid=[0.0, 0.5])
    res = run_experiment(cfg)
    assert [r.sigma for r in res.rows] == [0.0, 0.5]
    assert res.tables["clamp_events"][0] == {"sigma": 0.0, "clamped": 0}


@pytest.mark.slow
def test_four_room_and_grid_single_seed(tmp_path):
    fr = run_experiment(ExperimentConfig.defaults("four_room", seeds=[0], objectives=[3]))
    labels = {r.experiment for r in fr.rows}
    assert labels == {"four_room/behavior", "four_room/utilitarian", "four_room/fairdice_nsw"}
    out = fr.write(tmp_path / "fr")
    assert (out / "goal_visitation.csv").exists() and (out / "table.csv").exists()

    grid = run_experiment(ExperimentConfig.defaults("perturb_grid", seeds=[0],
                                                    offset_grid=[0.5, 1.0, 2.0]))
    maps = perturb_grid_heatmaps(grid)
    assert maps["nsw"].shape == (3, 3)
    assert set(maps) == {"ret_1", "ret_2", "ret_3", "nsw", "util", "jain"}
