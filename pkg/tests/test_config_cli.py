import json

import pytest
from conftest import small_loop_config

from headneck_al import cli
from headneck_al.active_loop import run_loop
from headneck_al.config import MODEL_KEYS, ConfigError, config_from_dict, load_config, save_config
from headneck_al.data import read_samples_csv


def test_defaults_and_round_trip(tmp_path):
    cfg = load_config()
    save_config(tmp_path / "c.json", cfg)
    again = load_config(tmp_path / "c.json")
    assert again.to_dict() == {**cfg.to_dict(), "model": again.model}
    for key in MODEL_KEYS:
        assert getattr(again.model_params(), key) == getattr(cfg.model_params(), key)


@pytest.mark.parametrize("data", [
    {"bogus": {}},
    {"task": {"horizon": 3}},
    {"model": {"mass": 1}},
    {"task": {"h": 0.03}},
    {"loop": {"iterations": 0}},
    {"train": {"learning_rate": -1.0}},
    {"task": []},
])
def test_invalid_configs(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_invalid_json_file(tmp_path):
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "bad.json")


def test_overrides_reach_typed_views():
    cfg = config_from_dict({"model": {"head_mass": 5.0}, "loop": {"base_seed": 7}, "task": {"tau_bound": 20.0}})
    assert cfg.model_params().head_mass == 5.0
    assert cfg.train_config().seed == 7 and cfg.split_spec().seed == 7 and cfg.lhs_spec().seed == 7
    assert cfg.ocp_spec().tau_bound == 20.0


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_help_lists_every_command(capsys):
    code, out, _ = run_cli(capsys, "--help")
    assert code == 0
    for name in ("prelim", "loop", "solve", "replay", "train", "eval", "export-plots"):
        assert name in out


def test_usage_errors(capsys, tmp_path):
    code, _, err = run_cli(capsys, "loop", "--pool", str(tmp_path / "nothing"))
    assert code == 2 and json.loads(err)["error"] == "usage"
    code, _, _ = run_cli(capsys, "frobnicate")
    assert code == 2
    (tmp_path / "c.json").write_text('{"loop": {"iterations": -1}}')
    code, _, err = run_cli(capsys, "prelim", "--out", str(tmp_path / "p"), "--config", str(tmp_path / "c.json"))
    assert code == 2 and "iterations" in json.loads(err)["message"]


def test_runtime_error_exit_code(capsys, tmp_path):
    code, _, err = run_cli(capsys, "replay", "--trajectory", str(tmp_path / "missing.csv"), "--out",
                           str(tmp_path / "x.csv"))
    assert code == 1 and json.loads(err)["error"] == "runtime"


def test_prelim_solve_replay_eval(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"aux": {"K": 802}, "task": {"h": 0.05}, "bed": {"n_u": 10, "n_w": 10}}))
    code, out, _ = run_cli(capsys, "prelim", "--out", str(tmp_path / "pool"), "--config", str(cfg))
    assert code == 0 and out.strip() == "802"
    assert (tmp_path / "pool" / "prelim-001.csv").exists()
    code, _, _ = run_cli(capsys, "prelim", "--out", str(tmp_path / "pool"), "--config", str(cfg))
    assert code == 2
    code, out, _ = run_cli(capsys, "solve", "--no-contact", "--out", str(tmp_path / "t.csv"), "--config", str(cfg))
    assert code == 0 and json.loads(out)["converged"]
    code, out, _ = run_cli(capsys, "replay", "--trajectory", str(tmp_path / "t.csv"), "--out",
                           str(tmp_path / "s.csv"), "--id", "demo", "--config", str(cfg))
    assert code == 0 and out.strip() == "401"
    assert set(read_samples_csv(tmp_path / "s.csv").traj_id) == {"demo"}
    code, out, _ = run_cli(capsys, "eval", "--truth", str(tmp_path / "s.csv"), "--pred", str(tmp_path / "s.csv"))
    assert code == 0 and json.loads(out) == {"force_rmse": 0.0, "moment_rmse": 0.0}


def test_train_and_export_plots(capsys, tmp_path):
    loop_cfg = small_loop_config(tmp_path, iterations=1)
    run_loop(loop_cfg)
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"task": {"h": 0.05}, "bed": {"n_u": 12, "n_w": 12},
                               "train": {"max_epochs": 3}}))
    code, out, _ = run_cli(capsys, "train", "--pool", str(loop_cfg.pool_dir), "--out", str(tmp_path / "m"),
                           "--config", str(cfg))
    assert code == 0 and {"force_test_rmse", "moment_test_rmse"} <= set(json.loads(out))
    code, out, _ = run_cli(capsys, "eval", "--truth", str(loop_cfg.pool_dir / "oracle-0001.csv"),
                           "--force-model", str(tmp_path / "m" / "force.json"),
                           "--moment-model", str(tmp_path / "m" / "moment.json"))
    assert code == 0 and json.loads(out)["force_rmse"] >= 0
    code, _, _ = run_cli(capsys, "export-plots", "--run", str(loop_cfg.run_dir), "--out", str(tmp_path / "plots"),
                         "--config", str(cfg))
    assert code == 0
    for name in ("trajectory.csv", "wrench_prediction.csv", "oracle_wrench.csv", "rmse_history.csv"):
        assert (tmp_path / "plots" / name).exists()


def test_loop_command_resume_guard(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"aux": {"K": 802}, "task": {"h": 0.05}, "bed": {"n_u": 8, "n_w": 8},
                               "train": {"max_epochs": 2}, "solver": {"max_outer": 4},
                               "loop": {"iterations": 1, "record_wall_time": False}}))
    assert run_cli(capsys, "prelim", "--out", str(tmp_path / "pool"), "--config", str(cfg))[0] == 0
    code, out, _ = run_cli(capsys, "loop", "--pool", str(tmp_path / "pool"), "--config", str(cfg))
    assert code == 0 and (tmp_path / "run" / "history.csv").exists()
    code, _, err = run_cli(capsys, "loop", "--pool", str(tmp_path / "pool"), "--config", str(cfg))
    assert code == 2 and "--resume" in json.loads(err)["message"]
    code, _, _ = run_cli(capsys, "loop", "--pool", str(tmp_path / "pool"), "--config", str(cfg), "--resume",
                         "--iterations", "2")
    assert code == 0
    assert len((tmp_path / "run" / "history.csv").read_text().splitlines()) == 3
