import json
from pathlib import Path

import pytest

from dexgrasp.config import (
    RESOLVED_NAME,
    check_key,
    load_resolved_config,
    load_run_config,
    parse_assignments,
    write_resolved_config,
)
from dexgrasp.main import main
from dexgrasp.validate import check_manifest

DESK_CFG = Path(__file__).resolve().parents[1] / "cfgs" / "desk.cfg"


class TestRunConfig:
    def test_defaults(self):
        config = load_run_config(env={})
        assert config.sim.image_size == 96
        assert config.planner.backend == "oracle"
        assert config.planner.endpoint is None

    def test_file_then_overrides(self):
        config = load_run_config(DESK_CFG, ["training.lr = 0.01", "controller.dit.layers=2"], env={})
        assert config.training.lr == 0.01
        assert config.controller.dit.layers == 2
        assert config.controller.dit.heads == 4
        assert config.training.betas == (0.95, 0.999)

    def test_dict_overrides(self):
        config = load_run_config(overrides={"eval.k_max": 5}, env={})
        assert config.eval.k_max == 5

    def test_unknown_keys(self):
        with pytest.raises(ValueError):
            check_key("training.learning_rate")
        with pytest.raises(ValueError):
            check_key("training.lr.value")
        with pytest.raises(ValueError):
            load_run_config(overrides=["nosuch.key = 1"], env={})
        check_key("controller.head_encoder.patch_side")

    def test_malformed_line(self, tmp_path):
        with pytest.raises(ValueError, match="expected 'key = value'"):
            parse_assignments(["# comment", "", "training.lr 0.1"], "x.cfg")

    def test_value_parsing(self):
        parsed = parse_assignments(['planner.backend = "chat"', "planner.model = my-model", "training.immiscible = false"])
        assert parsed == {"planner.backend": "chat", "planner.model": "my-model", "training.immiscible": False}

    def test_env_fills_unset_endpoints(self):
        env = {"PLANNER_ENDPOINT": "http://planner.local", "PERCEPTION_ENDPOINT": "http://perception.local",
               "PLANNER_TIMEOUT_S": "5"}
        config = load_run_config(env=env)
        assert config.planner.endpoint == "http://planner.local"
        assert config.planner.timeout_s == 5.0
        assert config.perception.endpoint == "http://perception.local"

        pinned = load_run_config(overrides=['planner.endpoint = "http://pinned"'], env=env)
        assert pinned.planner.endpoint == "http://pinned"

    def test_resolved_config_round_trip(self, tmp_path):
        config = load_run_config(DESK_CFG, env={})
        path = write_resolved_config(tmp_path, config, "train", {"data": "data/"})
        assert path.name == RESOLVED_NAME
        with open(path) as f:
            payload = json.load(f)
        assert payload["command"] == "train"
        assert payload["data"] == "data/"
        assert payload["version"]
        assert load_resolved_config(tmp_path) == config


class TestCli:
    def test_bench_schedule(self, tmp_path):
        assert main(["bench", "schedule", "--out", str(tmp_path)]) == 0
        with open(tmp_path / "bench_schedule.json") as f:
            results = json.load(f)
        assert results["max_unit_error"] < 1e-6
        assert results["alpha_bar_strictly_decreasing"]

    def test_bench_writes_resolved_config(self, tmp_path):
        assert main(["bench", "schedule", "--set", "eval.k_max=5", "--out", str(tmp_path)]) == 0
        with open(tmp_path / RESOLVED_NAME) as f:
            payload = json.load(f)
        assert payload["command"] == "bench schedule"
        assert payload["version"]
        assert load_resolved_config(tmp_path).eval.k_max == 5

    def test_bench_assignment(self, tmp_path):
        assert main(["bench", "assignment", "--instances", "20", "--batch", "4", "--out", str(tmp_path)]) == 0
        with open(tmp_path / "bench_assignment.json") as f:
            results = json.load(f)
        assert results["mismatches"] == 0
        assert results["worse_than_identity"] == 0

    def test_run_with_expert(self, tmp_path, capsys):
        code = main(["run", "--prompt", "clear the table", "--expert", "--objects", "3", "--scene-seed", "2",
                     "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "transcript.json").exists()
        assert (tmp_path / RESOLVED_NAME).exists()
        assert "Outcome:" in capsys.readouterr().out

    def test_bad_override_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--prompt", "x", "--expert", "--set", "nosuch=1", "--out", str(tmp_path)])
        assert exc.value.code == 2

    @pytest.mark.parametrize("argv", [
        ["eval", "--suite", "suites/seen"],
        ["run", "--prompt", "clear the table"],
        ["analyze", "attention"],
    ])
    def test_missing_controller_is_usage_error(self, tmp_path, capsys, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv + ["--out", str(tmp_path / "out")])
        assert exc.value.code == 2
        assert "usage:" in capsys.readouterr().err
        assert not (tmp_path / "out").exists()

    def test_ckpt_and_expert_are_exclusive(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--prompt", "x", "--expert", "--ckpt", "ckpt", "--out", str(tmp_path)])
        assert exc.value.code == 2

    def test_collect_refuses_existing_dataset(self, tmp_path, capsys):
        args = ["collect", "--n", "1", "--seed", "4", "--out", str(tmp_path)]
        assert main(args) == 0
        assert main(args) == 1
        assert "already holds 1 episodes" in capsys.readouterr().out
        assert main(args + ["--overwrite"]) == 0


class TestValidate:
    def test_manifest_matches(self, recorded_dataset):
        assert check_manifest(recorded_dataset)
