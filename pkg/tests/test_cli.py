"""Config parsing, the pulsectl subcommands, and run artifacts."""

import dataclasses
import json

import numpy as np
import pytest
import yaml

from dotgate import cli
from dotgate.config import (
    ExperimentConfig,
    config_digest,
    config_from_dict,
    parse_config,
)
from dotgate.env import EnvConfig, GateEnv


def write_config(path, data):
    path.write_text(yaml.safe_dump(data))
    return str(path)


@pytest.fixture
def smoke_config(tmp_path):
    return write_config(
        tmp_path / "cfg.yaml",
        {
            "algorithm": "qlearning",
            "seed": 5,
            "output_dir": str(tmp_path / "run"),
            "td": {"episodes_max": 5, "target_mean_fidelity": 0.999999},
        },
    )


class TestParseConfig:
    def test_missing_algorithm_named(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", {"seed": 1})
        with pytest.raises(ValueError, match="algorithm"):
            parse_config(path)

    def test_minimal_config_gets_paper_defaults(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", {"algorithm": "ppo", "seed": 1})
        cfg = parse_config(path)
        assert cfg.ppo.gamma == 0.9
        assert cfg.ppo.clip_eps == 0.2
        assert cfg.env.u == (845.2, 845.2)
        assert cfg.env.ez == (18.4, 19.7)
        assert cfg.env.eps_init == (170.0, 70.0)

    def test_round_trip_digest_stable(self, tmp_path):
        path = write_config(
            tmp_path / "c.yaml",
            {"algorithm": "sarsa", "seed": 2, "td": {"gamma": 0.8}},
        )
        cfg = parse_config(path)
        again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
        # tuples round-trip as lists; digest is over the canonical dict
        assert config_digest(again) == config_digest(cfg)

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", {"algorithm": "ppo", "seed": 1,
                                                  "ppo": {"gama": 0.9}})
        with pytest.raises(ValueError, match="gama"):
            parse_config(path)

    def test_physics_section_lands_on_env(self, tmp_path):
        path = write_config(
            tmp_path / "c.yaml",
            {"algorithm": "ppo", "seed": 1, "physics": {"u": [800.0, 800.0]}},
        )
        assert parse_config(path).env.u == (800.0, 800.0)

    def test_bad_algorithm(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", {"algorithm": "cmaes", "seed": 1})
        with pytest.raises(ValueError, match="algorithm"):
            parse_config(path)

    def test_lambda_alias(self, tmp_path):
        path = write_config(
            tmp_path / "c.yaml",
            {"algorithm": "ppo", "seed": 1, "ppo": {"lambda": 0.9}},
        )
        assert parse_config(path).ppo.lam == 0.9


class TestTrain:
    def test_smoke_run_artifacts(self, smoke_config, tmp_path):
        assert cli.main(["train", smoke_config]) == 0
        run = tmp_path / "run"
        lines = (run / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 5
        record = json.loads(lines[0])
        assert record["seed"] == 5 and record["episode"] == 0
        manifest = json.loads((run / "manifest.json").read_text())
        assert manifest["seed"] == 5
        assert (run / "best_schedule.csv").exists()
        assert (run / "checkpoint.npz").exists()
        assert (run / "config.json").exists()
        assert cli.verify_manifest(run)

    def test_same_seed_identical_metrics(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            path = write_config(
                tmp_path / f"{name}.yaml",
                {
                    "algorithm": "sarsa",
                    "seed": 11,
                    "output_dir": str(tmp_path / name),
                    "td": {"episodes_max": 4, "target_mean_fidelity": 0.999999},
                },
            )
            assert cli.main(["train", path]) == 0
            outs.append((tmp_path / name / "metrics.jsonl").read_bytes())
        assert outs[0] == outs[1]

    def test_manifest_digest_detects_tampering(self, smoke_config, tmp_path):
        cli.main(["train", smoke_config])
        run = tmp_path / "run"
        data = (run / "config.json").read_bytes()
        (run / "config.json").write_bytes(data.replace(b"5", b"6", 1))
        assert not cli.verify_manifest(run)

    def test_output_dir_override(self, smoke_config, tmp_path):
        override = tmp_path / "elsewhere"
        assert cli.main(["train", smoke_config, "--output-dir", str(override)]) == 0
        assert (override / "manifest.json").exists()

    def test_output_dir_env_var(self, smoke_config, tmp_path, monkeypatch):
        override = tmp_path / "from_env"
        monkeypatch.setenv(cli.OUTPUT_DIR_ENV_VAR, str(override))
        assert cli.main(["train", smoke_config]) == 0
        assert (override / "manifest.json").exists()

    def test_replay_closes_the_loop(self, tmp_path):
        path = write_config(
            tmp_path / "ppo.yaml",
            {
                "algorithm": "ppo",
                "seed": 3,
                "output_dir": str(tmp_path / "run"),
                "ppo": {"n_envs": 2, "horizon": 60, "iterations_max": 10,
                        "epochs_per_iter": 2},
            },
        )
        assert cli.main(["train", path]) == 0
        run = tmp_path / "run"
        manifest = json.loads((run / "manifest.json").read_text())
        out = cli.run_replay(run / "best_schedule.csv", EnvConfig())
        assert out["final_fidelity"] == pytest.approx(
            manifest["result"]["best_fidelity"], abs=1e-9
        )

    def test_invalid_config_exits_nonzero_without_output(self, tmp_path):
        out_dir = tmp_path / "never"
        path = write_config(
            tmp_path / "bad.yaml",
            {"algorithm": "qlearning", "seed": 1, "output_dir": str(out_dir),
             "env": {"tun_init": 9.0}},
        )
        assert cli.main(["train", path]) == 1
        assert not out_dir.exists()


class TestValidate:
    def test_good_config(self, smoke_config):
        assert cli.main(["validate", smoke_config]) == 0

    def test_bad_config(self, tmp_path):
        path = write_config(tmp_path / "c.yaml", {"seed": 1})
        assert cli.main(["validate", path]) == 1

    def test_missing_file(self, tmp_path):
        assert cli.main(["validate", str(tmp_path / "nope.yaml")]) == 1


class TestReplay:
    def test_one_step_schedule_matches_environment(self, tmp_path):
        env = GateEnv()
        env.reset(0)
        res = env.step_discrete(0)
        path = tmp_path / "s.csv"
        env.export_schedule().to_csv(path)
        out = cli.run_replay(path, EnvConfig())
        assert out["final_fidelity"] == res.info["fidelity"]

    def test_empty_schedule_is_identity_fidelity(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("step,eps0_ghz,eps1_ghz,tunnel_ghz\n")
        out = cli.run_replay(path, EnvConfig())
        assert out["final_fidelity"] == pytest.approx(0.4, abs=1e-12)

    def test_sweep_finds_high_fidelity_duration(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("step,eps0_ghz,eps1_ghz,tunnel_ghz\n0,170,70,2.5\n")
        out = cli.run_replay(path, EnvConfig(), sweep_duration=60)
        assert out["best_fidelity"] > 0.99
        assert 1 <= out["best_duration_ns"] <= 60

    def test_out_of_bounds_schedule_rejected(self, tmp_path):
        path = tmp_path / "s.csv"
        path.write_text("step,eps0_ghz,eps1_ghz,tunnel_ghz\n0,999,70,2.5\n")
        with pytest.raises(ValueError, match="eps0"):
            cli.run_replay(path, EnvConfig())

    def test_cli_replay_command(self, tmp_path, capsys):
        path = tmp_path / "s.csv"
        path.write_text("step,eps0_ghz,eps1_ghz,tunnel_ghz\n0,170,70,2.5\n")
        assert cli.main(["replay", str(path), "--sweep-duration", "30"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert "best_fidelity" in out


class TestExportPlots:
    def test_trailing_mean_rows(self, tmp_path):
        path = write_config(
            tmp_path / "c.yaml",
            {
                "algorithm": "qlearning",
                "seed": 7,
                "output_dir": str(tmp_path / "run"),
                "td": {"episodes_max": 14, "target_mean_fidelity": 0.999999},
            },
        )
        cli.main(["train", path])
        run = tmp_path / "run"
        lines = (run / "fidelity_vs_episode.tsv").read_text().splitlines()
        assert len(lines) - 1 == 14 - 9
        for name in cli.PLOT_FILES:
            assert (run / name).exists()

    def test_detuning_constant_for_constant_schedule(self, tmp_path):
        run = tmp_path / "run"
        run.mkdir()
        (run / "metrics.jsonl").write_text(
            json.dumps({"episode": 0, "final_fidelity": 0.5}) + "\n"
        )
        (run / "best_schedule.csv").write_text(
            "step,eps0_ghz,eps1_ghz,tunnel_ghz\n"
            + "".join(f"{k},170,70,2.5\n" for k in range(5))
        )
        cli.export_plots(run)
        lines = (run / "detuning_vs_time.tsv").read_text().splitlines()[1:]
        assert all(line.split("\t")[1] == "100" for line in lines)

    def test_reexport_bitwise_identical(self, smoke_config, tmp_path):
        cli.main(["train", smoke_config])
        run = tmp_path / "run"
        before = {name: (run / name).read_bytes() for name in cli.PLOT_FILES}
        assert cli.main(["export-plots", str(run)]) == 0
        after = {name: (run / name).read_bytes() for name in cli.PLOT_FILES}
        assert before == after

    def test_missing_run_artifacts(self, tmp_path):
        assert cli.main(["export-plots", str(tmp_path)]) == 1
