import json
import os

from click.testing import CliRunner

from momptrack.cli import main


def _cfg_flags(out_dir):
    return [
        "--n-trajectories", "1", "--duration-s", "0.015",
        "--bs-nx", "8", "--bs-ny", "8", "--veh-nx", "6", "--veh-ny", "6",
        "--m-track", "8", "--m-initial", "24", "--d-omega-deg", "0.7",
        "--d-tau-ns", "0.05", "--n-est", "3", "--c-window", "3", "--stride", "4",
        "--out-dir", out_dir,
    ]


class TestCli:
    def test_scene_gen(self, tmp_path):
        out = str(tmp_path / "scene.json")
        result = CliRunner().invoke(main, ["scene", "gen", "--out", out])
        assert result.exit_code == 0, result.output
        assert os.path.exists(out)
        assert json.loads(result.output)["lanes"] == 4

    def test_track_requires_seed(self, tmp_path):
        result = CliRunner().invoke(main, ["track", "run"])
        assert result.exit_code != 0
        assert "seed" in result.output.lower()

    def test_track_dataset_eval_flow(self, tmp_path):
        out = str(tmp_path / "run")
        runner = CliRunner()
        r = runner.invoke(main, ["track", "run", "--seed", "5", *_cfg_flags(out)])
        assert r.exit_code == 0, r.output
        assert json.loads(r.output)["frames"] == 30
        r = runner.invoke(main, ["dataset", "export", "--run-dir", out,
                                 "--c-window", "3", "--stride", "4"])
        assert r.exit_code == 0, r.output
        assert json.loads(r.output)["train"] > 0
        r = runner.invoke(main, ["eval", "report", "--run-dir", out])
        assert r.exit_code == 0, r.output
        assert os.path.exists(os.path.join(out, "report.json"))
        r = runner.invoke(main, ["eval", "cdf", "--run-dir", out])
        assert r.exit_code == 0, r.output
        assert os.path.exists(os.path.join(out, "cdf.csv"))

    def test_config_file_overrides_flags(self, tmp_path):
        out_flag = str(tmp_path / "flag_run")
        out_file = str(tmp_path / "file_run")
        cfg_path = str(tmp_path / "cfg.json")
        with open(cfg_path, "w") as fh:
            json.dump({"out_dir": out_file, "n_trajectories": 1, "duration_s": 0.015,
                       "bs_nx": 8, "bs_ny": 8, "veh_nx": 6, "veh_ny": 6,
                       "m_track": 8, "m_initial": 24, "d_omega_deg": 0.7,
                       "d_tau_ns": 0.05, "n_est": 3}, fh)
        r = CliRunner().invoke(
            main,
            ["track", "run", "--seed", "5", *_cfg_flags(out_flag), "--config", cfg_path],
        )
        assert r.exit_code == 0, r.output
        # the file's out_dir wins over the flag
        assert os.path.exists(os.path.join(out_file, "traj_000"))
        assert not os.path.exists(out_flag)
