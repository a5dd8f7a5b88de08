import json
from pathlib import Path

import pytest

from conftest import small_train_config
from ocugan.cli import main, resolve_config
from ocugan.config import config_to_dict, save_config
from ocugan.errors import ValidationError


def _write_config(tmp_path, toy_root, **kw) -> Path:
    cfg = small_train_config(toy_root, **kw)
    path = tmp_path / "config.json"
    save_config(cfg, path)
    return path


class TestExitCodes:
    def test_datagen_succeeds(self, tmp_path, capsys):
        rc = main(["datagen", "--out", str(tmp_path / "d"), "--per-domain", "4", "--seed", "7"])
        assert rc == 0
        assert len(list((tmp_path / "d").rglob("*.png"))) == 12

    def test_unknown_subcommand(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_unknown_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["datagen", "--out", "x", "--per-domain", "1", "--what-is-this", "1"])
        assert exc.value.code == 1

    def test_no_subcommand_prints_usage(self, capsys):
        assert main([]) == 1

    def test_missing_config_names_path(self, capsys):
        rc = main(["train", "--config", "missing.file"])
        assert rc == 1
        assert "missing.file" in capsys.readouterr().err

    def test_validation_error_exit_one(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"total_steps": 2, "nonsense_key": 1}))
        assert main(["train", "--config", str(bad)]) == 1
        assert "nonsense_key" in capsys.readouterr().err


class TestResolveConfig:
    def test_flags_override_file(self, tmp_path, toy_root):
        path = _write_config(tmp_path, toy_root, batch_size=32)
        cfg = resolve_config(path, {"batch_size": 16})
        assert cfg.batch_size == 16

    def test_missing_total_steps_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"batch_size": 8}))
        with pytest.raises(ValidationError, match="total_steps"):
            resolve_config(path)

    def test_unknown_nested_key_named(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"total_steps": 1, "diffusion": {"t_maximum": 3}}))
        with pytest.raises(ValidationError, match="diffusion.t_maximum"):
            resolve_config(path)

    def test_round_trip_stable(self, tmp_path, toy_root):
        path = _write_config(tmp_path, toy_root, total_steps=5, seed=13)
        cfg = resolve_config(path)
        rt = tmp_path / "rt.json"
        save_config(cfg, rt)
        assert resolve_config(rt) == cfg
        assert json.loads(rt.read_text()) == config_to_dict(cfg)


class TestEndToEnd:
    def test_train_generate_evaluate(self, tmp_path, toy_root, capsys):
        config_path = _write_config(tmp_path, toy_root, total_steps=4, eval_interval=2)
        run_dir = tmp_path / "run"
        rc = main(["train", "--config", str(config_path), "--run-dir", str(run_dir)])
        assert rc == 0
        run_meta = json.loads((run_dir / "run.json").read_text())
        assert run_meta["seed"] == 0 and "config" in run_meta and "code_version" in run_meta
        ckpt = run_dir / "checkpoints" / "step_000004.npz"
        assert ckpt.exists()
        assert (run_dir / "metrics" / "metrics.jsonl").exists()
        assert (run_dir / "samples" / "step_000002.png").exists()

        out = tmp_path / "translated"
        rc = main(["generate", "--ckpt", str(ckpt), "--source-dir", str(Path(toy_root) / "bonafide"),
                   "--source-domain", "0", "--target-domain", "1", "--out", str(out), "--count", "6"])
        assert rc == 0
        assert len(list(out.glob("*.png"))) == 6

        rc = main(["evaluate", "--real", str(toy_root), "--synth", str(toy_root),
                   "--out", str(tmp_path / "rep")])
        assert rc == 0
        report = json.loads((tmp_path / "rep" / "report.json").read_text())
        assert report["average_fid"] < 1e-6

    def test_run_reproducible_from_run_json(self, tmp_path, toy_root):
        config_path = _write_config(tmp_path, toy_root, total_steps=3, seed=6)
        run_a = tmp_path / "a"
        assert main(["train", "--config", str(config_path), "--run-dir", str(run_a)]) == 0
        # re-execute purely from the captured run.json
        captured = json.loads((run_a / "run.json").read_text())["config"]
        replay_cfg = tmp_path / "replay.json"
        replay_cfg.write_text(json.dumps(captured))
        run_b = tmp_path / "b"
        assert main(["train", "--config", str(replay_cfg), "--run-dir", str(run_b)]) == 0

        def metrics(run):
            recs = [json.loads(l) for l in (run / "metrics" / "metrics.jsonl").read_text().splitlines()]
            for r in recs:
                r.pop("wall_time_s")
            return recs

        assert metrics(run_a) == metrics(run_b)

    def test_pad_bench_cli(self, tmp_path, toy_root, capsys):
        cfg = {"data_root": str(toy_root),
               "detector": {"blocks": 2, "width": 8, "epochs": 1, "seed": 0},
               "out_dir": str(tmp_path / "padrep")}
        path = tmp_path / "pad.json"
        path.write_text(json.dumps(cfg))
        assert main(["pad-bench", "--config", str(path)]) == 0
        assert (tmp_path / "padrep" / "pad_report.json").exists()
        assert "Experiment-0" in capsys.readouterr().out

    def test_pad_bench_unknown_key(self, tmp_path, capsys):
        path = tmp_path / "pad.json"
        path.write_text(json.dumps({"data_root": "x", "bogus": 1}))
        assert main(["pad-bench", "--config", str(path)]) == 1
