import json

import pytest

from manibench.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_no_command_is_usage_error(capsys):
    code, _, err = run_cli(capsys)
    assert code == 2
    assert "usage" in err


def test_unknown_command_exits_two(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_eval_prints_success_rate_line(capsys):
    code, out, _ = run_cli(capsys, "eval", "--task", "laptop", "--skill", "open",
                           "--episodes", "3", "--seed", "5")
    assert code == 0
    line = [l for l in out.splitlines() if l.startswith("success_rate=")]
    assert len(line) == 1
    assert float(line[0].split("=")[1]) == 1.0  # scripted oracle


def test_eval_same_invocation_identical(capsys):
    _, out1, _ = run_cli(capsys, "eval", "--task", "holistic", "--skill", "pick",
                         "--episodes", "2", "--seed", "3")
    _, out2, _ = run_cli(capsys, "eval", "--task", "holistic", "--skill", "pick",
                         "--episodes", "2", "--seed", "3")
    assert out1 == out2


def test_bad_config_exits_two(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"lerning_rate": 1}')
    code, _, err = run_cli(capsys, "eval", "--config", str(cfg))
    assert code == 2
    assert "lerning_rate" in err


def test_gen_data_stats_replay_round_trip(tmp_path, capsys):
    out_dir = tmp_path / "data"
    code, out, _ = run_cli(capsys, "gen-data", "--task", "laptop", "--skill", "open",
                           "--out", str(out_dir), "--seed", "11",
                           "--config", str(_cfg(tmp_path, {"trajectories": 2})))
    assert code == 0
    assert "recorded=2" in out

    code, out, _ = run_cli(capsys, "stats", "--out", str(out_dir))
    assert code == 0
    assert "laptop" in out and "open" in out

    manifest = json.loads((out_dir / "manifest.json").read_text())
    rel = manifest["tasks"][0]["files"][0]
    code, out, _ = run_cli(capsys, "replay", str(out_dir / rel))
    assert code == 0
    assert "replay_ok" in out


def _cfg(tmp_path, payload):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(payload))
    return path


def test_gen_data_deterministic_bytes(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        out_dir = tmp_path / name
        code, _, _ = run_cli(capsys, "gen-data", "--task", "holistic",
                             "--skill", "pick", "--out", str(out_dir),
                             "--seed", "2",
                             "--config", str(_cfg(tmp_path, {"trajectories": 1})))
        assert code == 0
        manifest = json.loads((out_dir / "manifest.json").read_text())
        rel = manifest["tasks"][0]["files"][0]
        outs.append((out_dir / rel).read_bytes())
    assert outs[0] == outs[1]


def test_replay_missing_file_runtime_error(tmp_path, capsys):
    code, _, err = run_cli(capsys, "replay", str(tmp_path / "nope.mmt"))
    assert code == 1
    assert "error" in err


def test_train_smoke_writes_checkpoint_and_curve(tmp_path, capsys):
    cfg = _cfg(tmp_path, {
        "ppo": {"iterations": 2, "num_envs": 2, "rollout_horizon": 4},
        "episode": {"max_steps": 10},
    })
    out_dir = tmp_path / "run"
    code, out, _ = run_cli(capsys, "train", "--config", str(cfg),
                           "--out", str(out_dir), "--seed", "1")
    assert code == 0
    assert (out_dir / "checkpoint.mmrl").is_file()
    curve = (out_dir / "learning_curve.tsv").read_text().splitlines()
    assert curve[0] == "iteration\tmean_return\tsuccess_rate"
    assert len(curve) == 3

    from manibench.rl import load_checkpoint
    policy, _, meta = load_checkpoint(out_dir / "checkpoint.mmrl")
    assert meta["robot"] == "gripper-bot"


def test_workers_env_var_override(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("MANIBENCH_WORKERS", "2")
    code, out, _ = run_cli(capsys, "eval", "--task", "laptop", "--skill", "open",
                           "--episodes", "1", "--seed", "0", "--workers", "7")
    assert code == 0  # env var wins silently; eval is single-env anyway
