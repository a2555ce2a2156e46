import pytest

from manibench.config import ConfigError, RunConfig, apply_overrides, parse_config


def test_empty_document_gives_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.episode.seed == 0
    assert cfg.ppo.num_envs == 64
    assert cfg.ppo.learning_rate == 1e-3


def test_seed_override_propagates():
    cfg = parse_config('{"seed": 7}')
    assert cfg.seed == 7
    assert cfg.episode.seed == 7
    assert cfg.ppo.seed == 7


def test_nested_section_overrides():
    cfg = parse_config('{"ppo": {"iterations": 12, "num_envs": 8}, '
                       '"episode": {"max_steps": 50}}')
    assert cfg.ppo.iterations == 12
    assert cfg.ppo.num_envs == 8
    assert cfg.episode.max_steps == 50


def test_misspelled_key_named_in_error():
    with pytest.raises(ConfigError, match="lerning_rate"):
        parse_config('{"ppo": {"lerning_rate": 0.01}}')


def test_unknown_top_level_key():
    with pytest.raises(ConfigError, match="unknown key 'robo'"):
        parse_config('{"robo": "gripper-bot"}')


def test_syntax_error_reports_line_and_column():
    with pytest.raises(ConfigError, match=r"line \d+, column \d+"):
        parse_config('{"seed": 7,\n "bad\n}')


def test_type_errors():
    with pytest.raises(ConfigError, match="integer"):
        parse_config('{"seed": "seven"}')
    with pytest.raises(ConfigError, match="boolean"):
        parse_config('{"fixed_base": 1}')
    with pytest.raises(ConfigError, match="number"):
        parse_config('{"ppo": {"learning_rate": "fast"}}')


def test_range_fields_parse_to_tuples():
    cfg = parse_config('{"episode": {"base_offset_range": [0.8, 0.9]}}')
    assert cfg.episode.base_offset_range == (0.8, 0.9)


def test_invalid_robot_task_skill():
    with pytest.raises(ConfigError, match="unknown robot"):
        parse_config('{"robot": "arm-bot"}')
    with pytest.raises(ConfigError, match="unknown task"):
        parse_config('{"task": "sofa"}')
    with pytest.raises(ConfigError, match="not valid"):
        parse_config('{"task": "laptop", "skill": "pick"}')


def test_fixed_base_propagates_to_episode():
    cfg = parse_config('{"fixed_base": true}')
    assert cfg.episode.fixed_base is True


def test_apply_overrides():
    cfg = parse_config('{"seed": 1}')
    cfg = apply_overrides(cfg, seed=9, robot="hand-bot", workers=4)
    assert cfg.seed == 9
    assert cfg.episode.seed == 9
    assert cfg.ppo.seed == 9
    assert cfg.robot == "hand-bot"
    assert cfg.ppo.workers == 4


def test_apply_overrides_none_is_noop():
    cfg = parse_config('{"seed": 3}')
    assert apply_overrides(cfg, seed=None, out=None) == cfg
